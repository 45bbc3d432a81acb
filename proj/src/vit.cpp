#include "vmb/vit.hpp"

#include <cmath>

namespace vmb {

void ViTConfig::validate() const {
    if (depth < 0 || embed_dim <= 0 || num_heads <= 0 || mlp_ratio <= 0) {
        throw ConfigError("vit config: extents must be positive");
    }
    if (embed_dim % num_heads != 0) {
        throw ConfigError("vit config: embed_dim " + std::to_string(embed_dim) +
                          " not divisible by num_heads " + std::to_string(num_heads));
    }
}

ViTParams ViTParams::init(const ViTConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    const std::int64_t d = cfg.embed_dim;
    const std::int64_t hidden = static_cast<std::int64_t>(cfg.mlp_ratio) * d;
    ViTParams p;
    p.blocks.reserve(static_cast<std::size_t>(cfg.depth));
    for (int i = 0; i < cfg.depth; ++i) {
        ViTBlockParams b;
        b.wq = Tensor::randn({d, d}, rng, 0.02, true);
        b.wk = Tensor::randn({d, d}, rng, 0.02, true);
        b.wv = Tensor::randn({d, d}, rng, 0.02, true);
        b.wo = Tensor::randn({d, d}, rng, 0.02, true);
        b.w1 = Tensor::randn({d, hidden}, rng, 0.02, true);
        b.w2 = Tensor::randn({hidden, d}, rng, 0.02, true);
        b.ln1_gain = Tensor::full({d}, 1.0, true);
        b.ln1_bias = Tensor::zeros({d}, true);
        b.ln2_gain = Tensor::full({d}, 1.0, true);
        b.ln2_bias = Tensor::zeros({d}, true);
        p.blocks.push_back(std::move(b));
    }
    p.final_gain = Tensor::full({d}, 1.0, true);
    p.final_bias = Tensor::zeros({d}, true);
    p.head_weight = Tensor::zeros({d, 1}, true);
    p.head_bias = Tensor::zeros({1}, true);
    return p;
}

Tensor mhsa(const Tensor& z, const ViTBlockParams& p, int num_heads, Tensor* attn_out) {
    const std::int64_t s = z.dim(0), d = z.dim(1);
    const std::int64_t hd = d / num_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    auto split_heads = [&](const Tensor& t) {
        return transpose(reshape(t, {s, num_heads, hd}), {1, 0, 2}); // [H, S, hd]
    };
    Tensor q = split_heads(matmul(z, p.wq));
    Tensor k = split_heads(matmul(z, p.wk));
    Tensor v = split_heads(matmul(z, p.wv));

    Tensor scores = mul_scalar(matmul(q, transpose(k, {0, 2, 1})), scale); // [H, S, S]
    Tensor attn = softmax(scores, 2);
    if (attn_out) *attn_out = attn;
    Tensor ctx = matmul(attn, v);                                  // [H, S, hd]
    Tensor merged = reshape(transpose(ctx, {1, 0, 2}), {s, d});    // [S, D]
    return matmul(merged, p.wo);
}

Tensor vit_block(const Tensor& z, const ViTBlockParams& p, int num_heads) {
    Tensor h = add(z, mhsa(layernorm(z, p.ln1_gain, p.ln1_bias), p, num_heads));
    Tensor mlp = matmul(gelu(matmul(layernorm(h, p.ln2_gain, p.ln2_bias), p.w1)), p.w2);
    return add(h, mlp);
}

Tensor vit_forward(const Tensor& z0, const ViTConfig& cfg, const ViTParams& params,
                   ViTTrace* trace) {
    Tensor z = z0;
    for (std::size_t i = 0; i < params.blocks.size(); ++i) {
        // the final block's input is the attribution target: the head reads
        // only the class row, so post-block patch rows carry no gradient
        if (trace && i + 1 == params.blocks.size()) trace->tokens = z;
        z = vit_block(z, params.blocks[i], cfg.num_heads);
    }
    if (trace && params.blocks.empty()) trace->tokens = z;
    Tensor h = layernorm(z, params.final_gain, params.final_bias);
    Tensor cls = slice(h, {0, 0}, {1, z.dim(1)});                  // [1, D]
    Tensor p = reshape(matmul(cls, params.head_weight), {1});
    return add(p, params.head_bias);
}

} // namespace vmb
