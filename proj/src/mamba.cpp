#include "vmb/mamba.hpp"

#include <cmath>

namespace vmb {

void MambaConfig::validate() const {
    if (depth < 0 || embed_dim <= 0 || d_state < 1 || conv_kernel < 1 || expand < 1) {
        throw ConfigError("mamba config: extents must be positive");
    }
}

MambaParams MambaParams::init(const MambaConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    const std::int64_t d = cfg.embed_dim;
    const std::int64_t inner = cfg.inner_dim();
    const std::int64_t n = cfg.d_state;
    // fan-in scaled uniform init for the projections, per the cited
    // architecture's convention; a flat 0.02 normal attenuates the scan path
    // to numerical silence through the in/conv/b/c/out chain
    auto linear_init = [&rng](std::int64_t fan_in, Shape shape) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        return Tensor::rand_uniform(std::move(shape), rng, -bound, bound, true);
    };
    MambaParams p;
    p.blocks.reserve(static_cast<std::size_t>(cfg.depth));
    for (int i = 0; i < cfg.depth; ++i) {
        MambaBlockParams b;
        b.ln_gain = Tensor::full({d}, 1.0, true);
        b.ln_bias = Tensor::zeros({d}, true);
        b.w_in = linear_init(d, {d, inner});
        b.w_gate = linear_init(d, {d, inner});
        b.conv_weight = linear_init(cfg.conv_kernel, {inner, cfg.conv_kernel});
        b.w_delta = linear_init(inner, {inner, inner});
        // step bias: softplus(b_delta) spread log-uniformly over [1e-3, 1e-1]
        {
            std::vector<double> bias(static_cast<std::size_t>(inner));
            std::uniform_real_distribution<double> u(std::log(1e-3), std::log(1e-1));
            for (auto& v : bias) {
                const double dt = std::exp(u(rng));
                v = std::log(std::expm1(dt)); // inverse softplus
            }
            b.b_delta = Tensor::from_data({inner}, std::move(bias), true);
        }
        b.w_b = linear_init(inner, {inner, n});
        b.w_c = linear_init(inner, {inner, n});
        {
            // A = -exp(a_log) with A[d, j] = -(j+1): the S4D-real ladder
            std::vector<double> alog(static_cast<std::size_t>(inner * n));
            for (std::int64_t ch = 0; ch < inner; ++ch) {
                for (std::int64_t j = 0; j < n; ++j) {
                    alog[static_cast<std::size_t>(ch * n + j)] = std::log(static_cast<double>(j + 1));
                }
            }
            b.a_log = Tensor::from_data({inner, n}, std::move(alog), true);
        }
        b.w_out = linear_init(inner, {inner, d});
        p.blocks.push_back(std::move(b));
    }
    p.final_gain = Tensor::full({d}, 1.0, true);
    p.final_bias = Tensor::zeros({d}, true);
    p.head_weight = Tensor::zeros({d, 1}, true);
    p.head_bias = Tensor::zeros({1}, true);
    return p;
}

Tensor mamba_block(const Tensor& z, const MambaBlockParams& p, const MambaConfig& cfg,
                   ScanStrategy strategy) {
    Tensor x = layernorm(z, p.ln_gain, p.ln_bias);
    Tensor gate = silu(matmul(x, p.w_gate));
    Tensor u = silu(causal_conv1d(matmul(x, p.w_in), p.conv_weight));

    Tensor delta = softplus(add(matmul(u, p.w_delta), p.b_delta)); // [S, inner]
    Tensor b = matmul(u, p.w_b);                                   // [S, N]
    Tensor c = matmul(u, p.w_c);                                   // [S, N]
    Tensor a = neg(exp(p.a_log));                                  // [inner, N]

    Tensor y = selective_scan(u, delta, a, b, c, strategy);
    if (cfg.bidirectional) {
        Tensor yr = selective_scan(flip(u, 0), flip(delta, 0), a, flip(b, 0), flip(c, 0), strategy);
        y = mul_scalar(add(y, flip(yr, 0)), 0.5);
    }
    Tensor out = matmul(mul(y, gate), p.w_out);
    return add(z, out);
}

Tensor mamba_forward(const Tensor& z0, const MambaConfig& cfg, const MambaParams& params,
                     MambaTrace* trace, std::int64_t class_index, ScanStrategy strategy) {
    Tensor z = z0;
    for (std::size_t i = 0; i < params.blocks.size(); ++i) {
        if (trace && i + 1 == params.blocks.size()) trace->tokens = z;
        z = mamba_block(z, params.blocks[i], cfg, strategy);
    }
    if (trace && params.blocks.empty()) trace->tokens = z;
    if (class_index < 0 || class_index >= z.dim(0)) {
        throw ShapeError("mamba_forward: class index " + std::to_string(class_index) +
                         " out of range for sequence length " + std::to_string(z.dim(0)));
    }
    Tensor h = layernorm(z, params.final_gain, params.final_bias);
    Tensor cls = slice(h, {class_index, 0}, {1, z.dim(1)}); // [1, D]
    Tensor p = reshape(matmul(cls, params.head_weight), {1});
    return add(p, params.head_bias);
}

} // namespace vmb
