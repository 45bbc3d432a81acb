#include "vmb/model.hpp"

#include "vmb/context.hpp"

namespace vmb {

void ModelConfig::validate() const {
    vit_embed_config().validate();
    mamba_embed_config().validate();
    vit.validate();
    mamba.validate();
}

FusionParams FusionParams::init() {
    FusionParams p;
    p.weight = Tensor::from_data({1, 2}, {0.5, 0.5}, true);
    p.bias = Tensor::zeros({1}, true);
    return p;
}

VmBeautyNet build_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    VmBeautyNet m;
    m.config = cfg;
    std::mt19937_64 rng_ve(derive_seed(seed, "init.vit_embed"));
    std::mt19937_64 rng_me(derive_seed(seed, "init.mamba_embed"));
    std::mt19937_64 rng_v(derive_seed(seed, "init.vit"));
    std::mt19937_64 rng_m(derive_seed(seed, "init.mamba"));
    m.vit_embed = EmbeddingParams::init(cfg.vit_embed_config(), rng_ve);
    m.mamba_embed = EmbeddingParams::init(cfg.mamba_embed_config(), rng_me);
    m.vit = ViTParams::init(cfg.vit, rng_v);
    m.mamba = MambaParams::init(cfg.mamba, rng_m);
    m.fusion = FusionParams::init();
    return m;
}

Tensor fuse(const Tensor& p_vit, const Tensor& p_mamba, const FusionParams& params) {
    if (p_vit.numel() != 1 || p_mamba.numel() != 1) {
        throw ShapeError("fuse: branch predictions must be scalars");
    }
    Tensor both = reshape(concat({p_vit, p_mamba}, 0), {2, 1});
    Tensor y = reshape(matmul(params.weight, both), {1});
    return add(y, params.bias);
}

ForwardResult model_forward(const VmBeautyNet& model, const Tensor& image) {
    ForwardTrace t = model_forward_traced(model, image);
    return t.out;
}

ForwardTrace model_forward_traced(const VmBeautyNet& model, const Tensor& image) {
    ForwardTrace t;
    Tensor zv = embed(image, model.config.vit_embed_config(), model.vit_embed);
    ViTTrace vt;
    t.out.p_vit = vit_forward(zv, model.config.vit, model.vit, &vt);
    t.vit_tokens = vt.tokens;

    Tensor zm = embed(image, model.config.mamba_embed_config(), model.mamba_embed);
    MambaTrace mt;
    t.out.p_mamba = mamba_forward(zm, model.config.mamba, model.mamba, &mt);
    t.mamba_tokens = mt.tokens;

    t.out.y_hat = fuse(t.out.p_vit, t.out.p_mamba, model.fusion);
    return t;
}

std::vector<NamedParam> named_parameters(const VmBeautyNet& model) {
    std::vector<NamedParam> out;
    auto push = [&out](const std::string& name, const Tensor& t) { out.push_back({name, t}); };
    auto push_embed = [&](const std::string& prefix, const EmbeddingParams& e) {
        push(prefix + ".projection", e.projection);
        push(prefix + ".class_token", e.class_token);
        push(prefix + ".positional", e.positional);
    };
    push_embed("vit_embed", model.vit_embed);
    push_embed("mamba_embed", model.mamba_embed);
    for (std::size_t i = 0; i < model.vit.blocks.size(); ++i) {
        const auto& b = model.vit.blocks[i];
        const std::string p = "vit.block" + std::to_string(i);
        push(p + ".wq", b.wq);
        push(p + ".wk", b.wk);
        push(p + ".wv", b.wv);
        push(p + ".wo", b.wo);
        push(p + ".w1", b.w1);
        push(p + ".w2", b.w2);
        push(p + ".ln1_gain", b.ln1_gain);
        push(p + ".ln1_bias", b.ln1_bias);
        push(p + ".ln2_gain", b.ln2_gain);
        push(p + ".ln2_bias", b.ln2_bias);
    }
    push("vit.final_gain", model.vit.final_gain);
    push("vit.final_bias", model.vit.final_bias);
    push("vit.head_weight", model.vit.head_weight);
    push("vit.head_bias", model.vit.head_bias);
    for (std::size_t i = 0; i < model.mamba.blocks.size(); ++i) {
        const auto& b = model.mamba.blocks[i];
        const std::string p = "mamba.block" + std::to_string(i);
        push(p + ".ln_gain", b.ln_gain);
        push(p + ".ln_bias", b.ln_bias);
        push(p + ".w_in", b.w_in);
        push(p + ".w_gate", b.w_gate);
        push(p + ".conv_weight", b.conv_weight);
        push(p + ".w_delta", b.w_delta);
        push(p + ".b_delta", b.b_delta);
        push(p + ".w_b", b.w_b);
        push(p + ".w_c", b.w_c);
        push(p + ".a_log", b.a_log);
        push(p + ".w_out", b.w_out);
    }
    push("mamba.final_gain", model.mamba.final_gain);
    push("mamba.final_bias", model.mamba.final_bias);
    push("mamba.head_weight", model.mamba.head_weight);
    push("mamba.head_bias", model.mamba.head_bias);
    push("fusion.weight", model.fusion.weight);
    push("fusion.bias", model.fusion.bias);
    return out;
}

} // namespace vmb
