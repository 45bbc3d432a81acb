#pragma once

#include <string>
#include <vector>

#include "vmb/embedding.hpp"
#include "vmb/mamba.hpp"
#include "vmb/vit.hpp"

namespace vmb {

struct ModelConfig {
    int image_size = 224;
    int patch_size = 16;
    int channels = 3;
    ViTConfig vit;
    MambaConfig mamba;

    PatchEmbedConfig vit_embed_config() const {
        return {image_size, patch_size, channels, vit.embed_dim};
    }
    PatchEmbedConfig mamba_embed_config() const {
        return {image_size, patch_size, channels, mamba.embed_dim};
    }
    void validate() const;
};

/// Learnable linear fusion of the two branch scores. Initialized to the
/// averaging ensemble (weight [0.5, 0.5], bias 0) so training starts at that
/// baseline.
struct FusionParams {
    Tensor weight; // [1, 2]
    Tensor bias;   // [1]

    static FusionParams init();
};

struct VmBeautyNet {
    ModelConfig config;
    EmbeddingParams vit_embed;   // each branch owns its own patch embedding
    EmbeddingParams mamba_embed;
    ViTParams vit;
    MambaParams mamba;
    FusionParams fusion;
};

VmBeautyNet build_model(const ModelConfig& cfg, std::uint64_t seed);

/// y_hat = weight . [p_vit, p_mamba]^T + bias
Tensor fuse(const Tensor& p_vit, const Tensor& p_mamba, const FusionParams& params);

struct ForwardResult {
    Tensor y_hat;
    Tensor p_vit;
    Tensor p_mamba;
};

ForwardResult model_forward(const VmBeautyNet& model, const Tensor& image);

struct ForwardTrace {
    ForwardResult out;
    Tensor vit_tokens;   // final ViT block input, [N+1, D_vit]
    Tensor mamba_tokens; // final Mamba block input, [N+1, D_mamba]
};

ForwardTrace model_forward_traced(const VmBeautyNet& model, const Tensor& image);

struct NamedParam {
    std::string name;
    Tensor tensor;
};

/// Every trainable tensor in a stable, checkpoint-defining order.
std::vector<NamedParam> named_parameters(const VmBeautyNet& model);

} // namespace vmb
