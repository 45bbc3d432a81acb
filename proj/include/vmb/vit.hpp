#pragma once

#include <random>
#include <vector>

#include "vmb/tensor.hpp"

namespace vmb {

struct ViTConfig {
    int depth = 4;
    int embed_dim = 128;
    int num_heads = 4;
    int mlp_ratio = 4;

    int head_dim() const { return embed_dim / num_heads; }
    void validate() const;
};

struct ViTBlockParams {
    Tensor wq, wk, wv, wo; // [D, D]
    Tensor w1;             // [D, ratio*D]
    Tensor w2;             // [ratio*D, D]
    Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias; // [D]
};

struct ViTParams {
    std::vector<ViTBlockParams> blocks;
    Tensor final_gain, final_bias; // [D] layernorm ahead of the head
    Tensor head_weight;            // [D, 1], zero-initialized
    Tensor head_bias;              // [1]

    static ViTParams init(const ViTConfig& cfg, std::mt19937_64& rng);
};

/// Scaled dot-product multi-head self-attention with output projection.
/// When attn_out is non-null it receives the [heads, S, S] attention weights.
Tensor mhsa(const Tensor& z, const ViTBlockParams& p, int num_heads, Tensor* attn_out = nullptr);

/// Pre-norm encoder block: z + MHSA(LN(z)); z + MLP(LN(z)).
Tensor vit_block(const Tensor& z, const ViTBlockParams& p, int num_heads);

struct ViTTrace {
    Tensor tokens; // activations entering the final block, [N+1, D]
};

/// Full branch: L blocks, final layernorm, linear head on the class token.
/// Returns the scalar branch prediction p_vit.
Tensor vit_forward(const Tensor& z0, const ViTConfig& cfg, const ViTParams& params,
                   ViTTrace* trace = nullptr);

} // namespace vmb
