#pragma once

#include <random>

#include "vmb/tensor.hpp"

namespace vmb {

struct PatchEmbedConfig {
    int image_size = 224;
    int patch_size = 16;
    int channels = 3;
    int embed_dim = 128;

    int grid_side() const { return image_size / patch_size; }
    int num_patches() const { return grid_side() * grid_side(); }
    int patch_values() const { return patch_size * patch_size * channels; }
    void validate() const;
};

/// Per-branch embedding parameters: the two backbones own independent copies.
struct EmbeddingParams {
    Tensor projection;  // [P*P*C, D]
    Tensor class_token; // [1, D], zero-initialized
    Tensor positional;  // [N+1, D], learned, N(0, 0.02^2)

    static EmbeddingParams init(const PatchEmbedConfig& cfg, std::mt19937_64& rng);
};

/// Splits a [C, H, W] image into non-overlapping P x P patches, ordered
/// row-major over the grid. Row i is the row-major flattening of the [C, P, P]
/// sub-block. Treats the image as data (no gradient path through pixels).
Tensor patchify(const Tensor& image, int patch_size);

/// Token sequence: row 0 = class_token + positional[0], row i>=1 =
/// patchify(image)[i-1] . projection + positional[i].
Tensor embed(const Tensor& image, const PatchEmbedConfig& cfg, const EmbeddingParams& params);

} // namespace vmb
