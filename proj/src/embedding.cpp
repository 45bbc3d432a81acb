#include "vmb/embedding.hpp"

namespace vmb {

void PatchEmbedConfig::validate() const {
    if (image_size <= 0 || patch_size <= 0 || channels <= 0 || embed_dim <= 0) {
        throw ConfigError("patch embedding: all extents must be positive");
    }
    if (image_size % patch_size != 0) {
        throw ConfigError("patch embedding: image size " + std::to_string(image_size) +
                          " is not divisible by patch size " + std::to_string(patch_size));
    }
}

EmbeddingParams EmbeddingParams::init(const PatchEmbedConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    EmbeddingParams p;
    p.projection = Tensor::randn({cfg.patch_values(), cfg.embed_dim}, rng, 0.02, true);
    p.class_token = Tensor::zeros({1, cfg.embed_dim}, true);
    p.positional = Tensor::randn({cfg.num_patches() + 1, cfg.embed_dim}, rng, 0.02, true);
    return p;
}

Tensor patchify(const Tensor& image, int patch_size) {
    if (image.rank() != 3) {
        throw ShapeError("patchify: expected [C, H, W], got " + shape_str(image.shape()));
    }
    const std::int64_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    const std::int64_t p = patch_size;
    if (p <= 0 || h % p != 0 || w % p != 0) {
        throw ShapeError("patchify: image " + shape_str(image.shape()) +
                         " is not divisible into " + std::to_string(patch_size) + "-pixel patches");
    }
    const std::int64_t gh = h / p, gw = w / p;
    const std::int64_t n = gh * gw;
    const std::int64_t row = p * p * c;
    std::vector<double> out(static_cast<std::size_t>(n * row));
    for (std::int64_t gy = 0; gy < gh; ++gy) {
        for (std::int64_t gx = 0; gx < gw; ++gx) {
            double* dst = out.data() + (gy * gw + gx) * row;
            for (std::int64_t ch = 0; ch < c; ++ch) {
                for (std::int64_t py = 0; py < p; ++py) {
                    const double* src = image.data().data() + ch * h * w + (gy * p + py) * w + gx * p;
                    for (std::int64_t px = 0; px < p; ++px) *dst++ = src[px];
                }
            }
        }
    }
    NoGradGuard ng;
    return Tensor::from_data({n, row}, std::move(out));
}

Tensor embed(const Tensor& image, const PatchEmbedConfig& cfg, const EmbeddingParams& params) {
    cfg.validate();
    if (image.rank() != 3 || image.dim(0) != cfg.channels || image.dim(1) != cfg.image_size ||
        image.dim(2) != cfg.image_size) {
        throw ShapeError("embed: image " + shape_str(image.shape()) + " does not match config [" +
                         std::to_string(cfg.channels) + ", " + std::to_string(cfg.image_size) +
                         ", " + std::to_string(cfg.image_size) + "]");
    }
    Tensor patches = patchify(image, cfg.patch_size);
    Tensor projected = matmul(patches, params.projection);     // [N, D]
    Tensor seq = concat({params.class_token, projected}, 0);   // [N+1, D]
    return add(seq, params.positional);
}

} // namespace vmb
