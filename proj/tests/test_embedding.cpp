#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "testutil.hpp"
#include "vmb/embedding.hpp"

using namespace vmb;
using vmb::test::F64Guard;

namespace {

// test-side inverse used as the round-trip oracle
Tensor unpatchify(const Tensor& rows, int channels, int image_size, int patch) {
    const std::int64_t grid = image_size / patch;
    std::vector<double> out(static_cast<std::size_t>(channels) * image_size * image_size);
    for (std::int64_t gy = 0; gy < grid; ++gy) {
        for (std::int64_t gx = 0; gx < grid; ++gx) {
            const double* src = rows.data().data() + (gy * grid + gx) * patch * patch * channels;
            for (std::int64_t c = 0; c < channels; ++c) {
                for (std::int64_t py = 0; py < patch; ++py) {
                    for (std::int64_t px = 0; px < patch; ++px) {
                        out[static_cast<std::size_t>((c * image_size + gy * patch + py) * image_size +
                                                     gx * patch + px)] = *src++;
                    }
                }
            }
        }
    }
    return Tensor::from_data({channels, image_size, image_size}, std::move(out));
}

} // namespace

TEST_CASE("patchify produces 196 rows at the default input geometry") {
    Tensor image = Tensor::zeros({3, 224, 224});
    Tensor p = patchify(image, 16);
    CHECK(p.dim(0) == 196);
    CHECK(p.dim(1) == 16 * 16 * 3);
}

TEST_CASE("patchify row order is row-major over grid and patch") {
    std::vector<double> vals(16);
    std::iota(vals.begin(), vals.end(), 0.0); // 4x4 of distinct values
    Tensor image = Tensor::from_data({1, 4, 4}, std::move(vals));
    Tensor p = patchify(image, 2);
    CHECK(p.dim(0) == 4);
    // patch 0 holds pixels (0,0),(0,1),(1,0),(1,1)
    CHECK(p.data()[0] == 0.0);
    CHECK(p.data()[1] == 1.0);
    CHECK(p.data()[2] == 4.0);
    CHECK(p.data()[3] == 5.0);
}

TEST_CASE("unpatchify(patchify(x)) round-trips") {
    F64Guard f64;
    std::mt19937_64 rng(2);
    Tensor image = Tensor::randn({3, 32, 32}, rng);
    Tensor rt = unpatchify(patchify(image, 8), 3, 32, 8);
    CHECK(rt.data() == image.data());
}

TEST_CASE("patchify divisibility error") {
    Tensor image = Tensor::zeros({1, 6, 6});
    CHECK_THROWS_AS(patchify(image, 4), ShapeError);
}

TEST_CASE("embed with zero projection and zero positions") {
    F64Guard f64;
    PatchEmbedConfig cfg{8, 4, 1, 5};
    EmbeddingParams p;
    p.projection = Tensor::zeros({cfg.patch_values(), cfg.embed_dim});
    p.class_token = Tensor::from_data({1, 5}, {1, 2, 3, 4, 5});
    p.positional = Tensor::zeros({cfg.num_patches() + 1, cfg.embed_dim});
    std::mt19937_64 rng(4);
    Tensor z = embed(Tensor::randn({1, 8, 8}, rng), cfg, p);
    CHECK(z.dim(0) == cfg.num_patches() + 1);
    for (int j = 0; j < 5; ++j) CHECK(z.at(j) == p.class_token.at(j));
    for (std::int64_t i = 5; i < z.numel(); ++i) CHECK(z.at(i) == 0.0);
}

TEST_CASE("embed with identity projection reproduces flattened patches") {
    F64Guard f64;
    PatchEmbedConfig cfg{4, 2, 1, 4}; // P*P*C == D
    EmbeddingParams p;
    std::vector<double> eye(16, 0.0);
    for (int i = 0; i < 4; ++i) eye[static_cast<std::size_t>(i * 4 + i)] = 1.0;
    p.projection = Tensor::from_data({4, 4}, std::move(eye));
    p.class_token = Tensor::zeros({1, 4});
    p.positional = Tensor::zeros({5, 4});
    std::mt19937_64 rng(6);
    Tensor image = Tensor::randn({1, 4, 4}, rng);
    Tensor z = embed(image, cfg, p);
    Tensor patches = patchify(image, 2);
    for (std::int64_t i = 0; i < 4; ++i) {
        for (std::int64_t j = 0; j < 4; ++j) {
            CHECK(z.at((i + 1) * 4 + j) == patches.at(i * 4 + j));
        }
    }
}

TEST_CASE("embed gradient w.r.t. projection vs finite differences") {
    F64Guard f64;
    std::mt19937_64 rng(8);
    PatchEmbedConfig cfg{8, 4, 2, 6};
    EmbeddingParams p = EmbeddingParams::init(cfg, rng);
    Tensor image = Tensor::randn({2, 8, 8}, rng);
    auto res = vmb::test::gradcheck(
        [&]() { return sum_all(mul(embed(image, cfg, p), embed(image, cfg, p))); },
        {p.projection, p.class_token, p.positional});
    CHECK_MESSAGE(res.pass, res.where);
}

TEST_CASE("sequence length is always N+1") {
    std::mt19937_64 rng(10);
    for (int size : {8, 16}) {
        for (int patch : {4, 8}) {
            PatchEmbedConfig cfg{size, patch, 3, 7};
            EmbeddingParams p = EmbeddingParams::init(cfg, rng);
            Tensor z = embed(Tensor::zeros({3, size, size}), cfg, p);
            CHECK(z.dim(0) == cfg.num_patches() + 1);
        }
    }
}

TEST_CASE("permuting patches and positions together permutes output rows") {
    F64Guard f64;
    std::mt19937_64 rng(12);
    PatchEmbedConfig cfg{8, 4, 1, 5}; // N = 4
    EmbeddingParams p = EmbeddingParams::init(cfg, rng);
    Tensor image = Tensor::randn({1, 8, 8}, rng);
    Tensor base = embed(image, cfg, p);

    // permute the patch rows by permuting the image patches, and permute
    // positional rows 1..N identically; the row set must be preserved
    const int perm[4] = {2, 0, 3, 1};
    Tensor patches = patchify(image, 4);
    std::vector<double> shuffled_img(image.data().size());
    {
        // rebuild an image whose patch i equals original patch perm[i]
        Tensor rebuilt = unpatchify(
            [&]() {
                std::vector<double> rows(patches.data().size());
                for (int i = 0; i < 4; ++i) {
                    std::copy_n(patches.data().data() + perm[i] * 16, 16, rows.data() + i * 16);
                }
                return Tensor::from_data({4, 16}, std::move(rows));
            }(),
            1, 8, 4);
        shuffled_img = rebuilt.data();
    }
    Tensor image2 = Tensor::from_data({1, 8, 8}, std::move(shuffled_img));
    std::vector<double> pos2(p.positional.data());
    for (int i = 0; i < 4; ++i) {
        std::copy_n(p.positional.data().data() + (1 + perm[i]) * 5, 5, pos2.data() + (1 + i) * 5);
    }
    EmbeddingParams p2 = p;
    p2.positional = Tensor::from_data({5, 5}, std::move(pos2), true);
    Tensor permuted = embed(image2, cfg, p2);

    // row i+1 of permuted must equal row perm[i]+1 of base; row 0 unchanged
    for (int j = 0; j < 5; ++j) CHECK(permuted.at(j) == base.at(j));
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 5; ++j) {
            CHECK(permuted.at((i + 1) * 5 + j) == doctest::Approx(base.at((perm[i] + 1) * 5 + j)));
        }
    }
}
