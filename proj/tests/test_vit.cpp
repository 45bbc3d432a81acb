#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "testutil.hpp"
#include "vmb/embedding.hpp"
#include "vmb/vit.hpp"

using namespace vmb;
using vmb::test::F64Guard;

namespace {

ViTBlockParams identity_value_block(int d, std::mt19937_64& rng) {
    ViTBlockParams b;
    std::vector<double> eye(static_cast<std::size_t>(d * d), 0.0);
    for (int i = 0; i < d; ++i) eye[static_cast<std::size_t>(i * d + i)] = 1.0;
    b.wq = Tensor::randn({d, d}, rng, 0.2);
    b.wk = Tensor::randn({d, d}, rng, 0.2);
    b.wv = Tensor::from_data({d, d}, eye);
    b.wo = Tensor::from_data({d, d}, eye);
    b.w1 = Tensor::zeros({d, d});
    b.w2 = Tensor::zeros({d, d});
    b.ln1_gain = Tensor::full({d}, 1.0);
    b.ln1_bias = Tensor::zeros({d});
    b.ln2_gain = Tensor::full({d}, 1.0);
    b.ln2_bias = Tensor::zeros({d});
    return b;
}

} // namespace

TEST_CASE("single-token attention returns the value projection of the token") {
    F64Guard f64;
    std::mt19937_64 rng(1);
    ViTBlockParams b = identity_value_block(6, rng);
    Tensor z = Tensor::randn({1, 6}, rng);
    Tensor out = mhsa(z, b, 1);
    for (std::int64_t i = 0; i < 6; ++i) CHECK(out.at(i) == doctest::Approx(z.at(i)).epsilon(1e-12));
}

TEST_CASE("attention rows sum to one for every head") {
    F64Guard f64;
    std::mt19937_64 rng(2);
    ViTConfig cfg{1, 8, 2, 2};
    ViTParams p = ViTParams::init(cfg, rng);
    Tensor z = Tensor::randn({5, 8}, rng);
    Tensor attn;
    mhsa(z, p.blocks[0], cfg.num_heads, &attn);
    REQUIRE(attn.shape() == Shape{2, 5, 5});
    for (std::int64_t h = 0; h < 2; ++h) {
        for (std::int64_t r = 0; r < 5; ++r) {
            double s = 0;
            for (std::int64_t c = 0; c < 5; ++c) s += attn.at((h * 5 + r) * 5 + c);
            CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
}

TEST_CASE("depth-0 config with constant head returns the bias") {
    F64Guard f64;
    ViTConfig cfg{0, 6, 1, 2};
    ViTParams p;
    p.final_gain = Tensor::full({6}, 1.0);
    p.final_bias = Tensor::zeros({6});
    p.head_weight = Tensor::zeros({6, 1});
    p.head_bias = Tensor::scalar(3.0);
    std::mt19937_64 rng(3);
    Tensor z0 = Tensor::randn({4, 6}, rng);
    CHECK(vit_forward(z0, cfg, p).item() == 3.0);
}

TEST_CASE("patch permutation invariance with zero positional embeddings") {
    F64Guard f64;
    std::mt19937_64 rng(4);
    ViTConfig cfg{2, 8, 2, 2};
    ViTParams p = ViTParams::init(cfg, rng);
    // small random head so the scalar actually depends on the tokens
    p.head_weight = Tensor::randn({8, 1}, rng, 0.5, true);

    Tensor z0 = Tensor::randn({5, 8}, rng); // row 0 = class, rows 1..4 patches
    double base = vit_forward(z0, cfg, p).item();

    std::vector<double> permuted(z0.data());
    const int perm[4] = {3, 1, 0, 2};
    for (int i = 0; i < 4; ++i) {
        std::copy_n(z0.data().data() + (1 + perm[i]) * 8, 8, permuted.data() + (1 + i) * 8);
    }
    double shuffled = vit_forward(Tensor::from_data({5, 8}, std::move(permuted)), cfg, p).item();
    CHECK(std::abs(base - shuffled) < 1e-5);
}

TEST_CASE("same input twice gives bit-identical p_vit") {
    std::mt19937_64 rng(5);
    ViTConfig cfg{2, 8, 2, 2};
    ViTParams p = ViTParams::init(cfg, rng);
    Tensor z0 = Tensor::randn({5, 8}, rng);
    CHECK(vit_forward(z0, cfg, p).item() == vit_forward(z0, cfg, p).item());
}

TEST_CASE("full block gradient vs finite differences") {
    F64Guard f64;
    std::mt19937_64 rng(6);
    ViTConfig cfg{1, 8, 1, 2};
    ViTParams p = ViTParams::init(cfg, rng);
    Tensor z = Tensor::randn({5, 8}, rng);
    auto& b = p.blocks[0];
    auto res = vmb::test::gradcheck(
        [&]() {
            Tensor out = vit_block(z, b, cfg.num_heads);
            return sum_all(mul(out, out));
        },
        {b.wq, b.wk, b.wv, b.wo, b.w1, b.w2, b.ln1_gain, b.ln1_bias, b.ln2_gain, b.ln2_bias});
    CHECK_MESSAGE(res.pass, res.where, " analytic=", res.worst_analytic,
                  " numeric=", res.worst_numeric);
}

TEST_CASE("p_vit gradient w.r.t. every parameter vs finite differences") {
    F64Guard f64;
    std::mt19937_64 rng(7);
    ViTConfig cfg{1, 8, 1, 2};
    ViTParams p = ViTParams::init(cfg, rng);
    p.head_weight = Tensor::randn({8, 1}, rng, 0.3, true);
    p.head_bias = Tensor::randn({1}, rng, 0.3, true);
    Tensor z0 = Tensor::randn({5, 8}, rng); // N = 4 patches
    std::vector<Tensor> params;
    for (auto& b : p.blocks) {
        for (auto* t : {&b.wq, &b.wk, &b.wv, &b.wo, &b.w1, &b.w2, &b.ln1_gain, &b.ln1_bias,
                        &b.ln2_gain, &b.ln2_bias}) {
            params.push_back(*t);
        }
    }
    params.push_back(p.final_gain);
    params.push_back(p.final_bias);
    params.push_back(p.head_weight);
    params.push_back(p.head_bias);
    auto res = vmb::test::gradcheck([&]() { return vit_forward(z0, cfg, p); }, params);
    CHECK_MESSAGE(res.pass, res.where, " analytic=", res.worst_analytic,
                  " numeric=", res.worst_numeric);
}
