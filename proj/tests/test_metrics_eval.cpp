#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "testutil.hpp"
#include "vmb/checkpoint.hpp"
#include "vmb/data.hpp"
#include "vmb/eval.hpp"
#include "vmb/metrics.hpp"
#include "vmb/train.hpp"

using namespace vmb;
namespace fs = std::filesystem;

TEST_CASE("pearson closed forms") {
    CHECK(pearson({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pearson({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0).epsilon(1e-12));
    // hand oracle: cov = 0.75, sigma_x = sigma_y = sqrt(1.25) -> 0.6
    CHECK(pearson({1, 2, 3, 4}, {2, 1, 4, 3}) == doctest::Approx(0.6).epsilon(1e-10));
    CHECK_THROWS_AS(pearson({1, 1, 1}, {1, 2, 3}), NumericalError);
    CHECK_THROWS_AS(pearson({1}, {2}), NumericalError);
}

TEST_CASE("mae and rmse closed forms") {
    CHECK(mae({3, 4}, {3, 4}) == 0.0);
    CHECK(mae({2, 4}, {1, 2}) == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(rmse({3, 4}, {3, 4}) == 0.0);
    CHECK(rmse({0, 0}, {3, 4}) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-10));
    CHECK_THROWS_AS(mae({1, 2}, {1}), ShapeError);

    // |c| homogeneity
    CHECK(mae({-4, -8}, {-2, -4}) == doctest::Approx(2.0 * mae({2, 4}, {1, 2})).epsilon(1e-12));
}

TEST_CASE("rmse dominates mae and pearson is affine-invariant on random vectors") {
    std::mt19937_64 rng(33);
    std::normal_distribution<double> g(0.0, 2.0);
    std::uniform_real_distribution<double> scale(0.1, 4.0);
    std::uniform_real_distribution<double> shift(-3.0, 3.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + (rng() % 16);
        std::vector<double> a(n), b(n);
        for (auto& v : a) v = g(rng);
        for (auto& v : b) v = g(rng);
        CHECK(rmse(a, b) >= mae(a, b) - 1e-12);
        double pc0;
        try {
            pc0 = pearson(a, b);
        } catch (const NumericalError&) {
            continue; // degenerate draw
        }
        const double s = scale(rng), c = shift(rng);
        std::vector<double> a2(n);
        for (std::size_t i = 0; i < n; ++i) a2[i] = s * a[i] + c;
        CHECK(std::abs(pearson(a2, b) - pc0) < 1e-10);
    }
}

TEST_CASE("report invariants tie metrics to residuals") {
    std::mt19937_64 rng(44);
    std::normal_distribution<double> g(3.0, 0.7);
    std::vector<double> pred(50), target(50);
    for (auto& v : pred) v = g(rng);
    for (auto& v : target) v = g(rng);
    MetricsReport r = compute_report(pred, target);
    CHECK(r.n == 50);
    double abs_sum = 0, sq_sum = 0;
    for (double res : r.residuals) {
        abs_sum += std::abs(res);
        sq_sum += res * res;
    }
    CHECK(r.mae == doctest::Approx(abs_sum / 50).epsilon(1e-12));
    CHECK(r.rmse == doctest::Approx(std::sqrt(sq_sum / 50)).epsilon(1e-12));
    CHECK(r.rmse >= r.mae);
    CHECK(r.pc >= -1.0);
    CHECK(r.pc <= 1.0);
}

TEST_CASE("perfect predictor degenerates to PC 1, MAE 0, RMSE 0") {
    std::vector<double> t = {1.5, 2.0, 4.5, 3.0};
    MetricsReport r = compute_report(t, t);
    CHECK(r.pc == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.mae == 0.0);
    CHECK(r.rmse == 0.0);
}

namespace {

struct EvalFixture {
    fs::path dir;
    DatasetManifest manifest;
    RunConfig cfg;
    VmBeautyNet model;

    EvalFixture() : model(VmBeautyNet{}) {
        dir = fs::temp_directory_path() / "vmb_eval_fixture";
        fs::remove_all(dir);
        manifest = synth_dataset(dir.string(), 10, 16, 123, 2);
        cfg.image_size = 16;
        cfg.patch_size = 4;
        cfg.vit_depth = 1;
        cfg.vit_dim = 8;
        cfg.vit_heads = 1;
        cfg.vit_mlp_ratio = 2;
        cfg.mamba_depth = 1;
        cfg.mamba_dim = 8;
        cfg.mamba_d_state = 4;
        cfg.mamba_conv_kernel = 3;
        cfg.train.seed = 5;
        model = build_model(cfg.model_config(), 5);
        std::mt19937_64 rng(6);
        model.vit.head_weight = Tensor::randn({8, 1}, rng, 0.4, true);
        model.mamba.head_weight = Tensor::randn({8, 1}, rng, 0.4, true);
    }
    ~EvalFixture() { fs::remove_all(dir); }
};

} // namespace

TEST_CASE("evaluate is deterministic and variant-consistent") {
    EvalFixture fx;
    auto [train_recs, test_recs] = fold_split(fx.manifest, 2);

    MetricsReport r1 = evaluate(fx.model, test_recs, fx.manifest.base_dir, Variant::learned_fusion);
    MetricsReport r2 = evaluate(fx.model, test_recs, fx.manifest.base_dir, Variant::learned_fusion);
    CHECK(r1.pc == r2.pc);
    CHECK(r1.mae == r2.mae);
    CHECK(r1.rmse == r2.rmse);
    CHECK(r1.residuals == r2.residuals);

    SUBCASE("fusion at [0.5, 0.5] makes learned fusion and averaging bit-identical") {
        // fusion weights still at the averaging init
        MetricsReport avg = evaluate(fx.model, test_recs, fx.manifest.base_dir, Variant::averaging);
        CHECK(avg.residuals == r1.residuals);
        CHECK(avg.pc == r1.pc);
        CHECK(avg.mae == r1.mae);
        CHECK(avg.rmse == r1.rmse);
    }

    SUBCASE("fusion at [1, 0] makes learned fusion match vit_only") {
        fx.model.fusion.weight = Tensor::from_data({1, 2}, {1.0, 0.0}, true);
        MetricsReport fused =
            evaluate(fx.model, test_recs, fx.manifest.base_dir, Variant::learned_fusion);
        MetricsReport vit = evaluate(fx.model, test_recs, fx.manifest.base_dir, Variant::vit_only);
        CHECK(fused.residuals == vit.residuals);
        CHECK(fused.pc == vit.pc);
        CHECK(fused.mae == vit.mae);
        CHECK(fused.rmse == vit.rmse);
    }

    SUBCASE("empty test set is rejected") {
        std::vector<ManifestRecord> empty;
        CHECK_THROWS_AS(evaluate(fx.model, empty, fx.manifest.base_dir, Variant::vit_only),
                        DataError);
    }
}

TEST_CASE("variant names round-trip and reject junk") {
    CHECK(variant_from_name("vit_only") == Variant::vit_only);
    CHECK(variant_from_name(variant_name(Variant::averaging)) == Variant::averaging);
    CHECK_THROWS_AS(variant_from_name("bogus"), ConfigError);
    CHECK(branch_from_name("mamba") == Branch::mamba);
    CHECK_THROWS_AS(branch_from_name("bogus"), ConfigError);
}

TEST_CASE("ablation csv shape") {
    std::vector<AblationRow> rows(4);
    rows[0].variant = Variant::vit_only;
    rows[1].variant = Variant::mamba_only;
    rows[2].variant = Variant::averaging;
    rows[3].variant = Variant::learned_fusion;
    for (auto& r : rows) {
        r.metrics = MetricsReport{0.5, 0.4, 0.6, 10, {}};
        r.config_hash = "abc";
        r.data_order_hash = "def";
    }
    const std::string csv = ablation_csv(rows);
    CHECK(csv.find("variant,pc,mae,rmse,n,config_hash,data_order_hash\n") == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
    CHECK(csv.find("vit_only") != std::string::npos);
    CHECK(csv.find("learned_fusion") != std::string::npos);
}
