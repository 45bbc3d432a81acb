#include "vmb/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "vmb/context.hpp"

namespace vmb {

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::vit_only: return "vit_only";
        case Variant::mamba_only: return "mamba_only";
        case Variant::averaging: return "averaging";
        case Variant::learned_fusion: return "learned_fusion";
    }
    return "?";
}

Variant variant_from_name(const std::string& name) {
    if (name == "vit_only") return Variant::vit_only;
    if (name == "mamba_only") return Variant::mamba_only;
    if (name == "averaging") return Variant::averaging;
    if (name == "learned_fusion") return Variant::learned_fusion;
    throw ConfigError("unknown variant '" + name +
                      "' (expected vit_only|mamba_only|averaging|learned_fusion)");
}

const char* branch_name(Branch b) {
    switch (b) {
        case Branch::vit: return "vit";
        case Branch::mamba: return "mamba";
        case Branch::fused: return "fused";
    }
    return "?";
}

Branch branch_from_name(const std::string& name) {
    if (name == "vit") return Branch::vit;
    if (name == "mamba") return Branch::mamba;
    if (name == "fused") return Branch::fused;
    throw ConfigError("unknown branch '" + name + "' (expected vit|mamba|fused)");
}

double variant_score(const ForwardResult& fwd, Variant variant) {
    switch (variant) {
        case Variant::vit_only: return fwd.p_vit.item();
        case Variant::mamba_only: return fwd.p_mamba.item();
        case Variant::averaging: {
            // same code path as the trained fusion, with the fixed averaging
            // weights, so the degeneracy invariant holds bit-exactly
            static thread_local FusionParams avg = FusionParams::init();
            NoGradGuard ng;
            return fuse(fwd.p_vit, fwd.p_mamba, avg).item();
        }
        case Variant::learned_fusion: return fwd.y_hat.item();
    }
    throw ConfigError("invalid variant");
}

void eval_predictions(const VmBeautyNet& model, const std::vector<ManifestRecord>& records,
                      const std::string& base_dir, Variant variant, std::vector<double>& preds,
                      std::vector<double>& targets) {
    if (records.empty()) throw DataError("evaluate: empty test set");
    NoGradGuard ng;
    preds.clear();
    targets.clear();
    preds.reserve(records.size());
    targets.reserve(records.size());
    AugmentConfig no_aug;
    no_aug.enabled = false;
    std::mt19937_64 unused_rng(0);
    for (const auto& rec : records) {
        Sample s = load_sample(rec, base_dir, model.config.image_size, false, no_aug, unused_rng);
        ForwardResult fwd = model_forward(model, s.pixels);
        preds.push_back(variant_score(fwd, variant));
        targets.push_back(s.score);
    }
}

MetricsReport evaluate(const VmBeautyNet& model, const std::vector<ManifestRecord>& records,
                       const std::string& base_dir, Variant variant) {
    std::vector<double> preds, targets;
    eval_predictions(model, records, base_dir, variant, preds, targets);
    return compute_report(preds, targets);
}

namespace {

// sum over channels of ReLU(activation * gradient) for patch rows 1..N
std::vector<double> token_importance(const Tensor& tokens) {
    const std::int64_t s = tokens.dim(0), d = tokens.dim(1);
    const auto& act = tokens.data();
    const auto& grad = tokens.impl()->grad;
    std::vector<double> imp(static_cast<std::size_t>(s - 1), 0.0);
    if (grad.empty()) return imp; // score independent of tokens: all-zero map
    for (std::int64_t t = 1; t < s; ++t) {
        double acc = 0.0;
        for (std::int64_t c = 0; c < d; ++c) {
            const double v = act[static_cast<std::size_t>(t * d + c)] *
                             grad[static_cast<std::size_t>(t * d + c)];
            if (v > 0.0) acc += v;
        }
        imp[static_cast<std::size_t>(t - 1)] = acc;
    }
    return imp;
}

SaliencyMap to_map(std::vector<double> grid, int side, Branch branch) {
    double mx = 0.0;
    for (double v : grid) mx = std::max(mx, v);
    if (mx > 0.0) {
        for (double& v : grid) v /= mx;
    }
    return SaliencyMap{side, std::move(grid), branch};
}

} // namespace

SaliencySet saliency_all(const VmBeautyNet& model, const Tensor& image) {
    auto& tape = GradTape::current();
    tape.clear();
    const bool was_enabled = tape.enabled();
    tape.set_enabled(true);
    ForwardTrace trace = model_forward_traced(model, image);
    const int side = model.config.image_size / model.config.patch_size;

    backward_retain(trace.out.p_vit);
    std::vector<double> vit_grid = token_importance(trace.vit_tokens);

    tape.zero_grads();
    backward_retain(trace.out.p_mamba);
    std::vector<double> mamba_grid = token_importance(trace.mamba_tokens);

    tape.zero_grads();
    backward_retain(trace.out.y_hat);
    std::vector<double> fused_grid = token_importance(trace.vit_tokens);
    {
        std::vector<double> fm = token_importance(trace.mamba_tokens);
        for (std::size_t i = 0; i < fused_grid.size(); ++i) fused_grid[i] += fm[i];
    }
    tape.clear();
    tape.set_enabled(was_enabled);

    SaliencySet set;
    set.vit = to_map(std::move(vit_grid), side, Branch::vit);
    set.mamba = to_map(std::move(mamba_grid), side, Branch::mamba);
    set.fused = to_map(std::move(fused_grid), side, Branch::fused);
    return set;
}

SaliencyMap saliency(const VmBeautyNet& model, const Tensor& image, Branch branch) {
    SaliencySet set = saliency_all(model, image);
    switch (branch) {
        case Branch::vit: return set.vit;
        case Branch::mamba: return set.mamba;
        case Branch::fused: return set.fused;
    }
    throw ConfigError("invalid branch");
}

std::string saliency_grid_csv(const SaliencyMap& map) {
    std::string out;
    for (int y = 0; y < map.side; ++y) {
        for (int x = 0; x < map.side; ++x) {
            if (x) out += ',';
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.6f", map.grid[static_cast<std::size_t>(y * map.side + x)]);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

ImageU8 saliency_overlay(const SaliencyMap& map, const ImageU8& image) {
    ImageU8 out = image;
    const int w = image.width, h = image.height;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            // bilinear sample of the patch grid at this pixel
            const double gx = (x + 0.5) / w * map.side - 0.5;
            const double gy = (y + 0.5) / h * map.side - 0.5;
            const int x0 = std::clamp(static_cast<int>(std::floor(gx)), 0, map.side - 1);
            const int y0 = std::clamp(static_cast<int>(std::floor(gy)), 0, map.side - 1);
            const int x1 = std::min(x0 + 1, map.side - 1);
            const int y1 = std::min(y0 + 1, map.side - 1);
            const double wx = std::clamp(gx - x0, 0.0, 1.0);
            const double wy = std::clamp(gy - y0, 0.0, 1.0);
            auto g = [&](int yy, int xx) {
                return map.grid[static_cast<std::size_t>(yy * map.side + xx)];
            };
            const double heat = (g(y0, x0) * (1 - wx) + g(y0, x1) * wx) * (1 - wy) +
                                (g(y1, x0) * (1 - wx) + g(y1, x1) * wx) * wy;
            const double alpha = 0.5 * heat;
            const std::size_t i = (static_cast<std::size_t>(y) * w + x) * 3;
            out.rgb[i] = static_cast<std::uint8_t>(
                std::lround((1 - alpha) * image.rgb[i] + alpha * 255.0));
            out.rgb[i + 1] = static_cast<std::uint8_t>(std::lround((1 - alpha) * image.rgb[i + 1]));
            out.rgb[i + 2] = static_cast<std::uint8_t>(std::lround((1 - alpha) * image.rgb[i + 2]));
        }
    }
    return out;
}

} // namespace vmb
