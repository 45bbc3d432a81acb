#pragma once

#include <cstdint>
#include <string>

#include "vmb/model.hpp"

namespace vmb {

struct TrainConfig {
    int epochs = 50;
    int batch_size = 32;
    double learning_rate = 1e-5;
    double weight_decay = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 42;
    double grad_clip = 0.0;        // 0 disables clipping
    bool cosine_schedule = false;  // constant LR by default
    int keep_last = 0;             // 0 keeps every epoch checkpoint
    std::string precision = "f32"; // f32 | f64
};

struct AugmentConfig {
    bool enabled = true;
    double flip_prob = 0.5;
    double rotation_degrees = 10.0;
    double jitter_brightness = 0.1;
    double jitter_contrast = 0.1;
    double jitter_saturation = 0.1;
};

/// Whole-run configuration: sections [model], [train], [augment]. Unknown
/// keys are rejected; print_config emits a canonical text that re-parses to
/// an identical config.
struct RunConfig {
    // [model]
    int image_size = 224;
    int patch_size = 16;
    int channels = 3;
    int vit_depth = 4;
    int vit_dim = 128;
    int vit_heads = 4;
    int vit_mlp_ratio = 4;
    int mamba_depth = 4;
    int mamba_dim = 192;
    int mamba_d_state = 16;
    int mamba_conv_kernel = 4;
    int mamba_expand = 2;
    bool mamba_bidirectional = true;

    TrainConfig train;
    AugmentConfig augment;

    ModelConfig model_config() const;
    void validate() const;
};

RunConfig parse_config(const std::string& text);
RunConfig parse_config_file(const std::string& path);
std::string print_config(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);

/// Canonical shortest-round-trip formatting for numbers in configs/CSVs.
std::string format_double(double v);

} // namespace vmb
