#pragma once

#include <string>
#include <vector>

#include "vmb/data.hpp"
#include "vmb/metrics.hpp"
#include "vmb/model.hpp"

namespace vmb {

/// Table-2 row order.
enum class Variant { vit_only, mamba_only, averaging, learned_fusion };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

/// Deterministic eval-path scoring of a record set. vit_only reads p_vit,
/// mamba_only reads p_mamba, averaging fuses with fixed [0.5, 0.5] weights,
/// learned_fusion reads the model's fused output.
MetricsReport evaluate(const VmBeautyNet& model, const std::vector<ManifestRecord>& records,
                       const std::string& base_dir, Variant variant);

/// The eval-path predictions behind evaluate(), without the metric step.
void eval_predictions(const VmBeautyNet& model, const std::vector<ManifestRecord>& records,
                      const std::string& base_dir, Variant variant, std::vector<double>& preds,
                      std::vector<double>& targets);

enum class Branch { vit, mamba, fused };

Branch branch_from_name(const std::string& name);
const char* branch_name(Branch b);

/// Gradient-times-activation token attribution on the patch grid: gradient of
/// the branch score w.r.t. the final block's patch-token activations (its
/// input sequence; the block's output patch rows carry no gradient since the
/// head reads only the class row). Importance = sum over channels of
/// ReLU(activation * gradient), max-normalized.
struct SaliencyMap {
    int side = 0;               // patch-grid side, image_size / patch_size
    std::vector<double> grid;   // side * side values in [0, 1]
    Branch branch = Branch::vit;
};

struct SaliencySet {
    SaliencyMap vit;
    SaliencyMap mamba;
    SaliencyMap fused;
};

/// All three maps from one forward pass (the fused map backpropagates the
/// fused score and combines both branches' grids).
SaliencySet saliency_all(const VmBeautyNet& model, const Tensor& image);
SaliencyMap saliency(const VmBeautyNet& model, const Tensor& image, Branch branch);

/// side x side rows of comma-separated grid values.
std::string saliency_grid_csv(const SaliencyMap& map);
/// Bilinear-upsampled heat blended over the image (red shift).
ImageU8 saliency_overlay(const SaliencyMap& map, const ImageU8& image);

struct AblationRow {
    Variant variant;
    MetricsReport metrics;        // averaged across folds
    std::string config_hash;
    std::string data_order_hash;  // must match across variants (identical conditions)
};

/// Trains and evaluates all four variants per fold under identical seeds,
/// data order and augmentation; rows are fold-averaged, Table-2 ordered.
std::vector<AblationRow> ablate(const DatasetManifest& manifest, const RunConfig& cfg,
                                bool verbose = false);

std::string ablation_csv(const std::vector<AblationRow>& rows);
std::string ablation_table(const std::vector<AblationRow>& rows);

} // namespace vmb
