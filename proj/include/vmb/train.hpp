#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vmb/eval.hpp"
#include "vmb/optimizer.hpp"

namespace vmb {

/// Mean over the batch of squared differences. Gradient w.r.t. pred_i is
/// 2*(pred_i - target_i)/B.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

struct EpochStats {
    int epoch = 0;
    double mean_train_loss = 0.0;
    double val_pc = 0.0;
    double val_mae = 0.0;
    double val_rmse = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> history;
    std::string data_order_hash; // over the full (epoch, sample-index) sequence
};

struct TrainOptions {
    Variant variant = Variant::learned_fusion;
    std::string checkpoint_dir; // empty disables checkpoint/history output
    int workers = 1;            // sample-decode prefetch threads
    bool verbose = false;
    std::optional<int> max_steps; // stop after N optimizer steps (oracles)
};

/// Deterministic per-fold model construction: fresh init from a seed derived
/// from (config seed, fold).
VmBeautyNet build_fold_model(const RunConfig& cfg, int fold);

/// End-to-end loop: per batch augment, dual forward, fuse, MSE, zero-grad,
/// backward, AdamW step; per-epoch mean train loss and test-fold metrics;
/// optional per-epoch checkpoints with keep-last retention.
TrainResult train(VmBeautyNet& model, const DatasetManifest& manifest, int test_fold,
                  const RunConfig& cfg, const TrainOptions& opts = {});

struct CrossValResult {
    std::vector<MetricsReport> folds;
    MetricsReport mean;
};

/// K independent train+eval runs (fresh init per fold, fold-derived seeds).
CrossValResult cross_validate(const DatasetManifest& manifest, const RunConfig& cfg,
                              const TrainOptions& opts = {});

std::string history_csv(const std::vector<EpochStats>& history);

} // namespace vmb
