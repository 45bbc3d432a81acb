#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "vmb/image.hpp"
#include "vmb/runconfig.hpp"
#include "vmb/tensor.hpp"

namespace vmb {

struct ManifestRecord {
    std::string image_path; // relative paths resolve against the manifest's directory
    double score = 0.0;     // ground truth in [1, 5]
    int fold = 0;           // 1..K
};

struct DatasetManifest {
    std::vector<ManifestRecord> records;
    int fold_count = 5;
    std::string base_dir;
};

/// CSV with header `image_path,score,fold`, UTF-8, LF line endings.
DatasetManifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const DatasetManifest& manifest);

/// Partition by fold id: (train = all but test_fold, test = test_fold).
std::pair<std::vector<ManifestRecord>, std::vector<ManifestRecord>>
fold_split(const DatasetManifest& manifest, int test_fold);

struct Sample {
    Tensor pixels; // [3, S, S], channel-normalized
    double score = 0.0;
};

/// decode -> resize -> (train only: flip / rotate / jitter) -> normalize with
/// the standard ImageNet channel statistics. The eval path never touches rng.
Sample load_sample(const ManifestRecord& record, const std::string& base_dir, int image_size,
                   bool train_mode, const AugmentConfig& aug, std::mt19937_64& rng);

/// Procedural desk-scale dataset: a Gaussian blob whose brightness carries the
/// score (score = 1 + 4*sigmoid(latent)) over a textured background, folds
/// assigned round-robin. Same seed gives bit-identical files.
DatasetManifest synth_dataset(const std::string& out_dir, int n, int image_size,
                              std::uint64_t seed, int folds = 5);

extern const double kImagenetMean[3];
extern const double kImagenetStd[3];

} // namespace vmb
