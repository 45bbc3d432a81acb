#include "vmb/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "vmb/context.hpp"

namespace fs = std::filesystem;

namespace vmb {

const double kImagenetMean[3] = {0.485, 0.456, 0.406};
const double kImagenetStd[3] = {0.229, 0.224, 0.225};

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open manifest: " + path);
    DatasetManifest m;
    m.base_dir = fs::path(path).parent_path().string();
    std::string line;
    int ln = 0;
    if (!std::getline(in, line)) throw DataError("empty manifest: " + path);
    ++ln;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "image_path,score,fold") {
        throw DataError("manifest " + path + " line 1: expected header 'image_path,score,fold'");
    }
    int max_fold = 0;
    while (std::getline(in, line)) {
        ++ln;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos ||
            line.find(',', c2 + 1) != std::string::npos) {
            throw DataError("manifest " + path + " line " + std::to_string(ln) +
                            ": expected 3 comma-separated fields");
        }
        ManifestRecord r;
        r.image_path = line.substr(0, c1);
        const std::string score_s = line.substr(c1 + 1, c2 - c1 - 1);
        const std::string fold_s = line.substr(c2 + 1);
        auto sres = std::from_chars(score_s.data(), score_s.data() + score_s.size(), r.score);
        if (sres.ec != std::errc() || sres.ptr != score_s.data() + score_s.size()) {
            throw DataError("manifest " + path + " line " + std::to_string(ln) +
                            ": bad score '" + score_s + "'");
        }
        auto fres = std::from_chars(fold_s.data(), fold_s.data() + fold_s.size(), r.fold);
        if (fres.ec != std::errc() || fres.ptr != fold_s.data() + fold_s.size()) {
            throw DataError("manifest " + path + " line " + std::to_string(ln) +
                            ": bad fold '" + fold_s + "'");
        }
        if (r.score < 1.0 || r.score > 5.0) {
            throw DataError("manifest " + path + " line " + std::to_string(ln) + ": score " +
                            score_s + " outside [1, 5]");
        }
        if (r.fold < 1) {
            throw DataError("manifest " + path + " line " + std::to_string(ln) +
                            ": fold ids start at 1");
        }
        max_fold = std::max(max_fold, r.fold);
        m.records.push_back(std::move(r));
    }
    if (m.records.empty()) throw DataError("manifest has no records: " + path);
    m.fold_count = max_fold;
    std::set<int> present;
    for (const auto& r : m.records) present.insert(r.fold);
    for (int f = 1; f <= max_fold; ++f) {
        if (!present.count(f)) {
            throw DataError("manifest " + path + ": fold " + std::to_string(f) + " is empty");
        }
    }
    return m;
}

void save_manifest(const std::string& path, const DatasetManifest& manifest) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write manifest: " + path);
    out << "image_path,score,fold\n";
    for (const auto& r : manifest.records) {
        out << r.image_path << "," << format_double(r.score) << "," << r.fold << "\n";
    }
}

std::pair<std::vector<ManifestRecord>, std::vector<ManifestRecord>>
fold_split(const DatasetManifest& manifest, int test_fold) {
    if (test_fold < 1 || test_fold > manifest.fold_count) {
        throw ConfigError("test fold " + std::to_string(test_fold) + " outside 1.." +
                          std::to_string(manifest.fold_count));
    }
    std::vector<ManifestRecord> train, test;
    for (const auto& r : manifest.records) {
        (r.fold == test_fold ? test : train).push_back(r);
    }
    if (train.empty()) {
        throw DataError("fold split leaves no training records (single-fold manifest)");
    }
    return {std::move(train), std::move(test)};
}

Sample load_sample(const ManifestRecord& record, const std::string& base_dir, int image_size,
                   bool train_mode, const AugmentConfig& aug, std::mt19937_64& rng) {
    fs::path p(record.image_path);
    if (p.is_relative() && !base_dir.empty()) p = fs::path(base_dir) / p;
    ImageF img = to_float(decode_image(p.string()));
    if (img.width != image_size || img.height != image_size) {
        img = resize_bilinear(img, image_size, image_size);
    }
    if (train_mode && aug.enabled) {
        std::uniform_real_distribution<double> coin(0.0, 1.0);
        std::uniform_real_distribution<double> angle(-aug.rotation_degrees, aug.rotation_degrees);
        const bool do_flip = coin(rng) < aug.flip_prob;
        const double deg = angle(rng);
        auto factor = [&rng](double strength) {
            std::uniform_real_distribution<double> f(std::max(0.0, 1.0 - strength), 1.0 + strength);
            return f(rng);
        };
        const double fb = factor(aug.jitter_brightness);
        const double fc = factor(aug.jitter_contrast);
        const double fs = factor(aug.jitter_saturation);
        if (do_flip) flip_horizontal(img);
        img = rotate_edge_replicate(img, deg);
        adjust_brightness(img, fb);
        adjust_contrast(img, fc);
        adjust_saturation(img, fs);
    }
    std::vector<double> px(img.planes.size());
    const std::size_t plane = static_cast<std::size_t>(image_size) * image_size;
    for (int c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < plane; ++i) {
            px[static_cast<std::size_t>(c) * plane + i] =
                (img.planes[static_cast<std::size_t>(c) * plane + i] - kImagenetMean[c]) /
                kImagenetStd[c];
        }
    }
    NoGradGuard ng;
    Sample s;
    s.pixels = Tensor::from_data({3, image_size, image_size}, std::move(px));
    s.score = record.score;
    return s;
}

DatasetManifest synth_dataset(const std::string& out_dir, int n, int image_size,
                              std::uint64_t seed, int folds) {
    if (folds < 1) throw ConfigError("synth: fold count must be >= 1");
    if (n < folds) {
        throw ConfigError("synth: n = " + std::to_string(n) + " is smaller than the fold count " +
                          std::to_string(folds));
    }
    if (image_size < 8) throw ConfigError("synth: image size must be >= 8");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw DataError("cannot create output directory: " + out_dir);

    DatasetManifest m;
    m.base_dir = out_dir;
    m.fold_count = folds;
    const double size = static_cast<double>(image_size);
    for (int i = 0; i < n; ++i) {
        std::mt19937_64 rng(derive_seed(seed, "synth", static_cast<std::uint64_t>(i)));
        std::uniform_real_distribution<double> lat(-2.0, 2.0);
        std::uniform_real_distribution<double> pos(0.3, 0.7);
        std::uniform_real_distribution<double> phase(0.0, 2.0 * 3.14159265358979323846);
        std::uniform_int_distribution<int> freq(1, 3);
        std::uniform_real_distribution<double> noise(-8.0, 8.0);

        const double u = lat(rng);
        const double sig = 1.0 / (1.0 + std::exp(-u));
        const double score = 1.0 + 4.0 * sig;
        const double amp = 60.0 + 60.0 * sig;
        const double cx = pos(rng) * size;
        const double cy = pos(rng) * size;
        const double blob_sigma = size / 6.0;
        const double ph1 = phase(rng), ph2 = phase(rng);
        const int f1 = freq(rng), f2 = freq(rng);

        ImageU8 img;
        img.width = image_size;
        img.height = image_size;
        img.rgb.resize(static_cast<std::size_t>(image_size) * image_size * 3);
        const double chan_gain[3] = {1.03, 1.0, 0.97};
        for (int y = 0; y < image_size; ++y) {
            for (int x = 0; x < image_size; ++x) {
                const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                const double blob = amp * std::exp(-r2 / (2.0 * blob_sigma * blob_sigma));
                const double tex = 6.0 * std::sin(2.0 * 3.14159265358979323846 * f1 * x / size + ph1) *
                                   std::cos(2.0 * 3.14159265358979323846 * f2 * y / size + ph2);
                const double base = 90.0 + blob + tex + noise(rng);
                for (int c = 0; c < 3; ++c) {
                    const double v = std::clamp(base * chan_gain[c], 0.0, 255.0);
                    img.rgb[(static_cast<std::size_t>(y) * image_size + x) * 3 +
                            static_cast<std::size_t>(c)] =
                        static_cast<std::uint8_t>(std::lround(v));
                }
            }
        }
        char name[32];
        std::snprintf(name, sizeof(name), "img_%05d.png", i);
        write_png((fs::path(out_dir) / name).string(), img);
        ManifestRecord r;
        r.image_path = name;
        r.score = score;
        r.fold = (i % folds) + 1;
        m.records.push_back(std::move(r));
    }
    save_manifest((fs::path(out_dir) / "manifest.csv").string(), m);
    return m;
}

} // namespace vmb
