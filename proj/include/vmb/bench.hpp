#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vmb {

struct BenchPoint {
    std::int64_t length = 0;
    double median_seconds = 0.0;
};

struct BenchResult {
    std::vector<BenchPoint> scan;
    std::vector<BenchPoint> attention;
    double scan_exponent = 0.0;      // log-log slope of time vs sequence length
    double attention_exponent = 0.0;
};

/// Times the production selective-scan kernel and the reference attention
/// core (softmax(QK^T/sqrt(D))V) at each length, median over `trials` runs.
/// Needs at least 3 lengths for the power-law fit.
BenchResult bench_scan(const std::vector<std::int64_t>& lengths, int trials, int dim = 192,
                       int d_state = 16, int expand = 2, std::uint64_t seed = 7);

std::string bench_csv(const BenchResult& r);
std::string bench_table(const BenchResult& r);

} // namespace vmb
