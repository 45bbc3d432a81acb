#pragma once

#include <cstdint>
#include <vector>

namespace vmb {

/// Population-form Pearson correlation. Throws NumericalError when either
/// vector is constant (zero variance) or has fewer than two entries.
double pearson(const std::vector<double>& pred, const std::vector<double>& target);

double mae(const std::vector<double>& pred, const std::vector<double>& target);
double rmse(const std::vector<double>& pred, const std::vector<double>& target);

struct MetricsReport {
    double pc = 0.0;
    double mae = 0.0;
    double rmse = 0.0;
    std::int64_t n = 0;
    std::vector<double> residuals; // per-sample prediction - target
};

MetricsReport compute_report(const std::vector<double>& pred, const std::vector<double>& target);

} // namespace vmb
