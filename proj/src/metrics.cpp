#include "vmb/metrics.hpp"

#include <cmath>
#include <string>

#include "vmb/error.hpp"

namespace vmb {

namespace {
void check_lengths(const char* op, const std::vector<double>& a, const std::vector<double>& b,
                   std::size_t min_len) {
    if (a.size() != b.size()) {
        throw ShapeError(std::string(op) + ": length mismatch, " + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()));
    }
    if (a.size() < min_len) {
        throw NumericalError(std::string(op) + ": needs at least " + std::to_string(min_len) +
                             " samples, got " + std::to_string(a.size()));
    }
}
} // namespace

double pearson(const std::vector<double>& pred, const std::vector<double>& target) {
    check_lengths("pearson", pred, target, 2);
    const double inv_m = 1.0 / static_cast<double>(pred.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        mx += pred[i];
        my += target[i];
    }
    mx *= inv_m;
    my *= inv_m;
    double cov = 0.0, vx = 0.0, vy = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double dx = pred[i] - mx;
        const double dy = target[i] - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if (vx == 0.0 || vy == 0.0) {
        throw NumericalError("pearson: zero-variance (constant) input vector");
    }
    return cov / std::sqrt(vx * vy);
}

double mae(const std::vector<double>& pred, const std::vector<double>& target) {
    check_lengths("mae", pred, target, 1);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - target[i]);
    return acc / static_cast<double>(pred.size());
}

double rmse(const std::vector<double>& pred, const std::vector<double>& target) {
    check_lengths("rmse", pred, target, 1);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(pred.size()));
}

MetricsReport compute_report(const std::vector<double>& pred, const std::vector<double>& target) {
    MetricsReport r;
    r.pc = pearson(pred, target);
    r.mae = mae(pred, target);
    r.rmse = rmse(pred, target);
    r.n = static_cast<std::int64_t>(pred.size());
    r.residuals.resize(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) r.residuals[i] = pred[i] - target[i];
    return r;
}

} // namespace vmb
