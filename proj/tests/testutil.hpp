#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "vmb/context.hpp"
#include "vmb/tensor.hpp"

namespace vmb::test {

/// Forces 64-bit arithmetic (finite-difference headroom) and NaN scanning
/// for the scope of a test.
struct F64Guard {
    Precision prev;
    bool prev_nan;
    F64Guard() : prev(precision()), prev_nan(nan_check_enabled()) {
        set_precision(Precision::f64);
        set_nan_check(true);
    }
    ~F64Guard() {
        set_precision(prev);
        set_nan_check(prev_nan);
    }
};

struct GradCheckOutcome {
    bool pass = true;
    double worst_abs_diff = 0.0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::string where;
};

/// Central finite-difference oracle. `rebuild` must construct the forward
/// graph from the parameters' current data and return the scalar output; it
/// is re-invoked once per perturbed element, so it must be a pure function
/// of the parameter tensors.
/// Pass condition per element: |a - n| <= tol*max(|a|,|n|) + abs_floor. The
/// floor absorbs FD truncation noise where the true gradient nearly cancels;
/// wrong backward rules miss by the gradient's own magnitude, far above it.
inline GradCheckOutcome gradcheck(const std::function<Tensor()>& rebuild,
                                  const std::vector<Tensor>& params, double tol = 1e-4,
                                  double h = 1e-3, double abs_floor = 1e-6) {
    auto& tape = GradTape::current();
    tape.clear();
    Tensor out = rebuild();
    backward(out);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) {
        // params the graph never touched have an identically zero gradient
        analytic.push_back(p.has_grad() ? p.grad()
                                        : std::vector<double>(static_cast<std::size_t>(p.numel()), 0.0));
    }
    for (auto p : params) p.zero_grad();

    GradCheckOutcome res;
    NoGradGuard ng;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& data = const_cast<Tensor&>(params[pi]).mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double orig = data[i];
            data[i] = orig + h;
            const double f_plus = rebuild().item();
            data[i] = orig - h;
            const double f_minus = rebuild().item();
            data[i] = orig;
            const double numeric = (f_plus - f_minus) / (2.0 * h);
            const double a = analytic[pi][i];
            const double diff = std::abs(a - numeric);
            const double bound = tol * std::max(std::abs(a), std::abs(numeric)) + abs_floor;
            if (diff > bound && diff > res.worst_abs_diff) {
                res.pass = false;
                res.worst_abs_diff = diff;
                res.worst_analytic = a;
                res.worst_numeric = numeric;
                res.where = "param " + std::to_string(pi) + " elem " + std::to_string(i);
            }
        }
    }
    return res;
}

inline Tensor randn_param(Shape shape, std::mt19937_64& rng, double stddev = 1.0) {
    return Tensor::randn(std::move(shape), rng, stddev, true);
}

} // namespace vmb::test
