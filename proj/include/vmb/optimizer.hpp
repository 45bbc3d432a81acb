#pragma once

#include <vector>

#include "vmb/model.hpp"

namespace vmb {

/// Decoupled-weight-decay Adam. One step:
///   t += 1
///   m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2
///   mhat = m / (1 - b1^t); vhat = v / (1 - b2^t)
///   theta <- theta - lr*mhat/(sqrt(vhat)+eps) - lr*wd*theta
class AdamW {
public:
    struct Options {
        double lr = 1e-5;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 1e-2;
    };

    AdamW(std::vector<NamedParam> params, Options opts);

    void zero_grad();
    /// Applies one update; lr_scale rescales the base learning rate (for
    /// schedules). Throws when a parameter has no populated gradient.
    void step(double lr_scale = 1.0);

    std::int64_t step_count() const { return step_count_; }
    /// L2 norm over all parameter gradients; scales grads in place when the
    /// norm exceeds max_norm (> 0).
    double clip_global_norm(double max_norm);

private:
    std::vector<NamedParam> params_;
    Options opts_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::int64_t step_count_ = 0;
};

} // namespace vmb
