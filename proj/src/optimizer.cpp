#include "vmb/optimizer.hpp"

#include <cmath>

#include "vmb/context.hpp"

namespace vmb {

AdamW::AdamW(std::vector<NamedParam> params, Options opts)
    : params_(std::move(params)), opts_(opts) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0);
        v_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0);
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

double AdamW::clip_global_norm(double max_norm) {
    double sq = 0.0;
    for (const auto& p : params_) {
        if (!p.tensor.has_grad()) continue;
        for (double g : p.tensor.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double scale = max_norm / norm;
        for (auto& p : params_) {
            if (!p.tensor.has_grad()) continue;
            for (double& g : p.tensor.impl()->grad) g *= scale;
        }
    }
    return norm;
}

void AdamW::step(double lr_scale) {
    ++step_count_;
    const double lr = opts_.lr * lr_scale;
    const double b1 = opts_.beta1, b2 = opts_.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
    const Precision prec = precision();
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        auto& t = params_[pi].tensor;
        if (!t.has_grad()) {
            throw Error("adamw: parameter '" + params_[pi].name + "' has no gradient");
        }
        auto& data = t.mutable_data();
        const auto& grad = t.grad();
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double g = grad[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            const double theta = data[i];
            data[i] = quantize(theta - lr * mhat / (std::sqrt(vhat) + opts_.eps) -
                                   lr * opts_.weight_decay * theta,
                               prec);
        }
    }
}

} // namespace vmb
