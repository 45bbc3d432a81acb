#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "vmb/context.hpp"
#include "vmb/error.hpp"

namespace vmb {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad; // empty until backward touches it
    bool requires_grad = false;
};

/// Value-semantics handle over a contiguous N-d array. Ops on tensors whose
/// operands require gradients are recorded on the thread-local tape.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0,
                        bool requires_grad = false);
    static Tensor rand_uniform(Shape shape, std::mt19937_64& rng, double lo, double hi,
                               bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::int64_t dim(std::size_t axis) const { return impl_->shape[axis]; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::int64_t numel() const { return static_cast<std::int64_t>(impl_->data.size()); }

    const std::vector<double>& data() const { return impl_->data; }
    std::vector<double>& mutable_data() { return impl_->data; }
    double at(std::int64_t flat) const { return impl_->data[static_cast<std::size_t>(flat)]; }

    /// Scalar value; throws ShapeError unless numel() == 1.
    double item() const;

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool v) { impl_->requires_grad = v; return *this; }

    bool has_grad() const { return !impl_->grad.empty(); }
    const std::vector<double>& grad() const;
    void zero_grad();

    const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

private:
    std::shared_ptr<TensorImpl> impl_;
};

// ---------------------------------------------------------------------------
// Gradient tape

struct TapeNode {
    const char* op = "";
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::shared_ptr<TensorImpl> output;
    std::function<void()> backward;
};

/// Thread-local record of forward ops in creation order (which is a
/// topological order). One backward pass walks it once, in reverse,
/// accumulating into operand grads.
class GradTape {
public:
    static GradTape& current();

    bool enabled() const { return enabled_; }
    void set_enabled(bool on) { enabled_ = on; }

    void record(TapeNode node);
    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    /// Zeroes grad buffers of every tensor the tape has seen (for multi-root
    /// backward passes over one forward graph).
    void zero_grads();

    void backward_from(const std::shared_ptr<TensorImpl>& root);

private:
    std::vector<TapeNode> nodes_;
    bool enabled_ = true;
};

struct NoGradGuard {
    NoGradGuard() : prev_(GradTape::current().enabled()) { GradTape::current().set_enabled(false); }
    ~NoGradGuard() { GradTape::current().set_enabled(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

/// Reverse pass from a scalar root, then releases the tape.
void backward(const Tensor& root);
/// Reverse pass that keeps the tape so another root can be replayed after
/// GradTape::current().zero_grads().
void backward_retain(const Tensor& root);

// ---------------------------------------------------------------------------
// Ops. Broadcasting is trailing-axes only: the smaller operand's shape must
// equal a suffix of the larger one's; anything else is an explicit reshape.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor exp(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor softplus(const Tensor& a);

Tensor softmax(const Tensor& a, int axis);
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

Tensor reshape(const Tensor& a, Shape new_shape);
Tensor transpose(const Tensor& a, std::vector<int> axes = {});
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, const std::vector<std::int64_t>& starts,
             const std::vector<std::int64_t>& sizes);
Tensor flip(const Tensor& a, int axis);

/// Depthwise causal 1-d convolution over the leading (token) axis.
/// x: [S, D], weight: [D, K]; output t depends on inputs at positions <= t.
Tensor causal_conv1d(const Tensor& x, const Tensor& weight);

} // namespace vmb
