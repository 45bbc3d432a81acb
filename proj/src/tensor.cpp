#include "vmb/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <utility>

namespace vmb {

std::int64_t numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ", ";
        os << s[i];
    }
    os << ']';
    return os.str();
}

namespace {

std::shared_ptr<TensorImpl> make_impl(Shape shape, bool requires_grad) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data.assign(static_cast<std::size_t>(numel(impl->shape)), 0.0);
    impl->requires_grad = requires_grad;
    return impl;
}

void ensure_grad(TensorImpl& t) {
    if (t.grad.empty()) t.grad.assign(t.data.size(), 0.0);
}

void check_finite(const char* op, const TensorImpl& t) {
    if (!nan_check_enabled()) return;
    for (double v : t.data) {
        if (!std::isfinite(v)) {
            throw NumericalError(std::string("op '") + op + "' produced a non-finite value");
        }
    }
}

bool grad_needed(std::initializer_list<const Tensor*> inputs) {
    if (!GradTape::current().enabled()) return false;
    for (const Tensor* t : inputs) {
        if (t->requires_grad()) return true;
    }
    return false;
}

Tensor finish_op(const char* op, std::shared_ptr<TensorImpl> out,
                 std::vector<std::shared_ptr<TensorImpl>> inputs, bool record,
                 std::function<void()> backward) {
    check_finite(op, *out);
    if (record) {
        out->requires_grad = true;
        GradTape::current().record(TapeNode{op, std::move(inputs), out, std::move(backward)});
    }
    return Tensor(out);
}

} // namespace

// ---------------------------------------------------------------------------
// Tensor basics

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return Tensor(make_impl(std::move(shape), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    auto impl = make_impl(std::move(shape), requires_grad);
    const double q = quantize(value);
    std::fill(impl->data.begin(), impl->data.end(), q);
    return Tensor(impl);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return full({1}, value, requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    if (vmb::numel(shape) != static_cast<std::int64_t>(data.size())) {
        throw ShapeError("from_data: shape " + shape_str(shape) + " does not hold " +
                         std::to_string(data.size()) + " values");
    }
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    for (double& v : impl->data) v = quantize(v);
    impl->requires_grad = requires_grad;
    return Tensor(impl);
}

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, double stddev, bool requires_grad) {
    auto impl = make_impl(std::move(shape), requires_grad);
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : impl->data) v = quantize(dist(rng));
    return Tensor(impl);
}

Tensor Tensor::rand_uniform(Shape shape, std::mt19937_64& rng, double lo, double hi,
                            bool requires_grad) {
    auto impl = make_impl(std::move(shape), requires_grad);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& v : impl->data) v = quantize(dist(rng));
    return Tensor(impl);
}

double Tensor::item() const {
    if (numel() != 1) {
        throw ShapeError("item() requires a scalar tensor, got shape " + shape_str(shape()));
    }
    return impl_->data[0];
}

const std::vector<double>& Tensor::grad() const {
    if (impl_->grad.empty()) {
        throw Error("tensor has no gradient buffer; run backward() first");
    }
    return impl_->grad;
}

void Tensor::zero_grad() {
    std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

// ---------------------------------------------------------------------------
// Tape

GradTape& GradTape::current() {
    thread_local GradTape tape;
    return tape;
}

void GradTape::record(TapeNode node) { nodes_.push_back(std::move(node)); }

void GradTape::zero_grads() {
    for (TapeNode& n : nodes_) {
        for (auto& in : n.inputs) std::fill(in->grad.begin(), in->grad.end(), 0.0);
        std::fill(n.output->grad.begin(), n.output->grad.end(), 0.0);
    }
}

void GradTape::backward_from(const std::shared_ptr<TensorImpl>& root) {
    ensure_grad(*root);
    root->grad[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->output->grad.empty()) continue; // not on any path from the root
        it->backward();
    }
}

void backward(const Tensor& root) {
    backward_retain(root);
    GradTape::current().clear();
}

void backward_retain(const Tensor& root) {
    if (root.numel() != 1) {
        throw ShapeError("backward requires a scalar root, got shape " + shape_str(root.shape()));
    }
    if (!root.requires_grad()) {
        throw Error("backward root does not require gradients");
    }
    if (GradTape::current().size() == 0) {
        throw Error("backward called with an empty gradient tape");
    }
    GradTape::current().backward_from(root.impl());
}

// ---------------------------------------------------------------------------
// Broadcasting helpers (trailing-axes only)

namespace {

// Returns (big, small, big_is_a): small's shape must equal a suffix of big's.
struct BroadcastPlan {
    std::int64_t n_big = 0;
    std::int64_t n_small = 0;
    bool b_is_small = false; // true when operand b is the broadcast (smaller) one
    bool same = false;
};

BroadcastPlan plan_broadcast(const char* op, const Tensor& a, const Tensor& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    auto is_suffix = [](const Shape& small, const Shape& big) {
        if (small.size() > big.size()) return false;
        return std::equal(small.rbegin(), small.rend(), big.rbegin());
    };
    BroadcastPlan p;
    if (sa == sb) {
        p.n_big = a.numel();
        p.n_small = b.numel();
        p.b_is_small = true;
        p.same = true;
        return p;
    }
    if (is_suffix(sb, sa)) {
        p.n_big = a.numel();
        p.n_small = b.numel();
        p.b_is_small = true;
        return p;
    }
    if (is_suffix(sa, sb)) {
        p.n_big = b.numel();
        p.n_small = a.numel();
        p.b_is_small = false;
        return p;
    }
    throw ShapeError(std::string(op) + ": shapes " + shape_str(sa) + " and " + shape_str(sb) +
                     " are not trailing-broadcast compatible");
}

Tensor binary_op(const char* op, const Tensor& a, const Tensor& b,
                 double (*fwd)(double, double),
                 // d(out)/d(lhs input value) and d(out)/d(rhs input value)
                 double (*dfda)(double, double), double (*dfdb)(double, double)) {
    BroadcastPlan p = plan_broadcast(op, a, b);
    const Tensor& big = p.b_is_small ? a : b;
    const Tensor& small = p.b_is_small ? b : a;
    auto out = make_impl(big.shape(), false);
    const auto n = static_cast<std::size_t>(p.n_big);
    const auto m = static_cast<std::size_t>(p.n_small);
    const Precision prec = precision();
    for (std::size_t i = 0; i < n; ++i) {
        const double av = p.b_is_small ? big.at(static_cast<std::int64_t>(i))
                                       : small.at(static_cast<std::int64_t>(i % m));
        const double bv = p.b_is_small ? small.at(static_cast<std::int64_t>(i % m))
                                       : big.at(static_cast<std::int64_t>(i));
        out->data[i] = quantize(fwd(av, bv), prec);
    }
    const bool rec = grad_needed({&a, &b});
    auto ai = a.impl();
    auto bi = b.impl();
    return finish_op(op, out, {ai, bi}, rec, [=]() {
        const auto& g = out->grad;
        const bool need_a = ai->requires_grad;
        const bool need_b = bi->requires_grad;
        if (need_a) ensure_grad(*ai);
        if (need_b) ensure_grad(*bi);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t ia = p.b_is_small ? i : i % m;
            const std::size_t ib = p.b_is_small ? i % m : i;
            const double av = ai->data[ia];
            const double bv = bi->data[ib];
            if (need_a) ai->grad[ia] += g[i] * dfda(av, bv);
            if (need_b) bi->grad[ib] += g[i] * dfdb(av, bv);
        }
    });
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double, double y) { return y; }, [](double x, double) { return x; });
}

namespace {

Tensor unary_op(const char* op, const Tensor& a, const std::function<double(double)>& fwd,
                // derivative from input x and output y
                const std::function<double(double, double)>& dydx) {
    auto out = make_impl(a.shape(), false);
    const Precision prec = precision();
    const auto n = a.data().size();
    for (std::size_t i = 0; i < n; ++i) out->data[i] = quantize(fwd(a.data()[i]), prec);
    const bool rec = grad_needed({&a});
    auto ai = a.impl();
    return finish_op(op, out, {ai}, rec, [=]() {
        ensure_grad(*ai);
        for (std::size_t i = 0; i < n; ++i) {
            ai->grad[i] += out->grad[i] * dydx(ai->data[i], out->data[i]);
        }
    });
}

double sigmoid_v(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double softplus_v(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

} // namespace

Tensor add_scalar(const Tensor& a, double c) {
    return unary_op(
        "add_scalar", a, [c](double x) { return x + c; },
        [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double c) {
    return unary_op(
        "mul_scalar", a, [c](double x) { return x * c; },
        [c](double, double) { return c; });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor exp(const Tensor& a) {
    return unary_op(
        "exp", a, [](double x) { return std::exp(x); },
        [](double, double y) { return y; });
}

Tensor tanh(const Tensor& a) {
    return unary_op(
        "tanh", a, [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
    return unary_op(
        "sigmoid", a, [](double x) { return sigmoid_v(x); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor silu(const Tensor& a) {
    return unary_op(
        "silu", a, [](double x) { return x * sigmoid_v(x); },
        [](double x, double) {
            const double s = sigmoid_v(x);
            return s * (1.0 + x * (1.0 - s));
        });
}

Tensor gelu(const Tensor& a) {
    // exact erf form: x * Phi(x)
    constexpr double kInvSqrt2 = 0.7071067811865475244;
    constexpr double kInvSqrt2Pi = 0.3989422804014326779;
    return unary_op(
        "gelu", a,
        [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
        [](double x, double) {
            const double phi_cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
            const double phi_pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
            return phi_cdf + x * phi_pdf;
        });
}

Tensor softplus(const Tensor& a) {
    return unary_op(
        "softplus", a, [](double x) { return softplus_v(x); },
        [](double x, double) { return sigmoid_v(x); });
}

// ---------------------------------------------------------------------------
// matmul

namespace {

struct MatmulPlan {
    std::int64_t batch = 1;
    std::int64_t m = 0, k = 0, n = 0;
    bool a_batched = false;
    bool b_batched = false;
    Shape out_shape;
};

MatmulPlan plan_matmul(const Tensor& a, const Tensor& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() < 2 || sb.size() < 2) {
        throw ShapeError("matmul: operands must have rank >= 2, got " + shape_str(sa) + " and " +
                         shape_str(sb));
    }
    MatmulPlan p;
    p.m = sa[sa.size() - 2];
    p.k = sa[sa.size() - 1];
    p.n = sb[sb.size() - 1];
    if (sb[sb.size() - 2] != p.k) {
        throw ShapeError("matmul: inner extents mismatch between " + shape_str(sa) + " and " +
                         shape_str(sb));
    }
    Shape batch_a(sa.begin(), sa.end() - 2);
    Shape batch_b(sb.begin(), sb.end() - 2);
    Shape batch;
    if (batch_a == batch_b) {
        batch = batch_a;
        p.a_batched = !batch_a.empty();
        p.b_batched = !batch_b.empty();
    } else if (batch_b.empty()) {
        batch = batch_a;
        p.a_batched = true;
    } else if (batch_a.empty()) {
        batch = batch_b;
        p.b_batched = true;
    } else {
        throw ShapeError("matmul: batch extents of " + shape_str(sa) + " and " + shape_str(sb) +
                         " do not broadcast");
    }
    p.batch = numel(batch);
    p.out_shape = batch;
    p.out_shape.push_back(p.m);
    p.out_shape.push_back(p.n);
    return p;
}

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    MatmulPlan p = plan_matmul(a, b);
    auto out = make_impl(p.out_shape, false);
    const Precision prec = precision();
    const std::size_t mk = static_cast<std::size_t>(p.m * p.k);
    const std::size_t kn = static_cast<std::size_t>(p.k * p.n);
    const std::size_t mn = static_cast<std::size_t>(p.m * p.n);
    for (std::int64_t bi = 0; bi < p.batch; ++bi) {
        const double* pa = a.data().data() + (p.a_batched ? bi * static_cast<std::int64_t>(mk) : 0);
        const double* pb = b.data().data() + (p.b_batched ? bi * static_cast<std::int64_t>(kn) : 0);
        double* pc = out->data.data() + bi * static_cast<std::int64_t>(mn);
        for (std::int64_t i = 0; i < p.m; ++i) {
            for (std::int64_t kk = 0; kk < p.k; ++kk) {
                const double av = pa[i * p.k + kk];
                if (av == 0.0) continue;
                const double* brow = pb + kk * p.n;
                double* crow = pc + i * p.n;
                for (std::int64_t j = 0; j < p.n; ++j) crow[j] += av * brow[j];
            }
        }
        if (prec == Precision::f32) {
            for (std::size_t i = 0; i < mn; ++i) pc[i] = quantize(pc[i], prec);
        }
    }
    const bool rec = grad_needed({&a, &b});
    auto ai = a.impl();
    auto bi_ = b.impl();
    return finish_op("matmul", out, {ai, bi_}, rec, [=]() {
        const bool need_a = ai->requires_grad;
        const bool need_b = bi_->requires_grad;
        if (need_a) ensure_grad(*ai);
        if (need_b) ensure_grad(*bi_);
        for (std::int64_t batch = 0; batch < p.batch; ++batch) {
            const double* pa =
                ai->data.data() + (p.a_batched ? batch * static_cast<std::int64_t>(mk) : 0);
            const double* pb =
                bi_->data.data() + (p.b_batched ? batch * static_cast<std::int64_t>(kn) : 0);
            const double* pg = out->grad.data() + batch * static_cast<std::int64_t>(mn);
            if (need_a) {
                double* ga = ai->grad.data() + (p.a_batched ? batch * static_cast<std::int64_t>(mk) : 0);
                // dA = dY . B^T
                for (std::int64_t i = 0; i < p.m; ++i) {
                    for (std::int64_t kk = 0; kk < p.k; ++kk) {
                        double acc = 0.0;
                        const double* grow = pg + i * p.n;
                        const double* brow = pb + kk * p.n;
                        for (std::int64_t j = 0; j < p.n; ++j) acc += grow[j] * brow[j];
                        ga[i * p.k + kk] += acc;
                    }
                }
            }
            if (need_b) {
                double* gb = bi_->grad.data() + (p.b_batched ? batch * static_cast<std::int64_t>(kn) : 0);
                // dB = A^T . dY
                for (std::int64_t kk = 0; kk < p.k; ++kk) {
                    for (std::int64_t i = 0; i < p.m; ++i) {
                        const double av = pa[i * p.k + kk];
                        if (av == 0.0) continue;
                        const double* grow = pg + i * p.n;
                        double* brow = gb + kk * p.n;
                        for (std::int64_t j = 0; j < p.n; ++j) brow[j] += av * grow[j];
                    }
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// softmax / layernorm

Tensor softmax(const Tensor& a, int axis) {
    const auto rank = static_cast<int>(a.rank());
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) {
        throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                         shape_str(a.shape()));
    }
    const std::int64_t len = a.shape()[static_cast<std::size_t>(axis)];
    std::int64_t inner = 1;
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < a.rank(); ++i) inner *= a.shape()[i];
    const std::int64_t outer = a.numel() / (len * inner);
    auto out = make_impl(a.shape(), false);
    const Precision prec = precision();
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t in = 0; in < inner; ++in) {
            const std::int64_t base = o * len * inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::int64_t t = 0; t < len; ++t) mx = std::max(mx, a.at(base + t * inner));
            double sum = 0.0;
            for (std::int64_t t = 0; t < len; ++t) {
                const double e = std::exp(a.at(base + t * inner) - mx);
                out->data[static_cast<std::size_t>(base + t * inner)] = e;
                sum += e;
            }
            const double inv = 1.0 / sum;
            for (std::int64_t t = 0; t < len; ++t) {
                auto& v = out->data[static_cast<std::size_t>(base + t * inner)];
                v = quantize(v * inv, prec);
            }
        }
    }
    const bool rec = grad_needed({&a});
    auto ai = a.impl();
    return finish_op("softmax", out, {ai}, rec, [=]() {
        ensure_grad(*ai);
        for (std::int64_t o = 0; o < outer; ++o) {
            for (std::int64_t in = 0; in < inner; ++in) {
                const std::int64_t base = o * len * inner + in;
                double dot = 0.0;
                for (std::int64_t t = 0; t < len; ++t) {
                    const auto idx = static_cast<std::size_t>(base + t * inner);
                    dot += out->grad[idx] * out->data[idx];
                }
                for (std::int64_t t = 0; t < len; ++t) {
                    const auto idx = static_cast<std::size_t>(base + t * inner);
                    ai->grad[idx] += out->data[idx] * (out->grad[idx] - dot);
                }
            }
        }
    });
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (x.rank() < 1) throw ShapeError("layernorm: input must have rank >= 1");
    const std::int64_t d = x.shape().back();
    if (gain.rank() != 1 || gain.dim(0) != d || bias.rank() != 1 || bias.dim(0) != d) {
        throw ShapeError("layernorm: gain/bias must be rank-1 of extent " + std::to_string(d) +
                         ", got " + shape_str(gain.shape()) + " and " + shape_str(bias.shape()));
    }
    const std::int64_t rows = x.numel() / d;
    auto out = make_impl(x.shape(), false);
    auto xhat = std::make_shared<std::vector<double>>(x.data().size());
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));
    const Precision prec = precision();
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* px = x.data().data() + r * d;
        double mean = 0.0;
        for (std::int64_t j = 0; j < d; ++j) mean += px[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::int64_t j = 0; j < d; ++j) {
            const double c = px[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double istd = 1.0 / std::sqrt(var + eps);
        (*inv_std)[static_cast<std::size_t>(r)] = istd;
        for (std::int64_t j = 0; j < d; ++j) {
            const double xh = (px[j] - mean) * istd;
            (*xhat)[static_cast<std::size_t>(r * d + j)] = xh;
            out->data[static_cast<std::size_t>(r * d + j)] =
                quantize(gain.at(j) * xh + bias.at(j), prec);
        }
    }
    const bool rec = grad_needed({&x, &gain, &bias});
    auto xi = x.impl();
    auto gi = gain.impl();
    auto bi = bias.impl();
    return finish_op("layernorm", out, {xi, gi, bi}, rec, [=]() {
        const bool need_x = xi->requires_grad;
        const bool need_g = gi->requires_grad;
        const bool need_b = bi->requires_grad;
        if (need_x) ensure_grad(*xi);
        if (need_g) ensure_grad(*gi);
        if (need_b) ensure_grad(*bi);
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* gy = out->grad.data() + r * d;
            const double* xh = xhat->data() + r * d;
            const double istd = (*inv_std)[static_cast<std::size_t>(r)];
            if (need_g || need_b) {
                for (std::int64_t j = 0; j < d; ++j) {
                    if (need_g) gi->grad[static_cast<std::size_t>(j)] += gy[j] * xh[j];
                    if (need_b) bi->grad[static_cast<std::size_t>(j)] += gy[j];
                }
            }
            if (need_x) {
                double mean_gdy = 0.0, mean_gdy_xh = 0.0;
                for (std::int64_t j = 0; j < d; ++j) {
                    const double gdy = gy[j] * gi->data[static_cast<std::size_t>(j)];
                    mean_gdy += gdy;
                    mean_gdy_xh += gdy * xh[j];
                }
                mean_gdy /= static_cast<double>(d);
                mean_gdy_xh /= static_cast<double>(d);
                for (std::int64_t j = 0; j < d; ++j) {
                    const double gdy = gy[j] * gi->data[static_cast<std::size_t>(j)];
                    xi->grad[static_cast<std::size_t>(r * d + j)] +=
                        istd * (gdy - mean_gdy - xh[j] * mean_gdy_xh);
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// reductions

Tensor sum_all(const Tensor& a) {
    auto out = make_impl({1}, false);
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    out->data[0] = quantize(acc);
    const bool rec = grad_needed({&a});
    auto ai = a.impl();
    return finish_op("sum_all", out, {ai}, rec, [=]() {
        ensure_grad(*ai);
        const double g = out->grad[0];
        for (double& gv : ai->grad) gv += g;
    });
}

Tensor mean_all(const Tensor& a) {
    auto out = make_impl({1}, false);
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    const double inv_n = 1.0 / static_cast<double>(a.numel());
    out->data[0] = quantize(acc * inv_n);
    const bool rec = grad_needed({&a});
    auto ai = a.impl();
    return finish_op("mean_all", out, {ai}, rec, [=]() {
        ensure_grad(*ai);
        const double g = out->grad[0] * inv_n;
        for (double& gv : ai->grad) gv += g;
    });
}

// ---------------------------------------------------------------------------
// data-movement ops (exact: no re-quantization)

Tensor reshape(const Tensor& a, Shape new_shape) {
    if (numel(new_shape) != a.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(new_shape));
    }
    auto out = std::make_shared<TensorImpl>();
    out->shape = std::move(new_shape);
    out->data = a.data();
    const bool rec = grad_needed({&a});
    auto ai = a.impl();
    return finish_op("reshape", out, {ai}, rec, [=]() {
        ensure_grad(*ai);
        for (std::size_t i = 0; i < ai->grad.size(); ++i) ai->grad[i] += out->grad[i];
    });
}

Tensor transpose(const Tensor& a, std::vector<int> axes) {
    const auto rank = a.rank();
    if (axes.empty()) {
        axes.resize(rank);
        for (std::size_t i = 0; i < rank; ++i) axes[i] = static_cast<int>(rank - 1 - i);
    }
    if (axes.size() != rank) {
        throw ShapeError("transpose: permutation size " + std::to_string(axes.size()) +
                         " does not match rank " + std::to_string(rank));
    }
    std::vector<bool> seen(rank, false);
    for (int ax : axes) {
        if (ax < 0 || static_cast<std::size_t>(ax) >= rank || seen[static_cast<std::size_t>(ax)]) {
            throw ShapeError("transpose: invalid permutation for shape " + shape_str(a.shape()));
        }
        seen[static_cast<std::size_t>(ax)] = true;
    }
    Shape out_shape(rank);
    for (std::size_t i = 0; i < rank; ++i) out_shape[i] = a.shape()[static_cast<std::size_t>(axes[i])];
    // strides of the input, gathered in output-axis order
    std::vector<std::int64_t> in_strides(rank, 1);
    for (std::size_t i = rank - 1; i > 0; --i) in_strides[i - 1] = in_strides[i] * a.shape()[i];
    std::vector<std::int64_t> gather(rank);
    for (std::size_t i = 0; i < rank; ++i) gather[i] = in_strides[static_cast<std::size_t>(axes[i])];

    auto out = make_impl(out_shape, false);
    const std::int64_t n = a.numel();
    auto map_index = [out_shape, gather, rank](std::int64_t flat) {
        std::int64_t src = 0;
        for (std::size_t i = rank; i-- > 0;) {
            const std::int64_t extent = out_shape[i];
            src += (flat % extent) * gather[i];
            flat /= extent;
        }
        return src;
    };
    for (std::int64_t i = 0; i < n; ++i) out->data[static_cast<std::size_t>(i)] = a.at(map_index(i));
    const bool rec = grad_needed({&a});
    auto ai = a.impl();
    return finish_op("transpose", out, {ai}, rec, [=]() {
        ensure_grad(*ai);
        for (std::int64_t i = 0; i < n; ++i) {
            ai->grad[static_cast<std::size_t>(map_index(i))] += out->grad[static_cast<std::size_t>(i)];
        }
    });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no operands");
    const auto rank = static_cast<int>(parts[0].rank());
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) throw ShapeError("concat: invalid axis");
    Shape out_shape = parts[0].shape();
    std::int64_t axis_total = 0;
    for (const Tensor& t : parts) {
        if (static_cast<int>(t.rank()) != rank) throw ShapeError("concat: rank mismatch");
        for (int i = 0; i < rank; ++i) {
            if (i != axis && t.shape()[static_cast<std::size_t>(i)] != out_shape[static_cast<std::size_t>(i)]) {
                throw ShapeError("concat: shapes " + shape_str(out_shape) + " and " +
                                 shape_str(t.shape()) + " differ off-axis");
            }
        }
        axis_total += t.shape()[static_cast<std::size_t>(axis)];
    }
    out_shape[static_cast<std::size_t>(axis)] = axis_total;
    std::int64_t inner = 1;
    for (int i = axis + 1; i < rank; ++i) inner *= out_shape[static_cast<std::size_t>(i)];
    std::int64_t outer = 1;
    for (int i = 0; i < axis; ++i) outer *= out_shape[static_cast<std::size_t>(i)];

    auto out = make_impl(out_shape, false);
    const std::int64_t out_row = axis_total * inner;
    std::int64_t offset = 0;
    for (const Tensor& t : parts) {
        const std::int64_t block = t.shape()[static_cast<std::size_t>(axis)] * inner;
        for (std::int64_t o = 0; o < outer; ++o) {
            std::copy_n(t.data().data() + o * block, block,
                        out->data.data() + o * out_row + offset);
        }
        offset += block;
    }
    bool rec = GradTape::current().enabled();
    if (rec) {
        rec = false;
        for (const Tensor& t : parts) rec = rec || t.requires_grad();
    }
    std::vector<std::shared_ptr<TensorImpl>> impls;
    impls.reserve(parts.size());
    for (const Tensor& t : parts) impls.push_back(t.impl());
    std::vector<std::int64_t> blocks;
    for (const Tensor& t : parts) blocks.push_back(t.shape()[static_cast<std::size_t>(axis)] * inner);
    return finish_op("concat", out, impls, rec, [=]() {
        std::int64_t off = 0;
        for (std::size_t pi = 0; pi < impls.size(); ++pi) {
            auto& in = impls[pi];
            const std::int64_t block = blocks[pi];
            if (in->requires_grad) {
                ensure_grad(*in);
                for (std::int64_t o = 0; o < outer; ++o) {
                    const double* g = out->grad.data() + o * out_row + off;
                    double* gi = in->grad.data() + o * block;
                    for (std::int64_t i = 0; i < block; ++i) gi[i] += g[i];
                }
            }
            off += block;
        }
    });
}

Tensor slice(const Tensor& a, const std::vector<std::int64_t>& starts,
             const std::vector<std::int64_t>& sizes) {
    const auto rank = a.rank();
    if (starts.size() != rank || sizes.size() != rank) {
        throw ShapeError("slice: starts/sizes must match rank " + std::to_string(rank));
    }
    Shape out_shape(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        if (starts[i] < 0 || sizes[i] <= 0 || starts[i] + sizes[i] > a.shape()[i]) {
            throw ShapeError("slice: window out of bounds for shape " + shape_str(a.shape()));
        }
        out_shape[i] = sizes[i];
    }
    std::vector<std::int64_t> in_strides(rank, 1);
    for (std::size_t i = rank - 1; i > 0; --i) in_strides[i - 1] = in_strides[i] * a.shape()[i];
    auto out = make_impl(out_shape, false);
    const std::int64_t n = numel(out_shape);
    auto map_index = [out_shape, starts, in_strides, rank](std::int64_t flat) {
        std::int64_t src = 0;
        for (std::size_t i = rank; i-- > 0;) {
            const std::int64_t extent = out_shape[i];
            src += (flat % extent + starts[i]) * in_strides[i];
            flat /= extent;
        }
        return src;
    };
    for (std::int64_t i = 0; i < n; ++i) out->data[static_cast<std::size_t>(i)] = a.at(map_index(i));
    const bool rec = grad_needed({&a});
    auto ai = a.impl();
    return finish_op("slice", out, {ai}, rec, [=]() {
        ensure_grad(*ai);
        for (std::int64_t i = 0; i < n; ++i) {
            ai->grad[static_cast<std::size_t>(map_index(i))] += out->grad[static_cast<std::size_t>(i)];
        }
    });
}

Tensor flip(const Tensor& a, int axis) {
    const auto rank = static_cast<int>(a.rank());
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) throw ShapeError("flip: invalid axis");
    const std::int64_t len = a.shape()[static_cast<std::size_t>(axis)];
    std::int64_t inner = 1;
    for (int i = axis + 1; i < rank; ++i) inner *= a.shape()[static_cast<std::size_t>(i)];
    auto out = make_impl(a.shape(), false);
    auto mirror = [=](std::int64_t flat) {
        const std::int64_t o = flat / (len * inner);
        const std::int64_t t = (flat / inner) % len;
        const std::int64_t in = flat % inner;
        return o * len * inner + (len - 1 - t) * inner + in;
    };
    const std::int64_t n = a.numel();
    for (std::int64_t i = 0; i < n; ++i) out->data[static_cast<std::size_t>(i)] = a.at(mirror(i));
    const bool rec = grad_needed({&a});
    auto ai = a.impl();
    return finish_op("flip", out, {ai}, rec, [=]() {
        ensure_grad(*ai);
        for (std::int64_t i = 0; i < n; ++i) {
            ai->grad[static_cast<std::size_t>(mirror(i))] += out->grad[static_cast<std::size_t>(i)];
        }
    });
}

Tensor causal_conv1d(const Tensor& x, const Tensor& weight) {
    if (x.rank() != 2 || weight.rank() != 2) {
        throw ShapeError("causal_conv1d: expects x [S, D] and weight [D, K]");
    }
    const std::int64_t s = x.dim(0), d = x.dim(1), k = weight.dim(1);
    if (weight.dim(0) != d) {
        throw ShapeError("causal_conv1d: channel mismatch between " + shape_str(x.shape()) +
                         " and " + shape_str(weight.shape()));
    }
    auto out = make_impl(x.shape(), false);
    const Precision prec = precision();
    for (std::int64_t t = 0; t < s; ++t) {
        for (std::int64_t c = 0; c < d; ++c) {
            double acc = 0.0;
            for (std::int64_t j = 0; j < k; ++j) {
                const std::int64_t src = t - (k - 1) + j;
                if (src < 0) continue;
                acc += weight.at(c * k + j) * x.at(src * d + c);
            }
            out->data[static_cast<std::size_t>(t * d + c)] = quantize(acc, prec);
        }
    }
    const bool rec = grad_needed({&x, &weight});
    auto xi = x.impl();
    auto wi = weight.impl();
    return finish_op("causal_conv1d", out, {xi, wi}, rec, [=]() {
        const bool need_x = xi->requires_grad;
        const bool need_w = wi->requires_grad;
        if (need_x) ensure_grad(*xi);
        if (need_w) ensure_grad(*wi);
        for (std::int64_t t = 0; t < s; ++t) {
            for (std::int64_t c = 0; c < d; ++c) {
                const double g = out->grad[static_cast<std::size_t>(t * d + c)];
                if (g == 0.0) continue;
                for (std::int64_t j = 0; j < k; ++j) {
                    const std::int64_t src = t - (k - 1) + j;
                    if (src < 0) continue;
                    if (need_w) {
                        wi->grad[static_cast<std::size_t>(c * k + j)] +=
                            g * xi->data[static_cast<std::size_t>(src * d + c)];
                    }
                    if (need_x) {
                        xi->grad[static_cast<std::size_t>(src * d + c)] +=
                            g * wi->data[static_cast<std::size_t>(c * k + j)];
                    }
                }
            }
        }
    });
}

} // namespace vmb
