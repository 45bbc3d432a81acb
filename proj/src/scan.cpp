#include "vmb/scan.hpp"

#include <cmath>
#include <cstring>
#include <vector>

namespace vmb {

namespace {
constexpr std::int64_t kChunk = 64;

void check_scan_shapes(const char* op, const Tensor& x, const Tensor& delta, const Tensor& a,
                       const Tensor& b, const Tensor& c) {
    if (x.rank() != 2 || delta.rank() != 2 || a.rank() != 2 || b.rank() != 2 || c.rank() != 2) {
        throw ShapeError(std::string(op) + ": all operands must be rank 2");
    }
    const std::int64_t s = x.dim(0), d = x.dim(1), n = a.dim(1);
    if (delta.dim(0) != s || delta.dim(1) != d) {
        throw ShapeError(std::string(op) + ": delta " + shape_str(delta.shape()) +
                         " does not match x " + shape_str(x.shape()));
    }
    if (a.dim(0) != d) {
        throw ShapeError(std::string(op) + ": a " + shape_str(a.shape()) +
                         " does not match channel extent " + std::to_string(d));
    }
    if (b.dim(0) != s || b.dim(1) != n || c.dim(0) != s || c.dim(1) != n) {
        throw ShapeError(std::string(op) + ": b/c must be [S, N] = [" + std::to_string(s) + ", " +
                         std::to_string(n) + "]");
    }
}
} // namespace

namespace {

// Both kernels iterate lanes (channel, state) with a contiguous per-channel
// time series; the token-major inputs are gathered into channel-major
// scratch rows once per channel so the t-loops stream linearly.
struct LaneScratch {
    std::vector<double> x_row, dt_row, y_row;     // [S] per channel
    std::vector<double> b_col, c_col;             // [N][S], transposed once
    void prepare_common(const double* b, const double* c, std::int64_t s, std::int64_t n) {
        b_col.resize(static_cast<std::size_t>(s * n));
        c_col.resize(static_cast<std::size_t>(s * n));
        for (std::int64_t t = 0; t < s; ++t) {
            for (std::int64_t st = 0; st < n; ++st) {
                b_col[static_cast<std::size_t>(st * s + t)] = b[t * n + st];
                c_col[static_cast<std::size_t>(st * s + t)] = c[t * n + st];
            }
        }
        x_row.resize(static_cast<std::size_t>(s));
        dt_row.resize(static_cast<std::size_t>(s));
        y_row.resize(static_cast<std::size_t>(s));
    }
    void gather_channel(const double* x, const double* delta, std::int64_t s, std::int64_t d,
                        std::int64_t ch) {
        for (std::int64_t t = 0; t < s; ++t) {
            x_row[static_cast<std::size_t>(t)] = x[t * d + ch];
            dt_row[static_cast<std::size_t>(t)] = delta[t * d + ch];
        }
        std::fill(y_row.begin(), y_row.end(), 0.0);
    }
    void scatter_channel(double* y, std::int64_t s, std::int64_t d, std::int64_t ch) const {
        for (std::int64_t t = 0; t < s; ++t) y[t * d + ch] = y_row[static_cast<std::size_t>(t)];
    }
};

} // namespace

void selective_scan_sequential(const double* x, const double* delta, const double* a,
                               const double* b, const double* c, double* y, std::int64_t s,
                               std::int64_t d, std::int64_t n) {
    LaneScratch ws;
    ws.prepare_common(b, c, s, n);
    for (std::int64_t ch = 0; ch < d; ++ch) {
        ws.gather_channel(x, delta, s, d, ch);
        const double* av_row = a + ch * n;
        for (std::int64_t st = 0; st < n; ++st) {
            const double av = av_row[st];
            const double* brow = ws.b_col.data() + st * s;
            const double* crow = ws.c_col.data() + st * s;
            double h = 0.0;
            for (std::int64_t t = 0; t < s; ++t) {
                const double dt = ws.dt_row[static_cast<std::size_t>(t)];
                const double abar = std::exp(dt * av);
                h = abar * h + dt * brow[t] * ws.x_row[static_cast<std::size_t>(t)];
                ws.y_row[static_cast<std::size_t>(t)] += crow[t] * h;
            }
        }
        ws.scatter_channel(y, s, d, ch);
    }
}

void selective_scan_blocked(const double* x, const double* delta, const double* a,
                            const double* b, const double* c, double* y, std::int64_t s,
                            std::int64_t d, std::int64_t n) {
    LaneScratch ws;
    ws.prepare_common(b, c, s, n);
    double pbuf[kChunk];
    double qbuf[kChunk];
    for (std::int64_t ch = 0; ch < d; ++ch) {
        ws.gather_channel(x, delta, s, d, ch);
        const double* av_row = a + ch * n;
        for (std::int64_t st = 0; st < n; ++st) {
            const double av = av_row[st];
            const double* brow = ws.b_col.data() + st * s;
            const double* crow = ws.c_col.data() + st * s;
            double carry = 0.0; // h value entering the chunk
            for (std::int64_t cs = 0; cs < s; cs += kChunk) {
                const std::int64_t m = std::min(kChunk, s - cs);
                // pass 1: local affine composition relative to the chunk entry
                double p = 1.0, q = 0.0;
                for (std::int64_t i = 0; i < m; ++i) {
                    const std::int64_t t = cs + i;
                    const double dt = ws.dt_row[static_cast<std::size_t>(t)];
                    const double abar = std::exp(dt * av);
                    const double bbar = dt * brow[t] * ws.x_row[static_cast<std::size_t>(t)];
                    p = abar * p;
                    q = abar * q + bbar;
                    pbuf[i] = p;
                    qbuf[i] = q;
                }
                // pass 2: apply the carried state
                for (std::int64_t i = 0; i < m; ++i) {
                    const std::int64_t t = cs + i;
                    const double h = pbuf[i] * carry + qbuf[i];
                    ws.y_row[static_cast<std::size_t>(t)] += crow[t] * h;
                }
                carry = pbuf[m - 1] * carry + qbuf[m - 1];
            }
        }
        ws.scatter_channel(y, s, d, ch);
    }
}

std::pair<Tensor, Tensor> discretize(const Tensor& a, const Tensor& b_t, const Tensor& delta_t) {
    if (a.rank() != 2 || b_t.rank() != 1 || delta_t.rank() != 1) {
        throw ShapeError("discretize: expects a [D, N], b_t [N], delta_t [D]");
    }
    const std::int64_t d = a.dim(0), n = a.dim(1);
    if (delta_t.dim(0) != d || b_t.dim(0) != n) {
        throw ShapeError("discretize: operand extents do not match a " + shape_str(a.shape()));
    }
    for (std::int64_t ch = 0; ch < d; ++ch) {
        if (!(delta_t.at(ch) > 0.0)) {
            throw NumericalError("discretize: step size must be strictly positive, got " +
                                 std::to_string(delta_t.at(ch)) + " at channel " +
                                 std::to_string(ch));
        }
    }
    std::vector<double> abar(static_cast<std::size_t>(d * n));
    std::vector<double> bbar(static_cast<std::size_t>(d * n));
    for (std::int64_t ch = 0; ch < d; ++ch) {
        const double dt = delta_t.at(ch);
        for (std::int64_t st = 0; st < n; ++st) {
            abar[static_cast<std::size_t>(ch * n + st)] = std::exp(dt * a.at(ch * n + st));
            bbar[static_cast<std::size_t>(ch * n + st)] = dt * b_t.at(st);
        }
    }
    NoGradGuard ng;
    return {Tensor::from_data({d, n}, std::move(abar)), Tensor::from_data({d, n}, std::move(bbar))};
}

Tensor selective_scan(const Tensor& x, const Tensor& delta, const Tensor& a, const Tensor& b,
                      const Tensor& c, ScanStrategy strategy) {
    check_scan_shapes("selective_scan", x, delta, a, b, c);
    const std::int64_t s = x.dim(0), d = x.dim(1), n = a.dim(1);

    auto out = std::make_shared<TensorImpl>();
    out->shape = {s, d};
    out->data.assign(static_cast<std::size_t>(s * d), 0.0);
    if (strategy == ScanStrategy::blocked) {
        selective_scan_blocked(x.data().data(), delta.data().data(), a.data().data(),
                               b.data().data(), c.data().data(), out->data.data(), s, d, n);
    } else {
        selective_scan_sequential(x.data().data(), delta.data().data(), a.data().data(),
                                  b.data().data(), c.data().data(), out->data.data(), s, d, n);
    }
    const Precision prec = precision();
    if (prec == Precision::f32) {
        for (double& v : out->data) v = quantize(v, prec);
    }
    if (nan_check_enabled()) {
        for (double v : out->data) {
            if (!std::isfinite(v)) {
                throw NumericalError("op 'selective_scan' produced a non-finite value");
            }
        }
    }

    auto& tape = GradTape::current();
    const bool rec = tape.enabled() && (x.requires_grad() || delta.requires_grad() ||
                                        a.requires_grad() || b.requires_grad() || c.requires_grad());
    if (!rec) return Tensor(out);

    out->requires_grad = true;
    auto xi = x.impl();
    auto di = delta.impl();
    auto ai = a.impl();
    auto bi = b.impl();
    auto ci = c.impl();
    auto backward = [=]() {
        auto need = [](const std::shared_ptr<TensorImpl>& t) { return t->requires_grad; };
        auto touch = [](const std::shared_ptr<TensorImpl>& t) {
            if (t->grad.empty()) t->grad.assign(t->data.size(), 0.0);
        };
        const bool nx = need(xi), nd = need(di), na = need(ai), nb = need(bi), nc = need(ci);
        if (nx) touch(xi);
        if (nd) touch(di);
        if (na) touch(ai);
        if (nb) touch(bi);
        if (nc) touch(ci);
        const double* px = xi->data.data();
        const double* pd = di->data.data();
        const double* pa = ai->data.data();
        const double* pb = bi->data.data();
        const double* pc = ci->data.data();
        const double* gy = out->grad.data();
        std::vector<double> h_arr(static_cast<std::size_t>(s));
        std::vector<double> abar_arr(static_cast<std::size_t>(s));
        for (std::int64_t ch = 0; ch < d; ++ch) {
            for (std::int64_t st = 0; st < n; ++st) {
                const double av = pa[ch * n + st];
                // recompute latent states for this lane (sequential recurrence)
                double h = 0.0;
                for (std::int64_t t = 0; t < s; ++t) {
                    const double dt = pd[t * d + ch];
                    const double abar = std::exp(dt * av);
                    h = abar * h + dt * pb[t * n + st] * px[t * d + ch];
                    h_arr[static_cast<std::size_t>(t)] = h;
                    abar_arr[static_cast<std::size_t>(t)] = abar;
                }
                double carry = 0.0; // dL/dh_t contribution arriving from t+1
                for (std::int64_t t = s - 1; t >= 0; --t) {
                    const double g = gy[t * d + ch];
                    const double cv = pc[t * n + st];
                    const double dh = g * cv + carry;
                    const double h_prev = t > 0 ? h_arr[static_cast<std::size_t>(t - 1)] : 0.0;
                    const double abar = abar_arr[static_cast<std::size_t>(t)];
                    const double dt = pd[t * d + ch];
                    const double bv = pb[t * n + st];
                    const double xv = px[t * d + ch];
                    if (nc) ci->grad[static_cast<std::size_t>(t * n + st)] += g * h_arr[static_cast<std::size_t>(t)];
                    const double da_bar = dh * h_prev;
                    if (nd) {
                        di->grad[static_cast<std::size_t>(t * d + ch)] +=
                            da_bar * av * abar + dh * bv * xv;
                    }
                    if (na) ai->grad[static_cast<std::size_t>(ch * n + st)] += da_bar * dt * abar;
                    if (nb) bi->grad[static_cast<std::size_t>(t * n + st)] += dh * dt * xv;
                    if (nx) xi->grad[static_cast<std::size_t>(t * d + ch)] += dh * dt * bv;
                    carry = dh * abar;
                }
            }
        }
    };
    tape.record(TapeNode{"selective_scan", {xi, di, ai, bi, ci}, out, std::move(backward)});
    return Tensor(out);
}

} // namespace vmb
