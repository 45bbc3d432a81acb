#include "vmb/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

#include "vmb/context.hpp"
#include "vmb/scan.hpp"
#include "vmb/tensor.hpp"

namespace vmb {

namespace {

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double loglog_slope(const std::vector<BenchPoint>& pts) {
    // least-squares slope of ln(t) over ln(S)
    const double n = static_cast<double>(pts.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& p : pts) {
        const double x = std::log(static_cast<double>(p.length));
        const double y = std::log(p.median_seconds);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

volatile double g_sink = 0.0;

} // namespace

BenchResult bench_scan(const std::vector<std::int64_t>& lengths, int trials, int dim, int d_state,
                       int expand, std::uint64_t seed) {
    if (lengths.size() < 3) {
        throw ConfigError("bench-scan: need at least 3 lengths for a power-law fit, got " +
                          std::to_string(lengths.size()));
    }
    if (trials < 1) throw ConfigError("bench-scan: trials must be >= 1");
    for (auto s : lengths) {
        if (s < 2) throw ConfigError("bench-scan: lengths must be >= 2");
    }

    const std::int64_t inner = static_cast<std::int64_t>(dim) * expand;
    const std::int64_t n = d_state;
    BenchResult result;
    NoGradGuard ng;

    using clock = std::chrono::steady_clock;
    auto seconds_since = [](clock::time_point t0) {
        return std::chrono::duration<double>(clock::now() - t0).count();
    };

    for (std::int64_t s : lengths) {
        std::mt19937_64 rng(derive_seed(seed, "bench", static_cast<std::uint64_t>(s)));
        std::normal_distribution<double> g(0.0, 1.0);
        std::uniform_real_distribution<double> dt(1e-3, 1e-1);
        std::vector<double> x(static_cast<std::size_t>(s * inner));
        std::vector<double> delta(static_cast<std::size_t>(s * inner));
        std::vector<double> a(static_cast<std::size_t>(inner * n));
        std::vector<double> b(static_cast<std::size_t>(s * n));
        std::vector<double> c(static_cast<std::size_t>(s * n));
        std::vector<double> y(static_cast<std::size_t>(s * inner));
        for (auto& v : x) v = g(rng);
        for (auto& v : delta) v = dt(rng);
        for (std::int64_t ch = 0; ch < inner; ++ch) {
            for (std::int64_t j = 0; j < n; ++j) {
                a[static_cast<std::size_t>(ch * n + j)] = -static_cast<double>(j + 1);
            }
        }
        for (auto& v : b) v = g(rng);
        for (auto& v : c) v = g(rng);

        std::vector<double> times;
        for (int t = -1; t < trials; ++t) { // one warmup run
            const auto t0 = clock::now();
            selective_scan_blocked(x.data(), delta.data(), a.data(), b.data(), c.data(), y.data(),
                                   s, inner, n);
            const double el = seconds_since(t0);
            g_sink = g_sink + y[static_cast<std::size_t>(s * inner - 1)];
            if (t >= 0) times.push_back(el);
        }
        result.scan.push_back({s, median(times)});
    }

    for (std::int64_t s : lengths) {
        std::mt19937_64 rng(derive_seed(seed, "bench-attn", static_cast<std::uint64_t>(s)));
        Tensor q = Tensor::randn({s, dim}, rng);
        Tensor k = Tensor::randn({s, dim}, rng);
        Tensor v = Tensor::randn({s, dim}, rng);
        const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
        std::vector<double> times;
        for (int t = -1; t < trials; ++t) {
            const auto t0 = clock::now();
            Tensor attn = softmax(mul_scalar(matmul(q, transpose(k)), scale), 1);
            Tensor out = matmul(attn, v);
            const double el = seconds_since(t0);
            g_sink = g_sink + out.at(out.numel() - 1);
            if (t >= 0) times.push_back(el);
        }
        result.attention.push_back({s, median(times)});
    }

    result.scan_exponent = loglog_slope(result.scan);
    result.attention_exponent = loglog_slope(result.attention);
    return result;
}

std::string bench_csv(const BenchResult& r) {
    std::ostringstream out;
    out << "kernel,length,median_seconds\n";
    for (const auto& p : r.scan) {
        out << "selective_scan," << p.length << "," << p.median_seconds << "\n";
    }
    for (const auto& p : r.attention) {
        out << "attention," << p.length << "," << p.median_seconds << "\n";
    }
    return out.str();
}

std::string bench_table(const BenchResult& r) {
    std::ostringstream out;
    out << std::left << std::setw(16) << "kernel" << std::right << std::setw(8) << "length"
        << std::setw(16) << "median (s)" << "\n";
    auto rows = [&](const char* name, const std::vector<BenchPoint>& pts) {
        for (const auto& p : pts) {
            out << std::left << std::setw(16) << name << std::right << std::setw(8) << p.length
                << std::setw(16) << std::scientific << std::setprecision(3) << p.median_seconds
                << "\n";
            out.unsetf(std::ios::scientific);
        }
    };
    rows("selective_scan", r.scan);
    rows("attention", r.attention);
    out << "fitted exponent selective_scan: " << std::fixed << std::setprecision(3)
        << r.scan_exponent << "\n";
    out.unsetf(std::ios::fixed);
    out << "fitted exponent attention: " << std::fixed << std::setprecision(3)
        << r.attention_exponent << "\n";
    out.unsetf(std::ios::fixed);
    return out.str();
}

} // namespace vmb
