#pragma once

#include <cstdint>
#include <string_view>

namespace vmb {

// Numerical mode. Storage is double throughout; in f32 mode every value
// written by an op (and by initializers, loaders and the optimizer) is
// rounded through IEEE single precision, so all live values are exactly
// representable in the 32-bit checkpoint payload. f64 is the verification
// mode used by the finite-difference suites.
enum class Precision { f32, f64 };

Precision precision();
void set_precision(Precision p);

// Forward-op NaN/Inf scan; off by default, enabled by the verification
// suites and by VMB_NAN_CHECK=1.
bool nan_check_enabled();
void set_nan_check(bool on);

// Reads VMB_PRECISION (f32|f64) and VMB_NAN_CHECK. Called once by the CLI
// and by test mains. A precision forced through the environment wins over
// config-file precision for the whole process.
void init_context_from_env();
bool precision_env_forced();

inline double quantize(double v, Precision p) {
    return p == Precision::f32 ? static_cast<double>(static_cast<float>(v)) : v;
}
inline double quantize(double v) { return quantize(v, precision()); }

// Fans a root seed out to named sub-seeds (data, init, augmentation, ...)
// by stable hashing, so fold/sample seeds are independent of call order.
std::uint64_t derive_seed(std::uint64_t root, std::string_view name);
std::uint64_t derive_seed(std::uint64_t root, std::string_view name, std::uint64_t index);

// FNV-1a over arbitrary bytes; used for config and data-order hashes.
std::uint64_t fnv1a(const void* bytes, std::size_t n, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hash_hex(std::uint64_t h);

} // namespace vmb
