#include "vmb/context.hpp"

#include <cstdlib>
#include <cstring>
#include <string>

namespace vmb {

namespace {
Precision g_precision = Precision::f32;
bool g_nan_check = false;
bool g_precision_forced = false;
} // namespace

Precision precision() { return g_precision; }
void set_precision(Precision p) { g_precision = p; }

bool nan_check_enabled() { return g_nan_check; }
void set_nan_check(bool on) { g_nan_check = on; }

bool precision_env_forced() { return g_precision_forced; }

void init_context_from_env() {
    if (const char* p = std::getenv("VMB_PRECISION")) {
        if (std::strcmp(p, "f64") == 0) {
            g_precision = Precision::f64;
            g_precision_forced = true;
        } else if (std::strcmp(p, "f32") == 0) {
            g_precision = Precision::f32;
            g_precision_forced = true;
        }
    }
    if (const char* c = std::getenv("VMB_NAN_CHECK")) {
        g_nan_check = (std::strcmp(c, "0") != 0);
    }
}

std::uint64_t fnv1a(const void* bytes, std::size_t n, std::uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {
std::uint64_t mix(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}
} // namespace

std::uint64_t derive_seed(std::uint64_t root, std::string_view name) {
    std::uint64_t h = fnv1a(name.data(), name.size());
    return mix(root ^ h);
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view name, std::uint64_t index) {
    return mix(derive_seed(root, name) ^ mix(index));
}

std::string hash_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return s;
}

} // namespace vmb
