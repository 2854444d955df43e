#pragma once

#include <cmath>
#include <cstdint>

namespace dsc {

/// SplitMix64 generator. Used everywhere randomness is needed so that runs
/// are reproducible bit-for-bit across platforms (std:: distributions are
/// implementation-defined and are avoided on purpose).
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1), 53-bit resolution.
    double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + next_double() * (hi - lo); }

    /// Uniform integer in [0, n). Modulo bias is < 2^-57 for n < 2^7 and
    /// irrelevant at the scales used here.
    uint64_t next_below(uint64_t n) { return next_u64() % n; }

    /// Standard normal via Box-Muller (both draws consumed, one returned).
    double next_normal() {
        double u1 = next_double(), u2 = next_double();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

private:
    uint64_t state_;
};

/// Seed-splitting rule used across the toolkit: stream `index` of `master`
/// is SplitMix64 seeded at master, advanced by a fixed odd multiplier of the
/// index. Documented so that per-scenario / per-fold / per-init streams can
/// be reproduced independently of execution order.
inline uint64_t split_seed(uint64_t master, uint64_t index) {
    Rng r(master ^ (0xD1B54A32D192ED03ULL * (index + 1)));
    return r.next_u64();
}

}  // namespace dsc
