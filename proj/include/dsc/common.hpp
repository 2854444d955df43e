#pragma once

#include <complex>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsc {

using Complex = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kBaseMva = 100.0;
inline constexpr double kBaseFreqHz = 60.0;
inline constexpr double kOmegaSyn = 2.0 * kPi * kBaseFreqHz;  // rad/s
inline constexpr double kDegPerRad = 180.0 / kPi;

/// Input that violates a documented precondition or file contract.
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Numerical failure at runtime (non-convergence, singular matrix, ...).
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <typename... Args>
std::string strf(const char* fmt, Args... args) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), fmt, args...);
    return std::string(buf);
}

inline double clamp(double v, double lo, double hi) {
    return v < lo ? lo : (v > hi ? hi : v);
}

}  // namespace dsc
