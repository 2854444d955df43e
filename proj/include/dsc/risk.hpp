#pragma once

#include <algorithm>
#include <numeric>
#include <span>

#include "dsc/common.hpp"
#include "dsc/rng.hpp"

namespace dsc::risk {

/// Support of the loading/duration uncertainty: k uniform on [alpha, beta],
/// tau uniform on [tau_min, tau_max], independent.
struct LoadingBounds {
    double alpha = 0.75, beta = 1.5;
    double tau_min = 0.06, tau_max = 0.4;

    void validate() const {
        if (!(alpha > 0) || !(beta > alpha) || !(tau_min > 0) || !(tau_max > tau_min))
            throw ValidationError("invalid loading/duration bounds");
    }
    LoadingBounds shed(double fraction) const {
        LoadingBounds b = *this;
        b.alpha *= 1.0 - fraction;
        b.beta *= 1.0 - fraction;
        return b;
    }
};

/// Density of the product k*tau at r:
///   ln( min(tau_max, r/alpha) / max(tau_min, r/beta) )
///   / ((tau_max - tau_min)(beta - alpha)),  zero outside the support.
inline double product_density(double r, const LoadingBounds& b) {
    b.validate();
    if (!(r > 0)) throw ValidationError("density argument r must be positive");
    double hi = std::min(b.tau_max, r / b.alpha);
    double lo = std::max(b.tau_min, r / b.beta);
    if (!(hi > lo)) return 0.0;
    return std::log(hi / lo) / ((b.tau_max - b.tau_min) * (b.beta - b.alpha));
}

/// The System Failure Index: the product density evaluated at the average
/// system resilience.
inline double sfi(double asr, const LoadingBounds& b) { return product_density(asr, b); }

/// Arithmetic mean of Rhat over a record population.
inline double estimate_asr(std::span<const double> rhat) {
    if (rhat.empty()) throw ValidationError("cannot estimate ASR from an empty record set");
    double s = 0;
    for (double v : rhat) s += v;
    return s / double(rhat.size());
}

struct McDensity {
    double density = 0;
    double stderr_ = 0;
    size_t n = 0;
};

/// Sampling oracle for the closed form: draws k*tau products and estimates
/// the density at r from a centered histogram bin.
inline McDensity mc_density_estimate(size_t n_samples, double r, const LoadingBounds& b,
                                     uint64_t seed, double bin_width = 0.01) {
    b.validate();
    if (n_samples < 10000) throw ValidationError("need at least 1e4 Monte Carlo samples");
    Rng rng(seed);
    const double lo = r - bin_width / 2, hi = r + bin_width / 2;
    size_t count = 0;
    for (size_t i = 0; i < n_samples; ++i) {
        double k = rng.uniform(b.alpha, b.beta);
        double tau = rng.uniform(b.tau_min, b.tau_max);
        double p = k * tau;
        if (p >= lo && p < hi) ++count;
    }
    McDensity out;
    out.n = n_samples;
    double phat = double(count) / double(n_samples);
    out.density = phat / bin_width;
    out.stderr_ = std::sqrt(phat * (1.0 - phat) / double(n_samples)) / bin_width;
    return out;
}

namespace detail {

template <typename F>
double adaptive_simpson(const F& f, double a, double b, double fa, double fm, double fb,
                        double whole, double tol, int depth) {
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::fabs(left + right - whole) < 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return adaptive_simpson(f, a, m, fa, flm, fm, left, tol / 2, depth - 1) +
           adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2, depth - 1);
}

template <typename F>
double integrate(const F& f, double a, double b, double tol) {
    double m = 0.5 * (a + b);
    double fa = f(a), fm = f(m), fb = f(b);
    double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 40);
}

}  // namespace detail

/// Integral of the product density over its support, split at the interior
/// kinks. Used to verify the closed form integrates to one.
inline double density_integral(const LoadingBounds& b, double tol = 1e-9) {
    b.validate();
    std::vector<double> pts{b.alpha * b.tau_min, b.beta * b.tau_min, b.alpha * b.tau_max,
                            b.beta * b.tau_max};
    std::sort(pts.begin(), pts.end());
    auto f = [&](double r) { return r <= 0 ? 0.0 : product_density(r, b); };
    double total = 0;
    for (size_t i = 0; i + 1 < pts.size(); ++i)
        if (pts[i + 1] > pts[i] + 1e-15) total += detail::integrate(f, pts[i], pts[i + 1], tol);
    return total;
}

struct RiskProfile {
    double asr = 0;
    double sfi_value = 0;
    LoadingBounds bounds;
    size_t mc_samples = 0;
};

inline RiskProfile make_profile(double asr, const LoadingBounds& b, size_t mc_samples = 0) {
    if (!(asr > 0)) throw ValidationError("ASR must be positive");
    RiskProfile p;
    p.asr = asr;
    p.sfi_value = sfi(asr, b);
    p.bounds = b;
    p.mc_samples = mc_samples;
    return p;
}

}  // namespace dsc::risk
