#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#if defined(__SSE__) || defined(__x86_64__)
#include <immintrin.h>
#endif

#include "dsc/common.hpp"
#include "dsc/rng.hpp"

namespace dsc::nn {

/// Flush subnormal floats to zero on this thread. Softmax tails and decaying
/// Adam moments otherwise sweep millions of values through the denormal
/// range, where the hardware falls back to microcode.
inline void enable_flush_to_zero() {
#if defined(__SSE__) || defined(__x86_64__)
    _mm_setcsr(_mm_getcsr() | 0x8040u);  // FTZ | DAZ
#endif
}

// ---------------------------------------------------------------------------
// Small dense kernels. Row-major storage throughout; plain loops arranged so
// the inner index is contiguous and the compiler can vectorize.
// ---------------------------------------------------------------------------

/// C[M x N] (+)= A[M x K] * B[K x N]. Cache-blocked over n and k so the hot
/// B panel stays resident; the inner loop is a contiguous fused multiply-add
/// the compiler vectorizes.
template <typename Real>
void gemm_nn(size_t m, size_t n, size_t k, const Real* __restrict a, const Real* __restrict b,
             Real* __restrict c, bool accumulate) {
    constexpr size_t kJB = 64, kKB = 256;
    if (!accumulate)
        for (size_t i = 0; i < m * n; ++i) c[i] = Real(0);
    for (size_t k0 = 0; k0 < k; k0 += kKB) {
        const size_t kc = std::min(kKB, k - k0);
        for (size_t j0 = 0; j0 < n; j0 += kJB) {
            const size_t jc = std::min(kJB, n - j0);
            for (size_t i = 0; i < m; ++i) {
                Real acc[kJB];
                Real* ci = c + i * n + j0;
                for (size_t j = 0; j < jc; ++j) acc[j] = ci[j];
                const Real* ai = a + i * k + k0;
                size_t p = 0;
                for (; p + 4 <= kc; p += 4) {
                    const Real a0 = ai[p], a1 = ai[p + 1], a2 = ai[p + 2], a3 = ai[p + 3];
                    const Real* b0 = b + (k0 + p) * n + j0;
                    const Real* b1 = b0 + n;
                    const Real* b2 = b1 + n;
                    const Real* b3 = b2 + n;
                    for (size_t j = 0; j < jc; ++j)
                        acc[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
                }
                for (; p < kc; ++p) {
                    const Real ap = ai[p];
                    const Real* bp = b + (k0 + p) * n + j0;
                    for (size_t j = 0; j < jc; ++j) acc[j] += ap * bp[j];
                }
                for (size_t j = 0; j < jc; ++j) ci[j] = acc[j];
            }
        }
    }
}

/// Dot product with explicit partial sums so the reduction vectorizes.
template <typename Real>
Real dot_n(const Real* __restrict a, const Real* __restrict b, size_t n) {
    constexpr size_t kLanes = 16;
    Real acc[kLanes] = {};
    size_t i = 0;
    for (; i + kLanes <= n; i += kLanes)
        for (size_t l = 0; l < kLanes; ++l) acc[l] += a[i + l] * b[i + l];
    Real s = Real(0);
    for (size_t l = 0; l < kLanes; ++l) s += acc[l];
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

namespace detail {

template <typename Real>
std::vector<Real>& gemm_scratch() {
    thread_local std::vector<Real> buf;
    return buf;
}

template <typename Real>
void transpose(size_t rows, size_t cols, const Real* __restrict src, Real* __restrict dst) {
    for (size_t i = 0; i < rows; ++i)
        for (size_t j = 0; j < cols; ++j) dst[j * rows + i] = src[i * cols + j];
}

}  // namespace detail

/// C[M x N] (+)= A^T * B with A[K x M], B[K x N]. Transposes A into a
/// thread-local panel and defers to the blocked kernel.
template <typename Real>
void gemm_tn(size_t m, size_t n, size_t k, const Real* a, const Real* b, Real* c,
             bool accumulate) {
    auto& at = detail::gemm_scratch<Real>();
    at.resize(m * k);
    detail::transpose(k, m, a, at.data());
    gemm_nn(m, n, k, at.data(), b, c, accumulate);
}

/// C[M x N] (+)= A * B^T with A[M x K], B[N x K]. The dot-product form is
/// kept when B fits comfortably in cache, otherwise B is transposed once.
template <typename Real>
void gemm_nt(size_t m, size_t n, size_t k, const Real* __restrict a, const Real* __restrict b,
             Real* __restrict c, bool accumulate) {
    if (n * k <= 16384) {
        for (size_t i = 0; i < m; ++i) {
            const Real* ai = a + i * k;
            Real* ci = c + i * n;
            for (size_t j = 0; j < n; ++j) {
                Real s = dot_n(ai, b + j * k, k);
                ci[j] = accumulate ? ci[j] + s : s;
            }
        }
        return;
    }
    auto& bt = detail::gemm_scratch<Real>();
    bt.resize(k * n);
    detail::transpose(n, k, b, bt.data());
    gemm_nn(m, n, k, a, bt.data(), c, accumulate);
}

/// Numerically stable in-place softmax over one row.
template <typename Real>
void softmax_row(Real* x, size_t n) {
    Real mx = x[0];
    for (size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
    Real sum = Real(0);
    for (size_t i = 0; i < n; ++i) {
        x[i] = std::exp(x[i] - mx);
        sum += x[i];
    }
    const Real inv = Real(1) / sum;
    for (size_t i = 0; i < n; ++i) x[i] *= inv;
}

/// He-uniform fan-in initialization.
template <typename Real>
void he_uniform(Real* w, size_t n, size_t fan_in, Rng& rng) {
    double limit = std::sqrt(6.0 / double(fan_in));
    for (size_t i = 0; i < n; ++i) w[i] = Real(rng.uniform(-limit, limit));
}

/// Adam with the standard bias correction. The update can be restricted to a
/// parameter subrange, which is how transfer learning freezes the feature
/// extractor.
template <typename Real>
class Adam {
public:
    Adam(size_t n, double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(n, Real(0)), v_(n, Real(0)) {
        if (!(lr > 0)) throw ValidationError("learning rate must be positive");
    }

    void set_lr(double lr) {
        if (!(lr > 0)) throw ValidationError("learning rate must be positive");
        lr_ = lr;
    }
    double lr() const { return lr_; }

    void step(Real* params, const Real* grads, size_t begin = 0, size_t end = SIZE_MAX) {
        ++t_;
        end = std::min(end, m_.size());
        const double bc1 = 1.0 - std::pow(b1_, double(t_));
        const double bc2 = 1.0 - std::pow(b2_, double(t_));
        for (size_t i = begin; i < end; ++i) {
            m_[i] = Real(b1_) * m_[i] + Real(1 - b1_) * grads[i];
            v_[i] = Real(b2_) * v_[i] + Real(1 - b2_) * grads[i] * grads[i];
            double mhat = double(m_[i]) / bc1;
            double vhat = double(v_[i]) / bc2;
            params[i] -= Real(lr_ * mhat / (std::sqrt(vhat) + eps_));
        }
    }

    long steps() const { return t_; }

private:
    double lr_, b1_, b2_, eps_;
    long t_ = 0;
    std::vector<Real> m_, v_;
};

/// Cross-entropy of a probability vector against an integer label.
template <typename Real>
double cross_entropy(const Real* probs, size_t n, size_t label) {
    if (label >= n) throw ValidationError("label out of range");
    double p = std::max(double(probs[label]), 1e-300);
    return -std::log(p);
}

}  // namespace dsc::nn
