#pragma once

#include <algorithm>
#include <cstddef>
#include <type_traits>
#include <vector>

#include "dsc/common.hpp"

namespace dsc {

/// Dense row-major matrix over double or Complex. Small sizes only (the
/// largest system solved here is the 77x77 power-flow Jacobian).
template <typename T>
class Mat {
public:
    Mat() = default;
    Mat(size_t rows, size_t cols, T init = T{}) : r_(rows), c_(cols), d_(rows * cols, init) {}

    T& operator()(size_t i, size_t j) { return d_[i * c_ + j]; }
    const T& operator()(size_t i, size_t j) const { return d_[i * c_ + j]; }

    size_t rows() const { return r_; }
    size_t cols() const { return c_; }
    T* data() { return d_.data(); }
    const T* data() const { return d_.data(); }

    Mat transposed() const {
        Mat out(c_, r_);
        for (size_t i = 0; i < r_; ++i)
            for (size_t j = 0; j < c_; ++j) out(j, i) = (*this)(i, j);
        return out;
    }

private:
    size_t r_ = 0, c_ = 0;
    std::vector<T> d_;
};

using CMat = Mat<Complex>;
using RMat = Mat<double>;

template <typename T>
double abs_of(const T& v) {
    if constexpr (std::is_same_v<T, Complex>) return std::abs(v);
    else return std::fabs(v);
}

/// LU factorization with partial pivoting, in place. Returns the row
/// permutation; throws NumericalError naming the offending row when a pivot
/// underflows. `row_tag` lets callers attach identities (bus numbers) to rows.
template <typename T>
std::vector<size_t> lu_factor(Mat<T>& a, const std::vector<int>* row_tag = nullptr,
                              double pivot_tol = 1e-13) {
    const size_t n = a.rows();
    if (n != a.cols()) throw ValidationError("lu_factor: matrix not square");
    std::vector<size_t> perm(n);
    for (size_t i = 0; i < n; ++i) perm[i] = i;

    for (size_t k = 0; k < n; ++k) {
        size_t piv = k;
        double best = abs_of(a(k, k));
        for (size_t i = k + 1; i < n; ++i) {
            double m = abs_of(a(i, k));
            if (m > best) { best = m; piv = i; }
        }
        if (best < pivot_tol) {
            int tag = row_tag ? (*row_tag)[perm[piv]] : int(perm[piv]);
            throw NumericalError(strf("singular matrix during elimination (node %d)", tag));
        }
        if (piv != k) {
            for (size_t j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
            std::swap(perm[k], perm[piv]);
        }
        const T inv_p = T(1.0) / a(k, k);
        for (size_t i = k + 1; i < n; ++i) {
            const T f = a(i, k) * inv_p;
            a(i, k) = f;
            for (size_t j = k + 1; j < n; ++j) a(i, j) -= f * a(k, j);
        }
    }
    return perm;
}

/// Solve LUx = Pb for one right-hand side given factor+permutation.
template <typename T>
std::vector<T> lu_solve(const Mat<T>& lu, const std::vector<size_t>& perm,
                        const std::vector<T>& b) {
    const size_t n = lu.rows();
    std::vector<T> x(n);
    for (size_t i = 0; i < n; ++i) x[i] = b[perm[i]];
    for (size_t i = 1; i < n; ++i) {
        T s = x[i];
        for (size_t j = 0; j < i; ++j) s -= lu(i, j) * x[j];
        x[i] = s;
    }
    for (size_t i = n; i-- > 0;) {
        T s = x[i];
        for (size_t j = i + 1; j < n; ++j) s -= lu(i, j) * x[j];
        x[i] = s / lu(i, i);
    }
    return x;
}

/// Convenience: solve Ax = b destroying A.
template <typename T>
std::vector<T> solve_dense(Mat<T> a, std::vector<T> b, const std::vector<int>* row_tag = nullptr) {
    auto perm = lu_factor(a, row_tag);
    return lu_solve(a, perm, b);
}

template <typename T>
std::vector<T> matvec(const Mat<T>& a, const std::vector<T>& x) {
    std::vector<T> y(a.rows(), T{});
    for (size_t i = 0; i < a.rows(); ++i) {
        T s{};
        for (size_t j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
        y[i] = s;
    }
    return y;
}

template <typename T>
Mat<T> matmul(const Mat<T>& a, const Mat<T>& b) {
    if (a.cols() != b.rows()) throw ValidationError("matmul: dimension mismatch");
    Mat<T> c(a.rows(), b.cols());
    for (size_t i = 0; i < a.rows(); ++i)
        for (size_t k = 0; k < a.cols(); ++k) {
            const T f = a(i, k);
            for (size_t j = 0; j < b.cols(); ++j) c(i, j) += f * b(k, j);
        }
    return c;
}

}  // namespace dsc
