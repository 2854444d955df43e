#pragma once

#include <limits>

#include "dsc/scenario.hpp"

namespace dsc::enc {

using scen::TabularWindow;

inline constexpr int kRows = TabularWindow::kRows;
inline constexpr int kCols = TabularWindow::kCols;
inline constexpr std::array<int, 5> kKernelSizes{1, 3, 5, 7, 9};
inline constexpr double kAngleClampDeg = 1e4;

/// Per-row min/max gathered from the training split only; frozen and stored
/// with trained models.
struct RowStats {
    std::vector<double> min, max;

    bool valid() const { return min.size() == size_t(kRows) && max.size() == min.size(); }
};

inline double clamp_raw(double v) { return clamp(v, -kAngleClampDeg, kAngleClampDeg); }

namespace detail {

inline void accumulate_stats(RowStats& st, const TabularWindow& w) {
    for (int r = 0; r < kRows; ++r)
        for (int c = 0; c < kCols; ++c) {
            double v = clamp_raw(w.at(r, c));
            st.min[size_t(r)] = std::min(st.min[size_t(r)], v);
            st.max[size_t(r)] = std::max(st.max[size_t(r)], v);
        }
}

inline RowStats empty_stats() {
    RowStats st;
    st.min.assign(size_t(kRows), std::numeric_limits<double>::infinity());
    st.max.assign(size_t(kRows), -std::numeric_limits<double>::infinity());
    return st;
}

}  // namespace detail

template <typename WindowSpan>
RowStats compute_stats(const WindowSpan& windows) {
    RowStats st = detail::empty_stats();
    size_t used = 0;
    for (const auto& w : windows) {
        if (w.data.empty()) continue;
        ++used;
        detail::accumulate_stats(st, w);
    }
    if (used == 0) throw ValidationError("cannot compute stats from an empty window set");
    return st;
}

inline RowStats compute_stats_ptrs(const std::vector<const TabularWindow*>& windows) {
    RowStats st = detail::empty_stats();
    size_t used = 0;
    for (const auto* w : windows) {
        if (!w || w->data.empty()) continue;
        ++used;
        detail::accumulate_stats(st, *w);
    }
    if (used == 0) throw ValidationError("cannot compute stats from an empty window set");
    return st;
}

/// 270x250 map of intensities in [0, 1].
struct IntensityMap {
    std::vector<double> data;
    double& at(int r, int c) { return data[size_t(r) * kCols + size_t(c)]; }
    double at(int r, int c) const { return data[size_t(r) * kCols + size_t(c)]; }
};

/// Per-row min-max normalization into [0, 1]; out-of-range values clamp and a
/// zero-range row maps to 0.5.
inline IntensityMap build_intensity_map(const TabularWindow& w, const RowStats& st) {
    if (!st.valid()) throw ValidationError("row stats have the wrong shape");
    IntensityMap m;
    m.data.resize(size_t(kRows) * kCols);
    for (int r = 0; r < kRows; ++r) {
        double lo = st.min[size_t(r)], hi = st.max[size_t(r)];
        double range = hi - lo;
        for (int c = 0; c < kCols; ++c) {
            if (range < 1e-12) {
                m.at(r, c) = 0.5;
            } else {
                m.at(r, c) = clamp((clamp_raw(w.at(r, c)) - lo) / range, 0.0, 1.0);
            }
        }
    }
    return m;
}

namespace detail {

inline std::vector<double> gaussian_kernel(int size) {
    double sigma = double(size) / 3.0;
    int half = size / 2;
    auto k = std::vector<double>(size_t(size));
    double sum = 0;
    for (int i = 0; i < size; ++i) {
        double d = double(i - half);
        k[size_t(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += k[size_t(i)];
    }
    for (auto& v : k) v /= sum;
    return k;
}

// symmetric (edge-repeating) reflection
inline int reflect(int idx, int n) {
    while (idx < 0 || idx >= n) {
        if (idx < 0) idx = -idx - 1;
        if (idx >= n) idx = 2 * n - idx - 1;
    }
    return idx;
}

}  // namespace detail

/// Separable 2-D Gaussian blur, sigma = size/3, reflected boundary. Size 1 is
/// the identity. Boundary reflection only runs near the edges; the interior
/// uses straight-line loops.
inline IntensityMap blur(const IntensityMap& m, int size) {
    if (size < 1 || size % 2 == 0) throw ValidationError("blur kernel size must be odd");
    if (size == 1) return m;
    auto k = detail::gaussian_kernel(size);
    const int half = size / 2;

    IntensityMap tmp;
    tmp.data.assign(m.data.size(), 0.0);
    for (int r = 0; r < kRows; ++r) {
        const double* src = m.data.data() + size_t(r) * kCols;
        double* dst = tmp.data.data() + size_t(r) * kCols;
        for (int c = 0; c < half; ++c) {
            double s = 0;
            for (int i = -half; i <= half; ++i)
                s += k[size_t(i + half)] * src[detail::reflect(c + i, kCols)];
            dst[c] = s;
        }
        for (int c = half; c < kCols - half; ++c) {
            double s = 0;
            for (int i = -half; i <= half; ++i) s += k[size_t(i + half)] * src[c + i];
            dst[c] = s;
        }
        for (int c = kCols - half; c < kCols; ++c) {
            double s = 0;
            for (int i = -half; i <= half; ++i)
                s += k[size_t(i + half)] * src[detail::reflect(c + i, kCols)];
            dst[c] = s;
        }
    }
    IntensityMap out;
    out.data.assign(m.data.size(), 0.0);
    for (int r = 0; r < kRows; ++r) {
        const bool interior = r >= half && r < kRows - half;
        double* dst = out.data.data() + size_t(r) * kCols;
        for (int i = -half; i <= half; ++i) {
            const int rr = interior ? r + i : detail::reflect(r + i, kRows);
            const double w = k[size_t(i + half)];
            const double* src = tmp.data.data() + size_t(rr) * kCols;
            if (i == -half)
                for (int c = 0; c < kCols; ++c) dst[c] = w * src[c];
            else
                for (int c = 0; c < kCols; ++c) dst[c] += w * src[c];
        }
    }
    return out;
}

/// The 5-channel volume fed to the classifier: the intensity map blurred at
/// each configured kernel size, channel 0 unblurred.
struct FeatureVolume {
    static constexpr int kChannels = 5;
    std::vector<float> data;  // channel-major 5 x 270 x 250
    int tis = 0;
    int dr_label = -1;
    double rhat = 0;
    uint64_t scenario_id = 0;

    float at(int ch, int r, int c) const {
        return data[(size_t(ch) * kRows + size_t(r)) * kCols + size_t(c)];
    }
};

inline FeatureVolume build_volume(const TabularWindow& w, const RowStats& st) {
    IntensityMap base = build_intensity_map(w, st);
    FeatureVolume v;
    v.data.resize(size_t(FeatureVolume::kChannels) * kRows * kCols);
    for (int ch = 0; ch < FeatureVolume::kChannels; ++ch) {
        IntensityMap b = blur(base, kKernelSizes[size_t(ch)]);
        for (int r = 0; r < kRows; ++r)
            for (int c = 0; c < kCols; ++c)
                v.data[(size_t(ch) * kRows + size_t(r)) * kCols + size_t(c)] = float(b.at(r, c));
    }
    v.tis = w.tis;
    v.dr_label = w.dr_label;
    v.rhat = w.rhat;
    v.scenario_id = w.scenario_id;
    return v;
}

}  // namespace dsc::enc
