#pragma once

#include <atomic>
#include <cstdlib>
#include <thread>

#include "dsc/rng.hpp"
#include "dsc/transient_sim.hpp"

namespace dsc::scen {

using grid::PowerSystem;
using sim::SimConfig;
using sim::SimTrace;

struct ScenarioRanges {
    double tau_min = 0.06, tau_max = 0.4;  // s
    double x_min = 0.0, x_max = 100.0;     // %
    double k_min = 0.75, k_max = 1.5;      // pu
    int n_lines = 46;
};

struct FaultScenario {
    uint64_t id = 0;
    int line = 1;          // 1..46, 0 disables the fault
    double x_pct = 50.0;
    double tau = 0.1;      // s
    double k = 1.0;        // pu
    double t_start = 2.0;
    uint64_t seed = 0;
    double r_fault_ohm = 0.001;
};

/// Draw one Algorithm-1 scenario. All three continuous values are i.i.d.
/// uniform in their closed ranges, the line uniform over {1..n_lines}; the
/// scenario's private stream is derived from (master seed, index).
inline FaultScenario sample_scenario(uint64_t master_seed, uint64_t index,
                                     const ScenarioRanges& rg = {}) {
    if (!(rg.tau_min < rg.tau_max) || !(rg.k_min < rg.k_max) || !(rg.x_min < rg.x_max) ||
        rg.n_lines < 1)
        throw ValidationError("invalid scenario ranges");
    FaultScenario sc;
    sc.id = index;
    sc.seed = split_seed(master_seed, index);
    Rng r(sc.seed);
    sc.line = int(r.next_below(uint64_t(rg.n_lines))) + 1;
    sc.x_pct = r.uniform(rg.x_min, rg.x_max);
    sc.tau = r.uniform(rg.tau_min, rg.tau_max);
    sc.k = r.uniform(rg.k_min, rg.k_max);
    return sc;
}

/// Same draw with the line forced round-robin over {1..n_lines}; used by the
/// per-line stratified (equal allocation) Monte Carlo estimates.
inline FaultScenario sample_scenario_stratified(uint64_t master_seed, uint64_t index,
                                                const ScenarioRanges& rg = {}) {
    FaultScenario sc = sample_scenario(master_seed, index, rg);
    sc.line = int(index % uint64_t(rg.n_lines)) + 1;
    return sc;
}

struct TisResult {
    int tis = 0;              // 1 = out of step
    double lambda_max = 0;    // deg
    bool boundary = false;    // criterion exactly zero
};

/// Transient instability status: Lambda^max is the largest pairwise rotor
/// angle separation (degrees, unwrapped) anywhere in the trace; class 1 iff
/// (360 - L)/(360 + L) < 0. The undefined point L = 360 is labeled stable and
/// flagged.
inline TisResult label_tis(const SimTrace& tr) {
    if (tr.t.empty() || tr.t.back() < 7.0 - 1e-9)
        throw ValidationError("TIS labeling requires the full 7 s trace");
    double lmax = 0;
    const size_t ng = tr.n_gen();
    for (size_t s = 0; s < tr.n_samples(); ++s) {
        double lo = tr.gens[0].f[sim::kDeltaDeg][s], hi = lo;
        for (size_t g = 1; g < ng; ++g) {
            double v = tr.gens[g].f[sim::kDeltaDeg][s];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        lmax = std::max(lmax, hi - lo);
    }
    TisResult r;
    r.lambda_max = lmax;
    double crit = (360.0 - lmax) / (360.0 + lmax);
    r.boundary = crit == 0.0;
    r.tis = crit < 0.0 ? 1 : 0;
    return r;
}

struct TabularWindow {
    static constexpr int kRows = 270;
    static constexpr int kCols = 250;
    std::vector<double> data;  // row-major 270 x 250
    int prefault_cols = 0, fault_cols = 0;
    int tis = 0;
    bool boundary = false, diverged = false;
    double r_metric = 0, rhat = 0;
    uint64_t scenario_id = 0;
    int line = 0;
    double x_pct = 0, tau = 0, k = 0;
    int dr_label = -1;  // filled by the CDR stage

    double& at(int row, int col) { return data[size_t(row) * kCols + size_t(col)]; }
    double at(int row, int col) const { return data[size_t(row) * kCols + size_t(col)]; }
};

/// Cut the 0.5 s window whose right edge sits at fault clearance. Per
/// machine: 9 measured rows, 9 first-difference rows (first column zero),
/// 9 rotor-angle-separation rows |delta_i - delta_j| ordered by j.
inline TabularWindow extract_window(const SimTrace& tr, const ScenarioRanges& rg = {}) {
    if (tr.fault_line == 0) throw ValidationError("window extraction needs a faulted scenario");
    if (tr.tau < rg.tau_min - 1e-12 || tr.tau > rg.tau_max + 1e-12)
        throw ValidationError(strf("fault duration %.4f outside [%g, %g] s", tr.tau, rg.tau_min,
                                   rg.tau_max));
    const double dt = tr.t.size() > 1 ? tr.t[1] - tr.t[0] : 2e-3;
    const long n_end = long(std::floor((tr.t_start + tr.tau) / dt + 1e-9));
    const long n_first = n_end - (TabularWindow::kCols - 1);
    if (n_first < 0 || size_t(n_end) >= tr.n_samples())
        throw ValidationError("trace does not cover the feature window");

    TabularWindow w;
    w.data.assign(size_t(TabularWindow::kRows) * TabularWindow::kCols, 0.0);
    const size_t ng = tr.n_gen();
    if (ng != 10) throw ValidationError("feature window is defined for 10 machines");

    for (size_t g = 0; g < ng; ++g) {
        const int base = int(g) * 27;
        for (int f = 0; f < sim::kNumFeatures; ++f) {
            const auto& series = tr.gens[g].f[size_t(f)];
            for (int c = 0; c < TabularWindow::kCols; ++c)
                w.at(base + f, c) = series[size_t(n_first + c)];
            // first differences of consecutive samples, first column padded
            for (int c = TabularWindow::kCols - 1; c >= 1; --c)
                w.at(base + 9 + f, c) = w.at(base + f, c) - w.at(base + f, c - 1);
            w.at(base + 9 + f, 0) = 0.0;
        }
        int row = base + 18;
        for (size_t j = 0; j < ng; ++j) {
            if (j == g) continue;
            for (int c = 0; c < TabularWindow::kCols; ++c) {
                double di = tr.gens[g].f[sim::kDeltaDeg][size_t(n_first + c)];
                double dj = tr.gens[j].f[sim::kDeltaDeg][size_t(n_first + c)];
                w.at(row, c) = std::fabs(di - dj);
            }
            ++row;
        }
    }

    // columns strictly after t_start count as fault samples
    int fault_cols = 0;
    for (int c = 0; c < TabularWindow::kCols; ++c)
        if (tr.t[size_t(n_first + c)] > tr.t_start + 1e-9) ++fault_cols;
    w.fault_cols = fault_cols;
    w.prefault_cols = TabularWindow::kCols - fault_cols;
    w.scenario_id = tr.scenario_id;
    w.line = tr.fault_line;
    w.x_pct = tr.x_pct;
    w.tau = tr.tau;
    w.k = tr.k;
    w.diverged = tr.diverged;
    return w;
}

struct ResilienceRecord {
    uint64_t id = 0;
    int line = 0;
    double x_pct = 0, tau = 0, k = 0;
    double r_metric = 0;   // integral of S_rms over the fault window
    double rhat = 0;       // k * tau, exact
    int tis = 0;
    bool boundary = false, diverged = false;
    double lambda_max = 0;
    int dr_label = -1;
    std::string error;     // per-record failure capture for batches
};

/// R by trapezoidal quadrature of S_rms over [t_start, t_start + tau] on the
/// 2 ms grid (linear interpolation for an off-grid clearance); Rhat = k*tau.
inline ResilienceRecord resilience(const SimTrace& tr) {
    ResilienceRecord rec;
    rec.id = tr.scenario_id;
    rec.line = tr.fault_line;
    rec.x_pct = tr.x_pct;
    rec.tau = tr.tau;
    rec.k = tr.k;
    rec.rhat = tr.k * tr.tau;
    rec.diverged = tr.diverged;

    const double dt = tr.t.size() > 1 ? tr.t[1] - tr.t[0] : 2e-3;
    const double t0 = tr.t_start, t1 = tr.t_start + tr.tau;
    double r = 0;
    if (tr.fault_line != 0) {
        long i0 = std::lround(t0 / dt);
        long i1 = long(std::floor(t1 / dt + 1e-9));
        for (long i = i0; i < i1; ++i)
            r += 0.5 * (tr.s_rms[size_t(i)] + tr.s_rms[size_t(i + 1)]) * dt;
        double t_grid = double(i1) * dt;
        if (t1 > t_grid + 1e-12 && size_t(i1 + 1) < tr.n_samples()) {
            double frac = (t1 - t_grid) / dt;
            double v_end = tr.s_rms[size_t(i1)] +
                           frac * (tr.s_rms[size_t(i1 + 1)] - tr.s_rms[size_t(i1)]);
            r += 0.5 * (tr.s_rms[size_t(i1)] + v_end) * (t1 - t_grid);
        }
    }
    rec.r_metric = r;
    return rec;
}

struct BatchOptions {
    ScenarioRanges ranges;
    SimConfig sim;
    bool stratified = false;
    bool keep_traces = false;
    bool no_fault = false;      // base-case override used by tests
    int n_threads = 0;          // 0 = DSC_THREADS or hardware
};

struct BatchResult {
    std::vector<ResilienceRecord> records;
    std::vector<TabularWindow> windows;   // empty entries for failed records
    std::vector<SimTrace> traces;         // only when keep_traces
};

inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("DSC_THREADS")) {
        int v = std::atoi(env);
        if (v > 0) return v;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : int(hc);
}

/// Simulate, label and window `n` scenarios. Scenario seeds derive from the
/// master seed by index, so the result is identical for any thread count;
/// records come back ordered by scenario id. Individual failures are captured
/// in the record instead of aborting the batch.
inline BatchResult run_batch(const PowerSystem& base, size_t n, uint64_t master_seed,
                             const BatchOptions& opt = {}) {
    if (n < 1) throw ValidationError("batch size must be at least 1");
    BatchResult out;
    out.records.resize(n);
    out.windows.resize(n);
    if (opt.keep_traces) out.traces.resize(n);

    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= n) return;
            FaultScenario sc = opt.stratified
                                   ? sample_scenario_stratified(master_seed, i, opt.ranges)
                                   : sample_scenario(master_seed, i, opt.ranges);
            if (opt.no_fault) sc.line = 0;
            try {
                sim::FaultSpec fp{sc.line, sc.x_pct, sc.tau, sc.r_fault_ohm};
                SimTrace tr = sim::simulate_scenario(base, sc.k, fp, opt.sim);
                tr.scenario_id = sc.id;
                TisResult tis = label_tis(tr);
                ResilienceRecord rec = resilience(tr);
                rec.id = sc.id;
                rec.tis = tis.tis;
                rec.boundary = tis.boundary;
                rec.lambda_max = tis.lambda_max;
                if (sc.line != 0) {
                    TabularWindow w = extract_window(tr, opt.ranges);
                    w.tis = tis.tis;
                    w.boundary = tis.boundary;
                    w.r_metric = rec.r_metric;
                    w.rhat = rec.rhat;
                    out.windows[i] = std::move(w);
                }
                out.records[i] = std::move(rec);
                if (opt.keep_traces) out.traces[i] = std::move(tr);
            } catch (const std::exception& ex) {
                ResilienceRecord rec;
                rec.id = sc.id;
                rec.line = sc.line;
                rec.x_pct = sc.x_pct;
                rec.tau = sc.tau;
                rec.k = sc.k;
                rec.rhat = sc.k * sc.tau;
                rec.error = ex.what();
                out.records[i] = std::move(rec);
            }
        }
    };

    int nt = std::min<int>(resolve_threads(opt.n_threads), int(n));
    if (nt <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return out;
}

/// Rhat values of sampled (not simulated) scenarios; the fast path for
/// ASR estimation, where Rhat = k*tau needs no trajectory.
inline std::vector<double> sample_rhat(size_t n, uint64_t master_seed, bool stratified = false,
                                       const ScenarioRanges& rg = {}) {
    std::vector<double> v(n);
    for (size_t i = 0; i < n; ++i) {
        FaultScenario sc = stratified ? sample_scenario_stratified(master_seed, i, rg)
                                      : sample_scenario(master_seed, i, rg);
        v[i] = sc.k * sc.tau;
    }
    return v;
}

}  // namespace dsc::scen
