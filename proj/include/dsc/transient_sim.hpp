#pragma once

#include <array>
#include <cstring>
#include <functional>
#include <memory>

#include "dsc/grid_model.hpp"

namespace dsc::sim {

using grid::PowerSystem;
using grid::ReducedNetwork;
using grid::Topology;

struct SimConfig {
    double t_start = 2.0;          // fault application, s
    double horizon = 7.0;          // monitored duration, s
    double dt = 1e-3;              // integration step
    double sample_dt = 2e-3;       // measurement grid
    double reclose_delay = 0.02;   // first autoreclose shot after clearance
    double second_shot_s = 5.0;    // recorded metadata only, beyond any window
    double diverge_limit_deg = 1e6;

    void validate() const {
        long m = std::lround(sample_dt / dt);
        if (std::fabs(m * dt - sample_dt) > 1e-12 || m < 1)
            throw ValidationError("sample period must be an integer multiple of the step");
        if (!(horizon > t_start))
            throw ValidationError("horizon must exceed the fault start time");
    }
};

/// Nine instantaneous measurements per machine, in the canonical order used
/// by the feature windows.
enum Feature : int {
    kId = 0, kIq, kVd, kVq, kDeltaDeg, kOmega, kTe, kPg, kQg,
    kNumFeatures
};

struct GenSeries {
    std::array<std::vector<double>, kNumFeatures> f;
    void resize(size_t n) {
        for (auto& v : f) v.assign(n, 0.0);
    }
};

struct SimTrace {
    std::vector<double> t;             // 2 ms grid, horizon/2ms + 1 points
    std::vector<GenSeries> gens;
    std::vector<double> s_rms;         // normalized composite-load apparent power
    std::vector<uint8_t> fault_on;     // Algorithm-1 status: 1 iff t_start <= t <= t_end
    std::vector<uint8_t> line_in_service;
    std::vector<uint8_t> phase;        // 0 pre, 1 fault, 2 open, 3 restored
    bool diverged = false;
    size_t n_valid = 0;                // samples actually integrated
    double t_start = 0, t_clear = 0;
    double k = 1.0;
    int fault_line = 0;                // 0 = no fault applied
    double x_pct = 0, tau = 0;
    uint64_t scenario_id = 0;
    double second_shot_s = 5.0;

    size_t n_samples() const { return t.size(); }
    size_t n_gen() const { return gens.size(); }
};

/// Swing-equation right-hand side for a fixed reduced network.
/// State layout: y[0..ng) = delta (rad), y[ng..2ng) = omega (pu).
struct SwingRhs {
    const ReducedNetwork* net;
    const std::vector<double>* pm;
    const std::vector<double>* h2;  // 2*H
    const std::vector<double>* d;

    void operator()(const double* y, double* dy) const {
        const size_t ng = net->n_gen;
        std::array<Complex, 16> e;
        for (size_t i = 0; i < ng; ++i) e[i] = std::polar(net->emf_mag[i], y[i]);
        for (size_t i = 0; i < ng; ++i) {
            Complex ii(0, 0);
            for (size_t j = 0; j < ng; ++j) ii += net->y_red(i, j) * e[j];
            double pe = (e[i] * std::conj(ii)).real();
            double dw = y[ng + i] - 1.0;
            dy[i] = kOmegaSyn * dw;
            dy[ng + i] = ((*pm)[i] - pe - (*d)[i] * dw) / (*h2)[i];
        }
    }
};

/// Classic fixed-step RK4 for a callable rhs(y, dy).
template <typename Rhs>
void rk4_step(const Rhs& rhs, double* y, size_t n, double h, double* scratch) {
    double* k1 = scratch;
    double* k2 = scratch + n;
    double* k3 = scratch + 2 * n;
    double* k4 = scratch + 3 * n;
    double* tmp = scratch + 4 * n;
    rhs(y, k1);
    for (size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
    rhs(tmp, k2);
    for (size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
    rhs(tmp, k3);
    for (size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * k3[i];
    rhs(tmp, k4);
    for (size_t i = 0; i < n; ++i)
        y[i] += h / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
}

struct MeasureSample {
    std::array<std::array<double, kNumFeatures>, 16> gen;  // up to 16 machines
    double s_rms = 0;
};

/// Instantaneous machine measurements for a rotor state against a given
/// network: currents from the reduced matrix, terminal voltages through the
/// recovery mapping, dq projections in each rotor's frame.
inline MeasureSample measure(const ReducedNetwork& net, const PowerSystem& sys,
                             const double* delta, const double* omega) {
    const size_t ng = net.n_gen;
    MeasureSample out{};
    std::vector<Complex> e(ng);
    for (size_t i = 0; i < ng; ++i) e[i] = std::polar(net.emf_mag[i], delta[i]);
    std::vector<Complex> v_elim = grid::recover_bus_voltages(net, e);

    double s_total = 0;
    for (size_t b = 0; b < v_elim.size(); ++b) {
        double ymag = std::abs(net.y_load[b]);
        if (ymag > 0) s_total += std::norm(v_elim[b]) * ymag;
    }
    out.s_rms = s_total / net.s_rms_norm;

    for (size_t i = 0; i < ng; ++i) {
        Complex ii(0, 0);
        for (size_t j = 0; j < ng; ++j) ii += net.y_red(i, j) * e[j];
        int elim = net.elim_index_of_bus(sys.gens[i].bus);
        Complex vt = v_elim[size_t(elim)];
        Complex rot = std::polar(1.0, -delta[i]);
        Complex idq = ii * rot, vdq = vt * rot;
        double pe = (e[i] * std::conj(ii)).real();
        Complex sg = vt * std::conj(ii);
        auto& g = out.gen[i];
        g[kId] = idq.real();
        g[kIq] = idq.imag();
        g[kVd] = vdq.real();
        g[kVq] = vdq.imag();
        g[kDeltaDeg] = delta[i] * kDegPerRad;
        g[kOmega] = omega[i];
        g[kTe] = omega[i] != 0 ? pe / omega[i] : pe;
        g[kPg] = sg.real();
        g[kQg] = sg.imag();
    }
    return out;
}

/// Normalized composite-load apparent power for a rotor state. Equals the
/// loading factor k at the prefault operating point by construction.
inline double load_rms(const ReducedNetwork& net, const std::vector<double>& delta) {
    std::vector<Complex> e(net.n_gen);
    for (size_t i = 0; i < net.n_gen; ++i) e[i] = std::polar(net.emf_mag[i], delta[i]);
    auto v = grid::recover_bus_voltages(net, e);
    double s = 0;
    for (size_t b = 0; b < v.size(); ++b) {
        double ymag = std::abs(net.y_load[b]);
        if (ymag > 0) s += std::norm(v[b]) * ymag;
    }
    return s / net.s_rms_norm;
}

struct FaultSpec {
    int line = 0;  // 1-based id, 0 = no fault
    double x_pct = 50.0;
    double tau = 0.1;
    double r_fault_ohm = 0.001;
};

/// Integrate the swing dynamics through the Algorithm-1 switching sequence:
/// fault on at t_start (line split + fault shunt), clearance at t_start+tau
/// (line out), reclose 20 ms later (intact line restored). The system passed
/// in must already be at the scenario loading.
inline SimTrace simulate(const PowerSystem& sys, const grid::OperatingPoint& op,
                         const FaultSpec& fs, const SimConfig& cfg) {
    cfg.validate();
    const size_t ng = sys.gens.size();
    if (ng > 16) throw ValidationError("at most 16 machines supported");

    Topology intact = Topology::all_in_service(sys);
    ReducedNetwork net_pre = build_reduced_network(sys, intact, op);

    std::unique_ptr<ReducedNetwork> net_fault, net_open;
    double t_clear = 0, t_reclose = 0;
    if (fs.line != 0) {
        if (!(fs.tau > 0)) throw ValidationError("fault duration must be positive");
        Topology ft = intact;
        size_t li = SIZE_MAX;
        for (size_t i = 0; i < sys.lines.size(); ++i)
            if (sys.lines[i].id == fs.line) li = i;
        if (li == SIZE_MAX) throw ValidationError(strf("unknown line id %d", fs.line));
        ft.line_status[li] = 0;
        ft.fault = grid::FaultTap{fs.line, fs.x_pct, fs.r_fault_ohm};
        net_fault = std::make_unique<ReducedNetwork>(build_reduced_network(sys, ft, op));
        Topology ot = intact;
        ot.line_status[li] = 0;
        net_open = std::make_unique<ReducedNetwork>(build_reduced_network(sys, ot, op));
        t_clear = cfg.t_start + fs.tau;
        t_reclose = t_clear + cfg.reclose_delay;
        if (!(t_clear + cfg.reclose_delay < cfg.horizon))
            throw ValidationError("fault window must end before the horizon");
    }

    std::vector<double> pm(ng), h2(ng), damp(ng);
    for (size_t i = 0; i < ng; ++i) {
        pm[i] = op.pe0[i];
        h2[i] = 2.0 * sys.gens[i].h;
        damp[i] = sys.gens[i].d;
    }

    const long n_steps = std::lround(cfg.horizon / cfg.dt);
    const long per_sample = std::lround(cfg.sample_dt / cfg.dt);
    const size_t n_samples = size_t(n_steps / per_sample) + 1;

    SimTrace tr;
    tr.t.resize(n_samples);
    tr.gens.resize(ng);
    for (auto& g : tr.gens) g.resize(n_samples);
    tr.s_rms.assign(n_samples, 0.0);
    tr.fault_on.assign(n_samples, 0);
    tr.line_in_service.assign(n_samples, 1);
    tr.phase.assign(n_samples, 0);
    tr.t_start = cfg.t_start;
    tr.t_clear = t_clear;
    tr.k = sys.loading;
    tr.fault_line = fs.line;
    tr.x_pct = fs.x_pct;
    tr.tau = fs.tau;
    tr.second_shot_s = cfg.second_shot_s;

    const size_t ns = 2 * ng;
    std::vector<double> y(ns), scratch(5 * ns);
    for (size_t i = 0; i < ng; ++i) {
        y[i] = op.delta0[i];
        y[ng + i] = op.omega0[i];
    }

    const ReducedNetwork* active = &net_pre;
    int cur_phase = 0;
    const double lim_rad = cfg.diverge_limit_deg / kDegPerRad;
    const double eps = 1e-9;

    auto record = [&](size_t si, double ts) {
        tr.t[si] = ts;
        MeasureSample m = measure(*active, sys, y.data(), y.data() + ng);
        for (size_t g = 0; g < ng; ++g)
            for (int k = 0; k < kNumFeatures; ++k) tr.gens[g].f[size_t(k)][si] = m.gen[g][size_t(k)];
        tr.s_rms[si] = m.s_rms;
        bool fon = fs.line != 0 && ts >= cfg.t_start - eps && ts <= t_clear + eps;
        tr.fault_on[si] = fon ? 1 : 0;
        tr.line_in_service[si] = fon ? 0 : 1;
        tr.phase[si] = uint8_t(cur_phase);
        tr.n_valid = si + 1;
    };

    size_t sample_idx = 0;
    for (long m = 0; m <= n_steps; ++m) {
        double tm = m * cfg.dt;
        if (m % per_sample == 0) record(sample_idx++, tm);
        if (m == n_steps) break;

        double t_next = (m + 1) * cfg.dt;
        // events are processed left-to-right inside the step; a sample taken
        // at an event instant above used the pre-switch network (left limit)
        double t_cur = tm;
        SwingRhs rhs{active, &pm, &h2, &damp};
        auto advance_to = [&](double te) {
            if (te - t_cur > eps) {
                rhs.net = active;
                rk4_step(rhs, y.data(), ns, te - t_cur, scratch.data());
                t_cur = te;
            }
        };
        if (fs.line != 0) {
            if (cur_phase == 0 && cfg.t_start < t_next - eps) {
                advance_to(std::max(tm, cfg.t_start));
                active = net_fault.get();
                cur_phase = 1;
            }
            if (cur_phase == 1 && t_clear < t_next - eps) {
                advance_to(std::max(tm, t_clear));
                active = net_open.get();
                cur_phase = 2;
            }
            if (cur_phase == 2 && t_reclose < t_next - eps) {
                advance_to(std::max(tm, t_reclose));
                active = &net_pre;
                cur_phase = 3;
            }
        }
        advance_to(t_next);

        double worst = 0;
        for (size_t i = 0; i < ng; ++i) worst = std::max(worst, std::fabs(y[i]));
        if (worst > lim_rad) {
            tr.diverged = true;
            for (size_t i = 0; i < ng; ++i) y[i] = clamp(y[i], -lim_rad, lim_rad);
            break;
        }
    }

    if (tr.diverged) {
        // hold the last valid sample across the remaining grid
        size_t last = tr.n_valid == 0 ? 0 : tr.n_valid - 1;
        for (size_t si = tr.n_valid; si < n_samples; ++si) {
            tr.t[si] = double(si) * cfg.sample_dt;
            for (size_t g = 0; g < ng; ++g)
                for (int k = 0; k < kNumFeatures; ++k)
                    tr.gens[g].f[size_t(k)][si] = tr.gens[g].f[size_t(k)][last];
            tr.s_rms[si] = tr.s_rms[last];
            bool fon = fs.line != 0 && tr.t[si] >= cfg.t_start - eps && tr.t[si] <= t_clear + eps;
            tr.fault_on[si] = fon ? 1 : 0;
            tr.line_in_service[si] = fon ? 0 : 1;
            tr.phase[si] = uint8_t(cur_phase);
        }
    } else {
        tr.n_valid = n_samples;
    }
    return tr;
}

/// Scale to the scenario loading, solve the equilibrium and run. This is the
/// whole-scenario entry point used by the batch engine.
inline SimTrace simulate_scenario(const PowerSystem& base, double k, const FaultSpec& fs,
                                  const SimConfig& cfg) {
    PowerSystem scaled = grid::scale_loading(base, k);
    grid::OperatingPoint op = grid::initialize_equilibrium(scaled);
    return simulate(scaled, op, fs, cfg);
}

}  // namespace dsc::sim
