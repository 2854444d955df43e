#pragma once

#include <map>
#include <queue>

#include "dsc/risk.hpp"
#include "dsc/scenario.hpp"

namespace dsc::cdr {

using grid::PowerSystem;
using risk::LoadingBounds;

struct LineScreenResult {
    int line = 0;
    int tis = 0;
    double lambda_max = 0;  // deg
    bool failed = false;
    std::string error;
};

struct CdrPolicy {
    std::vector<int> critical_lines;       // ranked by severity, most critical first
    std::vector<int> critical_load_buses;  // loads at terminal buses of critical lines
    std::vector<LineScreenResult> screen;  // all 46 screening runs
    double asr = 0.48;
    double shed_fraction = 0.05;
};

struct ScreenOptions {
    double tau = 0.4;    // maximum duration
    double k = 1.5;      // maximum loading
    double x_pct = 50.0;
    int target_count = 30;
    sim::SimConfig sim;
    int n_threads = 0;
};

/// N-1 dynamic screening: one three-phase fault per line at maximum loading
/// and maximum duration; unstable lines ranked by rotor-angle excursion. The
/// critical count is capped by how many lines actually go unstable.
inline CdrPolicy screen_critical(const PowerSystem& sys, const ScreenOptions& opt = {}) {
    CdrPolicy policy;
    policy.screen.resize(sys.lines.size());

    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= sys.lines.size()) return;
            LineScreenResult& res = policy.screen[i];
            res.line = sys.lines[i].id;
            try {
                sim::FaultSpec fs{sys.lines[i].id, opt.x_pct, opt.tau, 0.001};
                sim::SimTrace tr = sim::simulate_scenario(sys, opt.k, fs, opt.sim);
                auto tis = scen::label_tis(tr);
                res.tis = tis.tis;
                res.lambda_max = tis.lambda_max;
            } catch (const std::exception& ex) {
                res.failed = true;
                res.error = ex.what();
            }
        }
    };
    int nt = std::min<int>(scen::resolve_threads(opt.n_threads), int(sys.lines.size()));
    if (nt <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    std::vector<const LineScreenResult*> unstable;
    for (const auto& r : policy.screen)
        if (!r.failed && r.tis == 1) unstable.push_back(&r);
    std::sort(unstable.begin(), unstable.end(), [](const auto* a, const auto* b) {
        if (a->lambda_max != b->lambda_max) return a->lambda_max > b->lambda_max;
        return a->line < b->line;
    });
    size_t count = std::min<size_t>(size_t(opt.target_count), unstable.size());
    for (size_t i = 0; i < count; ++i) policy.critical_lines.push_back(unstable[i]->line);

    std::set<int> load_buses;
    for (const auto& ld : sys.loads) load_buses.insert(ld.bus);
    std::set<int> crit;
    for (int lid : policy.critical_lines) {
        const auto& l = sys.line_by_id(lid);
        if (load_buses.count(l.from)) crit.insert(l.from);
        if (load_buses.count(l.to)) crit.insert(l.to);
    }
    policy.critical_load_buses.assign(crit.begin(), crit.end());
    return policy;
}

/// Demand-response class: 1 (critical participants) iff Rhat <= ASR.
inline int label_dr_class(double rhat, double asr) { return rhat <= asr ? 1 : 0; }

struct DrDispatch {
    uint64_t scenario_id = 0;
    int label = 0;
    int x1 = 0, x2 = 0;        // binary selectors, x1 + x2 = 1
    double fraction = 0;       // participation fraction applied
    double dr_effective = 0;   // X1*DR1 or X2*DR2
    double affected_mw = 0;    // load in the engaged set
    double shed_mw = 0;
    std::vector<std::pair<int, double>> redistribution;  // gen id -> MW picked up
};

namespace detail {

/// Hop distance from every bus to the nearest generator terminal, used to
/// attribute shed demand to local machines in the dispatch report.
inline std::vector<int> nearest_gen(const PowerSystem& sys) {
    const size_t n = sys.buses.size();
    std::vector<std::vector<size_t>> adj(n);
    for (const auto& l : sys.lines) {
        size_t f = size_t(sys.bus_index(l.from)), t = size_t(sys.bus_index(l.to));
        adj[f].push_back(t);
        adj[t].push_back(f);
    }
    std::vector<int> owner(n, -1);
    std::queue<size_t> q;
    // multi-source BFS; lower generator id wins ties by seeding order
    for (const auto& g : sys.gens) {
        size_t b = size_t(sys.bus_index(g.bus));
        if (owner[b] == -1) {
            owner[b] = g.id;
            q.push(b);
        }
    }
    while (!q.empty()) {
        size_t u = q.front();
        q.pop();
        for (size_t v : adj[u])
            if (owner[v] == -1) {
                owner[v] = owner[u];
                q.push(v);
            }
    }
    return owner;
}

}  // namespace detail

/// Apply the binary dispatch selector: class-1 scenarios shed on the critical loads,
/// class-0 on the noncritical ones. Shed = fraction x engaged MW; the
/// redistribution report assigns critical-set shed to the nearest machines.
inline DrDispatch dispatch_dr(const PowerSystem& sys, const CdrPolicy& policy,
                              const scen::ResilienceRecord& rec, double dr1, double dr2) {
    if (dr1 < 0 || dr1 > 1 || dr2 < 0 || dr2 > 1)
        throw ValidationError("participation fractions must lie in [0, 1]");
    DrDispatch d;
    d.scenario_id = rec.id;
    d.label = label_dr_class(rec.rhat, policy.asr);
    d.x1 = d.label == 1 ? 1 : 0;
    d.x2 = 1 - d.x1;
    d.fraction = d.label == 1 ? dr1 : dr2;
    d.dr_effective = d.label == 1 ? double(d.x1) * dr1 : double(d.x2) * dr2;

    std::set<int> critical(policy.critical_load_buses.begin(), policy.critical_load_buses.end());
    double affected = 0;
    for (const auto& ld : sys.loads) {
        bool in_critical = critical.count(ld.bus) != 0;
        if ((d.label == 1) == in_critical) affected += ld.p;
    }
    d.affected_mw = affected * sys.base_mva;
    d.shed_mw = d.fraction * d.affected_mw;

    if (d.label == 1 && d.shed_mw > 0) {
        auto owner = detail::nearest_gen(sys);
        std::map<int, double> pick;
        for (const auto& ld : sys.loads) {
            if (!critical.count(ld.bus)) continue;
            int gen = owner[size_t(sys.bus_index(ld.bus))];
            pick[gen] += d.fraction * ld.p * sys.base_mva;
        }
        d.redistribution.assign(pick.begin(), pick.end());
    }
    return d;
}

/// Coordinated demand response: average effective participation over the scenario population.
inline double aggregate_cdr(const std::vector<DrDispatch>& dispatches) {
    if (dispatches.empty()) throw ValidationError("cannot aggregate an empty dispatch set");
    double s = 0;
    for (const auto& d : dispatches) s += d.dr_effective;
    return s / double(dispatches.size());
}

struct PolicyPoint {
    double shed = 0;      // fraction of the 1..10% grid
    double alpha = 0, beta = 0;
    double sfi = 0;
};

/// SFI along the shed grid: shedding s rescales the loading support to
/// [(1-s)a, (1-s)b] and the closed form is re-evaluated at the same ASR.
inline std::vector<PolicyPoint> evaluate_policy(double asr, const LoadingBounds& base,
                                                int grid_steps = 10) {
    std::vector<PolicyPoint> curve;
    for (int s = 0; s <= grid_steps; ++s) {
        double frac = 0.01 * double(s);
        LoadingBounds b = base.shed(frac);
        curve.push_back({frac, b.alpha, b.beta, risk::sfi(asr, b)});
    }
    return curve;
}

}  // namespace dsc::cdr
