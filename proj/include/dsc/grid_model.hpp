#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dsc/csv.hpp"
#include "dsc/linalg.hpp"

namespace dsc::grid {

enum class BusType { kSlack, kPv, kPq };

struct Bus {
    int id = 0;
    BusType type = BusType::kPq;
    double vset = 1.0;  // pu, regulated buses
};

struct Line {
    int id = 0;
    int from = 0, to = 0;  // bus ids
    double r = 0, x = 0;   // series impedance, pu
    double b = 0;          // total charging susceptance, pu
    double tap = 1.0;      // off-nominal ratio, from side
    bool in_service = true;
};

struct Generator {
    int id = 0;
    int bus = 0;
    double pg = 0;    // scheduled active power, pu
    double h = 1.0;   // inertia constant, s (system base)
    double d = 0.0;   // damping, pu
    double xdp = 0;   // transient reactance, pu
};

struct Load {
    int bus = 0;
    double p = 0, q = 0;  // pu, already scaled by the loading factor
};

/// Static network description. Immutable in use: every operation takes it by
/// const reference and returns new values.
struct PowerSystem {
    double base_mva = kBaseMva;
    double freq_hz = kBaseFreqHz;
    double kv_base = 345.0;  // transmission voltage base for ohm->pu conversion
    double loading = 1.0;    // factor already applied to loads/generation
    std::vector<Bus> buses;
    std::vector<Line> lines;
    std::vector<Generator> gens;
    std::vector<Load> loads;

    int bus_index(int id) const {
        for (size_t i = 0; i < buses.size(); ++i)
            if (buses[i].id == id) return int(i);
        throw ValidationError(strf("unknown bus id %d", id));
    }
    const Line& line_by_id(int id) const {
        for (const auto& l : lines)
            if (l.id == id) return l;
        throw ValidationError(strf("unknown line id %d", id));
    }
    double total_load_p() const {
        double s = 0;
        for (const auto& l : loads) s += l.p;
        return s;
    }
    /// Sum of |P+jQ| over loads at the base (k=1) loading; the S_rms
    /// normalizer.
    double base_apparent_load() const {
        double s = 0;
        for (const auto& l : loads) s += std::hypot(l.p, l.q);
        return s / loading;
    }
};

/// Structural checks valid for any network (toy systems included).
inline void validate_structure(const PowerSystem& sys) {
    std::set<int> bus_ids, line_ids, gen_ids;
    int n_slack = 0;
    for (const auto& b : sys.buses) {
        if (!bus_ids.insert(b.id).second)
            throw ValidationError(strf("duplicated bus id %d", b.id));
        if (b.type == BusType::kSlack) ++n_slack;
    }
    if (n_slack != 1) throw ValidationError(strf("expected exactly one slack bus, got %d", n_slack));
    for (const auto& l : sys.lines) {
        if (!line_ids.insert(l.id).second)
            throw ValidationError(strf("duplicated line id %d", l.id));
        if (std::hypot(l.r, l.x) <= 0)
            throw ValidationError(strf("line %d: impedance magnitude must be positive", l.id));
        if (!bus_ids.count(l.from) || !bus_ids.count(l.to))
            throw ValidationError(strf("line %d references unknown bus", l.id));
    }
    for (const auto& g : sys.gens) {
        if (!gen_ids.insert(g.id).second)
            throw ValidationError(strf("duplicated generator id %d", g.id));
        if (!bus_ids.count(g.bus))
            throw ValidationError(strf("generator %d references unknown bus", g.id));
        if (g.h <= 0 || g.xdp <= 0)
            throw ValidationError(strf("generator %d: H and x'd must be positive", g.id));
    }
    for (const auto& l : sys.loads)
        if (!bus_ids.count(l.bus))
            throw ValidationError(strf("load references unknown bus %d", l.bus));
}

/// Shape checks specific to the bundled New England case.
inline void validate_ieee39(const PowerSystem& sys) {
    if (sys.buses.size() != 39)
        throw ValidationError(strf("expected 39 buses, got %zu", sys.buses.size()));
    if (sys.lines.size() != 46)
        throw ValidationError(strf("expected 46 lines, got %zu", sys.lines.size()));
    if (sys.gens.size() != 10)
        throw ValidationError(strf("expected 10 generators, got %zu", sys.gens.size()));
}

/// Load the three-table system spec (buses.csv, lines.csv, gens.csv) from a
/// directory. Powers in the files are MW/MVAr on the 100 MVA base.
inline PowerSystem load_system(const std::string& dir) {
    PowerSystem sys;
    auto buses = csv::read_file(dir + "/buses.csv");
    auto lines = csv::read_file(dir + "/lines.csv");
    auto gens = csv::read_file(dir + "/gens.csv");

    {
        int c_id = buses.col("id"), c_ty = buses.col("type"), c_v = buses.col("vset_pu");
        int c_p = buses.col("pload_mw"), c_q = buses.col("qload_mvar");
        for (size_t i = 0; i < buses.rows.size(); ++i) {
            Bus b;
            b.id = int(csv::to_long(buses, i, c_id));
            const std::string& ty = buses.rows[i][c_ty];
            if (ty == "slack") b.type = BusType::kSlack;
            else if (ty == "pv") b.type = BusType::kPv;
            else if (ty == "pq") b.type = BusType::kPq;
            else
                throw ValidationError(strf("%s:%d: unknown bus type '%s'", buses.path.c_str(),
                                           buses.line_no[i], ty.c_str()));
            b.vset = csv::to_double(buses, i, c_v);
            sys.buses.push_back(b);
            double p = csv::to_double(buses, i, c_p) / sys.base_mva;
            double q = csv::to_double(buses, i, c_q) / sys.base_mva;
            if (p != 0 || q != 0) sys.loads.push_back({b.id, p, q});
        }
    }
    {
        int c_id = lines.col("id"), c_f = lines.col("from"), c_t = lines.col("to");
        int c_r = lines.col("r_pu"), c_x = lines.col("x_pu"), c_b = lines.col("b_pu");
        int c_tap = lines.col("tap"), c_st = lines.col("status");
        for (size_t i = 0; i < lines.rows.size(); ++i) {
            Line l;
            l.id = int(csv::to_long(lines, i, c_id));
            l.from = int(csv::to_long(lines, i, c_f));
            l.to = int(csv::to_long(lines, i, c_t));
            l.r = csv::to_double(lines, i, c_r);
            l.x = csv::to_double(lines, i, c_x);
            l.b = csv::to_double(lines, i, c_b);
            l.tap = csv::to_double(lines, i, c_tap);
            l.in_service = csv::to_long(lines, i, c_st) != 0;
            if (l.tap <= 0) l.tap = 1.0;
            sys.lines.push_back(l);
        }
    }
    {
        int c_id = gens.col("id"), c_b = gens.col("bus"), c_p = gens.col("pg_mw");
        int c_h = gens.col("h_s"), c_d = gens.col("d_pu"), c_x = gens.col("xdp_pu");
        for (size_t i = 0; i < gens.rows.size(); ++i) {
            Generator g;
            g.id = int(csv::to_long(gens, i, c_id));
            g.bus = int(csv::to_long(gens, i, c_b));
            g.pg = csv::to_double(gens, i, c_p) / sys.base_mva;
            g.h = csv::to_double(gens, i, c_h);
            g.d = csv::to_double(gens, i, c_d);
            g.xdp = csv::to_double(gens, i, c_x);
            sys.gens.push_back(g);
        }
    }
    validate_structure(sys);
    validate_ieee39(sys);
    return sys;
}

/// Multiply every load and every scheduled (non-slack) generator output by k.
/// The slack machine absorbs the mismatch in the subsequent power flow. The
/// original system is left untouched.
inline PowerSystem scale_loading(const PowerSystem& sys, double k) {
    if (!(k > 0)) throw ValidationError("loading factor must be positive");
    PowerSystem out = sys;
    for (auto& l : out.loads) { l.p *= k; l.q *= k; }
    int slack_bus = -1;
    for (const auto& b : sys.buses)
        if (b.type == BusType::kSlack) slack_bus = b.id;
    for (auto& g : out.gens)
        if (g.bus != slack_bus) g.pg *= k;
    out.loading = sys.loading * k;
    return out;
}

// ---------------------------------------------------------------------------
// Power flow and the prefault operating point
// ---------------------------------------------------------------------------

struct OperatingPoint {
    std::vector<Complex> v_bus;    // solved bus voltage phasors, pu
    std::vector<double> delta0;    // rotor angles, rad
    std::vector<double> omega0;    // speeds, pu (all 1 at equilibrium)
    std::vector<double> pe0;       // electrical power, pu
    std::vector<Complex> emf;      // internal EMF phasors E ang(delta)
    int iterations = 0;
    double mismatch = 0;
};

/// Bus admittance matrix over the physical buses (no generator nodes).
inline CMat build_ybus(const PowerSystem& sys) {
    const size_t n = sys.buses.size();
    CMat y(n, n);
    for (const auto& l : sys.lines) {
        if (!l.in_service) continue;
        size_t f = size_t(sys.bus_index(l.from)), t = size_t(sys.bus_index(l.to));
        Complex ys = 1.0 / Complex(l.r, l.x);
        Complex sh(0.0, l.b / 2.0);
        double a = l.tap;
        y(f, f) += (ys + sh) / (a * a);
        y(t, t) += ys + sh;
        y(f, t) -= ys / a;
        y(t, f) -= ys / a;
    }
    return y;
}

namespace detail {

inline void check_connected(const PowerSystem& sys) {
    const size_t n = sys.buses.size();
    std::vector<std::vector<size_t>> adj(n);
    for (const auto& l : sys.lines) {
        if (!l.in_service) continue;
        size_t f = size_t(sys.bus_index(l.from)), t = size_t(sys.bus_index(l.to));
        adj[f].push_back(t);
        adj[t].push_back(f);
    }
    std::vector<char> seen(n, 0);
    std::vector<size_t> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
        size_t u = stack.back();
        stack.pop_back();
        for (size_t v : adj[u])
            if (!seen[v]) { seen[v] = 1; stack.push_back(v); }
    }
    for (size_t i = 0; i < n; ++i)
        if (!seen[i])
            throw NumericalError(strf("network is disconnected (bus %d unreachable)",
                                      sys.buses[i].id));
}

}  // namespace detail

/// Newton-Raphson power flow in polar form. Converges to max|mismatch| below
/// `tol` or throws with the final mismatch. Loads are constant-PQ here; the
/// constant-impedance conversion happens only when networks are reduced.
inline OperatingPoint solve_power_flow(const PowerSystem& sys, double tol = 1e-8,
                                       int max_iter = 50) {
    detail::check_connected(sys);
    const size_t n = sys.buses.size();
    CMat y = build_ybus(sys);

    std::vector<double> pset(n, 0), qset(n, 0);
    for (const auto& g : sys.gens) pset[sys.bus_index(g.bus)] += g.pg;
    for (const auto& l : sys.loads) {
        pset[sys.bus_index(l.bus)] -= l.p;
        qset[sys.bus_index(l.bus)] -= l.q;
    }

    std::vector<double> vm(n, 1.0), va(n, 0.0);
    for (size_t i = 0; i < n; ++i)
        if (sys.buses[i].type != BusType::kPq) vm[i] = sys.buses[i].vset;

    // unknown ordering: angles at non-slack buses, then magnitudes at PQ buses
    std::vector<size_t> ang_idx, mag_idx;
    for (size_t i = 0; i < n; ++i) {
        if (sys.buses[i].type != BusType::kSlack) ang_idx.push_back(i);
        if (sys.buses[i].type == BusType::kPq) mag_idx.push_back(i);
    }
    const size_t na = ang_idx.size(), nm = mag_idx.size(), nu = na + nm;

    auto injections = [&](std::vector<double>& p, std::vector<double>& q) {
        for (size_t i = 0; i < n; ++i) {
            double pi = 0, qi = 0;
            for (size_t j = 0; j < n; ++j) {
                double g = y(i, j).real(), b = y(i, j).imag();
                double th = va[i] - va[j];
                double c = std::cos(th), s = std::sin(th);
                pi += vm[i] * vm[j] * (g * c + b * s);
                qi += vm[i] * vm[j] * (g * s - b * c);
            }
            p[i] = pi;
            q[i] = qi;
        }
    };

    std::vector<double> p(n), q(n);
    auto mismatch_vec = [&](std::vector<double>& f) {
        injections(p, q);
        for (size_t k = 0; k < na; ++k) f[k] = pset[ang_idx[k]] - p[ang_idx[k]];
        for (size_t k = 0; k < nm; ++k) f[na + k] = qset[mag_idx[k]] - q[mag_idx[k]];
    };
    auto max_abs = [](const std::vector<double>& f) {
        double m = 0;
        for (double v : f) m = std::max(m, std::fabs(v));
        return m;
    };

    std::vector<double> f(nu);
    mismatch_vec(f);
    double err = max_abs(f);
    int it = 0;
    while (err > tol) {
        if (++it > max_iter)
            throw NumericalError(strf("power flow did not converge: mismatch %.3e after %d iterations",
                                      err, max_iter));
        RMat jac(nu, nu);
        // dP/dtheta, dP/dV, dQ/dtheta, dQ/dV in standard polar form
        for (size_t r = 0; r < na; ++r) {
            size_t i = ang_idx[r];
            for (size_t cidx = 0; cidx < na; ++cidx) {
                size_t j = ang_idx[cidx];
                double g = y(i, j).real(), b = y(i, j).imag();
                double th = va[i] - va[j];
                if (i == j)
                    jac(r, cidx) = -q[i] - b * vm[i] * vm[i];
                else
                    jac(r, cidx) = vm[i] * vm[j] * (g * std::sin(th) - b * std::cos(th));
            }
            for (size_t cidx = 0; cidx < nm; ++cidx) {
                size_t j = mag_idx[cidx];
                double g = y(i, j).real(), b = y(i, j).imag();
                double th = va[i] - va[j];
                if (i == j)
                    jac(r, na + cidx) = p[i] / vm[i] + g * vm[i];
                else
                    jac(r, na + cidx) = vm[i] * (g * std::cos(th) + b * std::sin(th));
            }
        }
        for (size_t r = 0; r < nm; ++r) {
            size_t i = mag_idx[r];
            for (size_t cidx = 0; cidx < na; ++cidx) {
                size_t j = ang_idx[cidx];
                double g = y(i, j).real(), b = y(i, j).imag();
                double th = va[i] - va[j];
                if (i == j)
                    jac(na + r, cidx) = p[i] - g * vm[i] * vm[i];
                else
                    jac(na + r, cidx) = -vm[i] * vm[j] * (g * std::cos(th) + b * std::sin(th));
            }
            for (size_t cidx = 0; cidx < nm; ++cidx) {
                size_t j = mag_idx[cidx];
                double g = y(i, j).real(), b = y(i, j).imag();
                double th = va[i] - va[j];
                if (i == j)
                    jac(na + r, na + cidx) = q[i] / vm[i] - b * vm[i];
                else
                    jac(na + r, na + cidx) = vm[i] * (g * std::sin(th) - b * std::cos(th));
            }
        }
        std::vector<double> dx = solve_dense(jac, f);
        // step with simple backtracking if the residual grows
        std::vector<double> va0 = va, vm0 = vm;
        double step = 1.0;
        for (int tries = 0; tries < 5; ++tries) {
            for (size_t k2 = 0; k2 < na; ++k2) va[ang_idx[k2]] = va0[ang_idx[k2]] + step * dx[k2];
            for (size_t k2 = 0; k2 < nm; ++k2) vm[mag_idx[k2]] = vm0[mag_idx[k2]] + step * dx[na + k2];
            mismatch_vec(f);
            double e2 = max_abs(f);
            if (e2 < err || e2 < tol) { err = e2; break; }
            step *= 0.5;
            if (tries == 4) err = e2;
        }
    }

    OperatingPoint op;
    op.v_bus.resize(n);
    for (size_t i = 0; i < n; ++i) op.v_bus[i] = std::polar(vm[i], va[i]);
    op.iterations = it;
    op.mismatch = err;
    return op;
}

/// Solve the prefault power flow and place the classical machines at their
/// fixed point: E ang(delta) = V + j x'd I, P_m = P_e(0).
inline OperatingPoint initialize_equilibrium(const PowerSystem& sys, double tol = 1e-8,
                                             int max_iter = 50) {
    OperatingPoint op = solve_power_flow(sys, tol, max_iter);
    const size_t n = sys.buses.size();
    CMat y = build_ybus(sys);
    std::vector<Complex> i_bus = matvec(y, op.v_bus);

    std::vector<double> pload(n, 0), qload(n, 0);
    for (const auto& l : sys.loads) {
        pload[sys.bus_index(l.bus)] += l.p;
        qload[sys.bus_index(l.bus)] += l.q;
    }

    op.delta0.resize(sys.gens.size());
    op.omega0.assign(sys.gens.size(), 1.0);
    op.pe0.resize(sys.gens.size());
    op.emf.resize(sys.gens.size());
    for (size_t g = 0; g < sys.gens.size(); ++g) {
        size_t b = size_t(sys.bus_index(sys.gens[g].bus));
        Complex v = op.v_bus[b];
        Complex s_inj = v * std::conj(i_bus[b]);
        Complex s_gen = s_inj + Complex(pload[b], qload[b]);
        Complex i_gen = std::conj(s_gen / v);
        Complex e = v + Complex(0.0, sys.gens[g].xdp) * i_gen;
        op.emf[g] = e;
        op.delta0[g] = std::arg(e);
        op.pe0[g] = (e * std::conj(i_gen)).real();
    }
    return op;
}

// ---------------------------------------------------------------------------
// Topology states and Kron reduction
// ---------------------------------------------------------------------------

/// Mid-line three-phase fault: the line splits at `x_pct` of its length and a
/// resistive shunt is connected at the split node.
struct FaultTap {
    int line_id = 0;
    double x_pct = 50.0;
    double r_fault_ohm = 0.001;
};

struct Topology {
    std::vector<uint8_t> line_status;  // by line index, 1 = in service
    std::optional<FaultTap> fault;

    static Topology all_in_service(const PowerSystem& sys) {
        Topology t;
        t.line_status.assign(sys.lines.size(), 1);
        return t;
    }
};

/// Admittance network over the generator internal nodes after eliminating
/// every physical bus. `recovery` maps internal EMFs back to the eliminated
/// bus voltages, which is what makes load/terminal measurements possible
/// after the reduction.
struct ReducedNetwork {
    CMat y_red;                    // n_gen x n_gen
    CMat recovery;                 // n_elim x n_gen, V_elim = recovery * E
    std::vector<double> emf_mag;   // |E_i|
    std::vector<Complex> y_load;   // by eliminated-node index (0 where no load)
    std::vector<int> elim_bus_id;  // bus id per eliminated node (-1 = fault node)
    double s_rms_norm = 1.0;       // sum |S_base| at k = 1
    double loading = 1.0;
    size_t n_gen = 0;

    int elim_index_of_bus(int bus_id) const {
        for (size_t i = 0; i < elim_bus_id.size(); ++i)
            if (elim_bus_id[i] == bus_id) return int(i);
        throw ValidationError(strf("bus %d not present in reduced network", bus_id));
    }
};

/// Build the reduced admittance network for a topology state. Loads are
/// folded in as constant impedances evaluated at the prefault solved voltage,
/// generators enter behind x'd, and all physical buses are eliminated via the
/// Schur complement on the bus block.
inline ReducedNetwork build_reduced_network(const PowerSystem& sys, const Topology& topo,
                                            const OperatingPoint& op) {
    if (topo.line_status.size() != sys.lines.size())
        throw ValidationError("topology status vector does not match line count");
    const size_t nb = sys.buses.size();
    const size_t ng = sys.gens.size();
    bool has_fault_node = false;
    size_t fault_line_idx = 0;
    double fault_x = 0;
    Complex y_fault;

    if (topo.fault) {
        const FaultTap& ft = *topo.fault;
        if (ft.x_pct < 0 || ft.x_pct > 100)
            throw ValidationError("fault location must be within [0, 100] %");
        if (!(ft.r_fault_ohm > 0)) throw ValidationError("fault resistance must be positive");
        bool found = false;
        for (size_t i = 0; i < sys.lines.size(); ++i)
            if (sys.lines[i].id == ft.line_id) { fault_line_idx = i; found = true; }
        if (!found) throw ValidationError(strf("unknown line id %d", ft.line_id));
        double z_base = sys.kv_base * sys.kv_base / sys.base_mva;
        y_fault = Complex(z_base / ft.r_fault_ohm, 0.0);
        fault_x = ft.x_pct;
        // at the ends the fault node coincides with a terminal bus
        has_fault_node = fault_x > 1e-7 && fault_x < 100.0 - 1e-7;
    }

    const size_t ne = nb + (has_fault_node ? 1 : 0);  // eliminated nodes
    const size_t fault_node = nb;                     // index when present
    CMat a(ne + ng, ne + ng);

    for (size_t li = 0; li < sys.lines.size(); ++li) {
        const Line& l = sys.lines[li];
        size_t f = size_t(sys.bus_index(l.from)), t = size_t(sys.bus_index(l.to));
        bool faulted = topo.fault && li == fault_line_idx;
        if (!faulted) {
            if (!topo.line_status[li]) continue;
            Complex ys = 1.0 / Complex(l.r, l.x);
            Complex sh(0.0, l.b / 2.0);
            double ap = l.tap;
            a(f, f) += (ys + sh) / (ap * ap);
            a(t, t) += ys + sh;
            a(f, t) -= ys / ap;
            a(t, f) -= ys / ap;
        } else if (!has_fault_node) {
            // fault at a terminal: keep the full line, shunt at that bus
            size_t at = fault_x <= 1e-7 ? f : t;
            Complex ys = 1.0 / Complex(l.r, l.x);
            Complex sh(0.0, l.b / 2.0);
            double ap = l.tap;
            a(f, f) += (ys + sh) / (ap * ap);
            a(t, t) += ys + sh;
            a(f, t) -= ys / ap;
            a(t, f) -= ys / ap;
            a(at, at) += y_fault;
        } else {
            // split into two segments around the fault node; charging splits
            // proportionally, tap stays on the from side of the first segment
            double fr = fault_x / 100.0;
            Complex z(l.r, l.x);
            Complex y1 = 1.0 / (z * fr), y2 = 1.0 / (z * (1.0 - fr));
            Complex sh1(0.0, l.b * fr / 2.0), sh2(0.0, l.b * (1.0 - fr) / 2.0);
            double ap = l.tap;
            a(f, f) += (y1 + sh1) / (ap * ap);
            a(fault_node, fault_node) += y1 + sh1 + y2 + sh2 + y_fault;
            a(f, fault_node) -= y1 / ap;
            a(fault_node, f) -= y1 / ap;
            a(t, t) += y2 + sh2;
            a(t, fault_node) -= y2;  // no tap on segment 2
            a(fault_node, t) -= y2;
        }
    }

    ReducedNetwork net;
    net.n_gen = ng;
    net.loading = sys.loading;
    net.s_rms_norm = sys.base_apparent_load();
    net.y_load.assign(ne, Complex(0, 0));
    net.elim_bus_id.assign(ne, -1);
    for (size_t i = 0; i < nb; ++i) net.elim_bus_id[i] = sys.buses[i].id;

    for (const auto& ld : sys.loads) {
        size_t b = size_t(sys.bus_index(ld.bus));
        double v2 = std::norm(op.v_bus[b]);
        if (v2 <= 0) throw NumericalError(strf("zero prefault voltage at bus %d", ld.bus));
        Complex yl = std::conj(Complex(ld.p, ld.q)) / v2;
        net.y_load[b] += yl;
        a(b, b) += yl;
    }
    net.emf_mag.resize(ng);
    for (size_t g = 0; g < ng; ++g) {
        size_t b = size_t(sys.bus_index(sys.gens[g].bus));
        Complex yg = 1.0 / Complex(0.0, sys.gens[g].xdp);
        size_t gi = ne + g;
        a(gi, gi) += yg;
        a(b, b) += yg;
        a(gi, b) -= yg;
        a(b, gi) -= yg;
        net.emf_mag[g] = std::abs(op.emf[g]);
    }

    // Schur complement: Y_red = Y_gg - Y_gb Y_bb^-1 Y_bg, recovery = -Y_bb^-1 Y_bg
    CMat y_bb(ne, ne);
    for (size_t i = 0; i < ne; ++i)
        for (size_t j = 0; j < ne; ++j) y_bb(i, j) = a(i, j);
    std::vector<int> tags(ne);
    for (size_t i = 0; i < ne; ++i) tags[i] = net.elim_bus_id[i];
    auto perm = lu_factor(y_bb, &tags);

    net.recovery = CMat(ne, ng);
    for (size_t g = 0; g < ng; ++g) {
        std::vector<Complex> rhs(ne);
        for (size_t i = 0; i < ne; ++i) rhs[i] = -a(i, ne + g);
        auto col = lu_solve(y_bb, perm, rhs);
        for (size_t i = 0; i < ne; ++i) net.recovery(i, g) = col[i];
    }
    net.y_red = CMat(ng, ng);
    for (size_t gi = 0; gi < ng; ++gi)
        for (size_t gj = 0; gj < ng; ++gj) {
            Complex s = a(ne + gi, ne + gj);
            for (size_t b = 0; b < ne; ++b) s += a(ne + gi, b) * net.recovery(b, gj);
            net.y_red(gi, gj) = s;
        }
    return net;
}

/// Convenience overload: solves the prefault equilibrium itself.
inline ReducedNetwork build_reduced_network(const PowerSystem& sys, const Topology& topo) {
    return build_reduced_network(sys, topo, initialize_equilibrium(sys));
}

/// Bus voltages of the eliminated network for a rotor-angle state.
inline std::vector<Complex> recover_bus_voltages(const ReducedNetwork& net,
                                                 const std::vector<Complex>& e_int) {
    return matvec(net.recovery, e_int);
}

}  // namespace dsc::grid
