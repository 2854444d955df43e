// Acceptance suite: runs every toolkit-level criterion at its stated
// tolerance and prints one PASS/FAIL line each. Exit code = failure count.

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "dsc/cdr.hpp"
#include "dsc/cli.hpp"
#include "dsc/dataset_io.hpp"
#include "dsc/pipeline.hpp"

using namespace dsc;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Criterion {
    int id;
    std::string name;
    std::function<bool(std::string&)> run;
};

double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

struct CliRun {
    int exit_code = -1;
    std::string output;
    json summary;
};

CliRun run_cli(const std::string& args) {
    CliRun r;
    std::string cmd = std::string(DSC_CLI_BIN) + " " + args + " 2>/dev/null";
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) throw std::runtime_error("popen failed");
    char buf[4096];
    while (size_t n = fread(buf, 1, sizeof(buf), p)) r.output.append(buf, n);
    int st = pclose(p);
    r.exit_code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    auto last_nl = r.output.find_last_of('\n', r.output.size() - 2);
    std::string last =
        r.output.substr(last_nl == std::string::npos ? 0 : last_nl + 1);
    if (!last.empty() && last.front() == '{') r.summary = json::parse(last);
    return r;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

grid::PowerSystem the_system() {
    static grid::PowerSystem sys = grid::load_system(std::string(DSC_DATA_DIR) + "/ieee39");
    return sys;
}

scen::TabularWindow band_window(bool band, uint64_t seed) {
    Rng rng(seed);
    scen::TabularWindow w;
    w.data.resize(size_t(enc::kRows) * enc::kCols);
    for (int r = 0; r < enc::kRows; ++r)
        for (int c = 0; c < enc::kCols; ++c) {
            double v = rng.uniform(0.0, 0.3);
            if (band && c >= 200) v += 0.7;
            w.at(r, c) = v;
        }
    return w;
}

struct PlantedSet {
    std::vector<scen::TabularWindow> windows;
    std::vector<int> labels;
};

PlantedSet planted_dataset(size_t n, uint64_t seed) {
    PlantedSet ds;
    Rng rng(seed);
    for (size_t i = 0; i < n; ++i) {
        int lab = int(rng.next_below(2));
        ds.windows.push_back(band_window(lab == 1, split_seed(seed, i)));
        ds.labels.push_back(lab);
    }
    return ds;
}

nn::TrainConfig sanity_train_config(uint64_t seed) {
    nn::TrainConfig tc;
    tc.lr = 1e-3;  // defaults keep the published 1e-4/64; the sanity runs
    tc.batch = 4;  // need enough optimizer steps inside the runtime budget
    tc.epochs = 1;
    tc.folds = 10;
    tc.seed = seed;
    return tc;
}

// ---------------------------------------------------------------------------

bool c1_sfi_base(std::string& detail) {
    double t0 = now_s();
    CliRun r = run_cli("risk --asr 0.48");
    double dt = now_s() - t0;
    double sfi = r.summary.value("sfi", -1.0);
    detail = strf("sfi=%.4f elapsed=%.2fs", sfi, dt);
    return r.exit_code == 0 && std::fabs(sfi - 0.8751) <= 5e-4 && dt < 1.0;
}

bool c2_sfi_cdr(std::string& detail) {
    double t0 = now_s();
    CliRun r = run_cli("risk --asr 0.48 --alpha 0.7125 --beta 1.425");
    double dt = now_s() - t0;
    double sfi = r.summary.value("sfi", -1.0);
    detail = strf("sfi=%.4f elapsed=%.2fs", sfi, dt);
    return r.exit_code == 0 && std::fabs(sfi - 0.7094) <= 5e-4 && dt < 1.0;
}

bool c3_closed_form_vs_mc(std::string& detail) {
    double t0 = now_s();
    risk::LoadingBounds b;
    double lo = b.alpha * b.tau_min, hi = b.beta * b.tau_max;
    int violations = 0;
    double worst = 0;
    for (int i = 0; i < 20; ++i) {
        double r = lo + (hi - lo) * (double(i) + 0.5) / 20.0;
        double cf = risk::product_density(r, b);
        auto mc = risk::mc_density_estimate(1000000, r, b, 4242 + uint64_t(i));
        double dev = mc.stderr_ > 0 ? std::fabs(cf - mc.density) / mc.stderr_ : 0.0;
        worst = std::max(worst, dev);
        if (std::fabs(cf - mc.density) >= 3.0 * mc.stderr_ + 1e-12) ++violations;
    }
    double integral = risk::density_integral(b);
    double dt = now_s() - t0;
    detail = strf("max |cf-mc| = %.2f se, integral=%.6f, elapsed=%.1fs", worst, integral, dt);
    return violations == 0 && std::fabs(integral - 1.0) <= 1e-4 && dt < 30.0;
}

bool c4_window_identity(std::string& detail) {
    double t0 = now_s();
    auto sys = the_system();
    sim::SimConfig cfg;
    auto tr1 = sim::simulate_scenario(sys, 1.0, sim::FaultSpec{3, 50.0, 0.06, 0.001}, cfg);
    auto w1 = scen::extract_window(tr1);
    auto tr2 = sim::simulate_scenario(sys, 1.0, sim::FaultSpec{3, 50.0, 0.4, 0.001}, cfg);
    auto w2 = scen::extract_window(tr2);
    double dt = now_s() - t0;
    detail = strf("tau=0.06 -> (%d,%d), tau=0.4 -> (%d,%d), elapsed=%.2fs", w1.prefault_cols,
                  w1.fault_cols, w2.prefault_cols, w2.fault_cols, dt);
    return w1.prefault_cols == 220 && w1.fault_cols == 30 && w2.prefault_cols == 50 &&
           w2.fault_cols == 200 && dt < 1.0;
}

bool c5_simulator_soundness(std::string& detail) {
    double t0 = now_s();
    auto sys = the_system();

    // fixed-point drift
    auto op = grid::initialize_equilibrium(sys);
    auto flat = sim::simulate(sys, op, sim::FaultSpec{0, 0, 0, 0.001}, sim::SimConfig{});
    double drift = 0;
    for (size_t g = 0; g < 10; ++g)
        for (size_t s = 0; s < flat.n_samples(); ++s)
            drift = std::max(drift, std::fabs(flat.gens[g].f[sim::kDeltaDeg][s] -
                                              flat.gens[g].f[sim::kDeltaDeg][0]) /
                                        kDegPerRad);

    // RK4 order on a two-machine system
    grid::PowerSystem toy;
    toy.buses = {{1, grid::BusType::kSlack, 1.0}, {2, grid::BusType::kPv, 1.0}};
    toy.lines = {{1, 1, 2, 0.001, 0.1, 0.0, 1.0, true}};
    toy.gens = {{1, 1, 1.0, 5.0, 0.0, 0.05}, {2, 2, 0.8, 4.0, 0.0, 0.06}};
    toy.loads = {{1, 1.3, 0.2}, {2, 0.5, 0.05}};
    auto top = grid::initialize_equilibrium(toy);
    auto net = grid::build_reduced_network(toy, grid::Topology::all_in_service(toy), top);
    std::vector<double> pm = top.pe0, h2{10.0, 8.0}, d{0.0, 0.0};
    sim::SwingRhs rhs{&net, &pm, &h2, &d};
    auto integrate = [&](double h) {
        std::vector<double> y{top.delta0[0] + 0.3, top.delta0[1], 1.0, 1.0};
        std::vector<double> scratch(5 * y.size());
        long n = std::lround(0.5 / h);
        for (long i = 0; i < n; ++i) sim::rk4_step(rhs, y.data(), y.size(), h, scratch.data());
        return y;
    };
    auto ref = integrate(1.0 / 64e3);
    auto err = [&](double h) {
        auto y = integrate(h);
        double m = 0;
        for (size_t i = 0; i < y.size(); ++i) m = std::max(m, std::fabs(y[i] - ref[i]));
        return m;
    };
    double order = std::log2(err(2e-3) / err(1e-3));

    // unique clearing threshold and monotone TIS on three lines
    int lines_checked = 0;
    bool monotone = true;
    for (int line : {2, 21, 26}) {
        auto unstable = [&](double tau) {
            auto tr = sim::simulate_scenario(sys, 1.4, sim::FaultSpec{line, 50.0, tau, 0.001},
                                             sim::SimConfig{});
            return scen::label_tis(tr).tis == 1;
        };
        if (!unstable(0.4) || unstable(0.06)) continue;
        double lo = 0.06, hi = 0.4;
        for (int it = 0; it < 9; ++it) {
            double mid = 0.5 * (lo + hi);
            (unstable(mid) ? hi : lo) = mid;
        }
        ++lines_checked;
        for (int i = 1; i <= 4; ++i) {
            double below = lo - 0.02 * i, above = hi + 0.02 * i;
            if (below > 0.06 && unstable(below)) monotone = false;
            if (above < 0.4 && !unstable(above)) monotone = false;
        }
    }
    double dt = now_s() - t0;
    detail = strf("drift=%.1e rad, rk4 order=%.2f, cct lines=%d monotone=%d, elapsed=%.0fs",
                  drift, order, lines_checked, int(monotone), dt);
    return drift < 1e-3 && order >= 3.7 && lines_checked >= 3 && monotone && dt < 120.0;
}

bool c6_gradients(std::string& detail) {
    double t0 = now_s();
    // every path (conv through the pool, attention, dense, softmax-CE) at
    // dims where central differences are trustworthy
    nn::CnnAttConfig small;
    small.rows = 18;
    small.cols = 20;
    small.nf = 2;
    small.heads = 2;
    small.dk = 4;
    small.dv = 3;
    small.dropout = 0.0;
    nn::CnnAttModel<double> m(small);
    m.init(42);
    Rng rng(7);
    std::vector<double> x(size_t(small.in_ch) * small.rows * small.cols);
    for (auto& v : x) v = rng.next_double();
    auto r = nn::grad_check(m, x, 1, 200, 1e-5, 99);

    // full-size spot check on the pool-downstream parameters; perturbing a
    // convolution weight at 270x250 almost surely flips a channel-max tie
    // somewhere, so finite differences through the pool are only meaningful
    // at small dims (the analytic value is the subgradient either way)
    nn::CnnAttConfig full;
    full.dropout = 0.0;
    nn::CnnAttModel<double> mf(full);
    mf.init(5);
    std::vector<double> xf(size_t(full.in_ch) * full.rows * full.cols);
    for (auto& v : xf) v = rng.next_double();
    nn::CnnAttWorkspace<double> ws;
    std::vector<double> analytic(mf.params().size(), 0.0);
    mf.forward(xf.data(), ws);
    mf.backward(xf.data(), 0, ws, analytic.data());
    Rng pick(13);
    auto idx = nn::pick_indices(mf.layout().conv_end, mf.layout().dense_w, 6, pick);
    for (size_t i : nn::pick_indices(mf.layout().dense_w, mf.params().size(), 6, pick))
        idx.push_back(i);
    auto loss = [&]() {
        mf.forward(xf.data(), ws);
        return nn::cross_entropy(ws.probs.data(), ws.probs.size(), size_t(0));
    };
    auto rf = nn::grad_check_indices(mf.params(), analytic, loss, idx, 1e-5);

    double dt = now_s() - t0;
    detail = strf("all-path max_rel=%.2e (n=%zu), full-size attn+dense max_rel=%.2e (n=%zu), "
                  "elapsed=%.0fs",
                  r.max_rel_err, r.n_checked, rf.max_rel_err, rf.n_checked, dt);
    return r.max_rel_err < 1e-4 && r.n_checked >= 600 && rf.max_rel_err < 1e-4 && dt < 120.0;
}

bool c7_learning_sanity(std::string& detail) {
    double t0 = now_s();

    // planted vertical band, 10-fold cross-validation (fold metrics only)
    PlantedSet ds = planted_dataset(500, 20250808);
    nn::TrainConfig tc = sanity_train_config(101);
    tc.final_fit = false;
    auto res = nn::train_classifier(ds.windows, ds.labels, tc);
    double cv_acc = 0;
    for (const auto& f : res.folds) cv_acc += f.accuracy;
    cv_acc /= double(res.folds.size());

    // label-shuffled control on a single split
    std::vector<int> shuffled = ds.labels;
    Rng rng(31337);
    for (size_t i = shuffled.size(); i > 1; --i)
        std::swap(shuffled[i - 1], shuffled[rng.next_below(i)]);
    double shuffle_acc;
    {
        size_t n_tr = 400;
        std::vector<const scen::TabularWindow*> tw, wp;
        std::vector<int> tl;
        for (auto& w : ds.windows) wp.push_back(&w);
        std::vector<size_t> test_idx;
        for (size_t i = 0; i < ds.windows.size(); ++i) {
            if (i < n_tr) {
                tw.push_back(&ds.windows[i]);
                tl.push_back(shuffled[i]);
            } else {
                test_idx.push_back(i);
            }
        }
        auto stats = enc::compute_stats_ptrs(tw);
        nn::CnnAttModel<float> m{nn::CnnAttConfig{}};
        m.init(split_seed(505, 1));
        nn::TrainConfig sc = sanity_train_config(505);
        nn::ClassifierTrainer trainer(m, sc);
        trainer.run_epoch(tw, tl, stats, split_seed(505, 2), split_seed(505, 3));
        shuffle_acc =
            nn::evaluate_model_mt(trainer.model(), stats, wp, shuffled, test_idx).accuracy();
    }

    // self-generated simulator dataset: CNN-Att against the logistic baseline
    scen::BatchOptions opt;
    auto batch = scen::run_batch(the_system(), 500, 777, opt);
    io::Dataset sim_ds = io::dataset_from_batch(batch);
    auto windows = cli::detail::windows_of(sim_ds);
    std::vector<int> labels;
    for (const auto& r : sim_ds.records) labels.push_back(r.tis);
    size_t n1 = 0;
    for (int l : labels) n1 += size_t(l);
    bool both_classes = n1 > 0 && n1 < labels.size();

    double cnn_acc = 0, log_acc = 0;
    if (both_classes) {
        auto order = nn::detail::shuffled_indices(windows.size(), split_seed(909, 0));
        size_t n_tr = windows.size() * 4 / 5;
        std::vector<const scen::TabularWindow*> tw, wp;
        std::vector<int> tl;
        std::vector<size_t> test_idx;
        for (auto& w : windows) wp.push_back(&w);
        for (size_t i = 0; i < order.size(); ++i) {
            if (i < n_tr) {
                tw.push_back(wp[order[i]]);
                tl.push_back(labels[order[i]]);
            } else {
                test_idx.push_back(order[i]);
            }
        }
        auto stats = enc::compute_stats_ptrs(tw);
        nn::CnnAttModel<float> m{nn::CnnAttConfig{}};
        m.init(split_seed(909, 1));
        nn::TrainConfig sc = sanity_train_config(909);
        sc.epochs = 2;
        nn::ClassifierTrainer trainer(m, sc);
        for (int e = 0; e < sc.epochs; ++e)
            trainer.run_epoch(tw, tl, stats, split_seed(909, 100 + uint64_t(e)),
                              split_seed(909, 200 + uint64_t(e)));
        cnn_acc = nn::evaluate_model_mt(trainer.model(), stats, wp, labels, test_idx).accuracy();
        auto logistic = nn::train_logistic(tw, tl, stats, split_seed(909, 5), 30);
        log_acc = nn::evaluate_classifier(wp, labels, test_idx,
                                          [&](const scen::TabularWindow& w) {
                                              return logistic.predict(w);
                                          })
                      .accuracy();
    }

    double dt = now_s() - t0;
    detail = strf(
        "planted cv=%.3f, shuffled=%.3f, sim both_classes=%d cnn=%.3f logistic=%.3f, elapsed=%.0fs",
        cv_acc, shuffle_acc, int(both_classes), cnn_acc, log_acc, dt);
    return cv_acc >= 0.95 && std::fabs(shuffle_acc - 0.5) <= 0.1 && both_classes &&
           cnn_acc >= log_acc;
}

bool c8_wmv(std::string& detail) {
    nn::WmvEnsemble e;
    e.members = {{"a", 0.9, {}}, {"b", 0.6, {}}, {"c", 0.5, {}}};
    e.finalize();
    bool weights_ok = std::fabs(e.weights[0] - 0.45) < 1e-12 &&
                      std::fabs(e.weights[1] - 0.30) < 1e-12 &&
                      std::fabs(e.weights[2] - 0.25) < 1e-12 &&
                      std::fabs(e.weights[0] + e.weights[1] + e.weights[2] - 1.0) < 1e-12;
    bool vote_ok = nn::wmv_vote(e.weights, {1, 0, 0}) == 0;

    nn::WmvEnsemble solo;
    solo.members = {{"only", 0.7, {}}};
    solo.finalize();
    Rng rng(2);
    bool solo_ok = true;
    for (int i = 0; i < 100; ++i) {
        int v = int(rng.next_below(2));
        solo_ok = solo_ok && nn::wmv_vote(solo.weights, {v}) == v;
    }
    detail = strf("weights_ok=%d vote_ok=%d single_member_ok=%d", int(weights_ok), int(vote_ok),
                  int(solo_ok));
    return weights_ok && vote_ok && solo_ok;
}

bool c9_policy_curve(std::string& detail) {
    auto curve = cdr::evaluate_policy(0.48, risk::LoadingBounds{});
    bool decreasing = true;
    for (size_t i = 1; i < curve.size(); ++i) decreasing = decreasing && curve[i].sfi < curve[i - 1].sfi;
    detail = strf("sfi(0)=%.4f sfi(10%%)=%.4f decreasing=%d", curve.front().sfi, curve.back().sfi,
                  int(decreasing));
    return decreasing && std::fabs(curve.front().sfi - 0.875) <= 1e-3 &&
           std::fabs(curve.back().sfi - 0.513) <= 1e-3;
}

bool c10_pipeline_determinism(std::string& detail) {
    double t0 = now_s();
    fs::path base = fs::temp_directory_path() / "dsc_acceptance_c10";
    fs::remove_all(base);
    auto run_pipeline = [&](const std::string& tag) {
        fs::path dir = base / tag;
        fs::create_directories(dir);
        std::string d = dir.string();
        CliRun g = run_cli("gen --n 20 --seed 11 --out " + d);
        CliRun e = run_cli("encode --in " + d + "/dataset.dsc --out " + d + "/encoded.dsc --stats " +
                           d + "/stats.csv");
        CliRun t = run_cli("train --in " + d + "/dataset.dsc --out " + d +
                           "/model.dscm --seed 11 --folds 2 --epochs 1 --batch 4 --lr 1e-3 "
                           "--metrics " + d + "/folds.csv");
        CliRun r = run_cli("report --ds " + d + "/dataset.dsc --model " + d + "/model.dscm --out " +
                           d + "/rep --seed 11");
        return g.exit_code == 0 && e.exit_code == 0 && t.exit_code == 0 && r.exit_code == 0;
    };
    bool ok = run_pipeline("a") && run_pipeline("b");
    std::vector<std::string> files{"dataset.dsc",      "dataset.dsc.csv", "encoded.dsc",
                                   "encoded.dsc.csv",  "stats.csv",       "model.dscm",
                                   "folds.csv",        "rep/sfi_curve.csv",
                                   "rep/model_metrics.csv", "rep/kernel_anw.csv",
                                   "rep/attention_indices.csv", "rep/summary.txt"};
    std::string first_diff;
    if (ok)
        for (const auto& f : files)
            if (slurp((base / "a" / f).string()) != slurp((base / "b" / f).string())) {
                ok = false;
                first_diff = f;
                break;
            }
    double dt = now_s() - t0;
    detail = strf("%zu artifacts compared%s%s, elapsed=%.0fs", files.size(),
                  first_diff.empty() ? "" : ", first diff: ", first_diff.c_str(), dt);
    fs::remove_all(base);
    return ok;
}

bool c11_dispatch_conservation(std::string& detail) {
    auto sys = the_system();
    cdr::CdrPolicy policy;
    policy.asr = 0.48;
    policy.critical_load_buses = {3, 4, 15, 16, 20, 21, 23, 27};
    Rng rng(1234);
    bool ok = true;
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
        scen::ResilienceRecord rec;
        rec.id = uint64_t(i);
        rec.rhat = rng.uniform(0.04, 0.62);
        auto d = cdr::dispatch_dr(sys, policy, rec, rng.next_double(), rng.next_double());
        worst = std::max(worst, std::fabs(d.shed_mw - d.fraction * d.affected_mw));
        ok = ok && d.x1 + d.x2 == 1 && std::fabs(d.shed_mw - d.fraction * d.affected_mw) <= 1e-9;
    }
    detail = strf("1000 dispatches, worst |shed - f*affected| = %.1e MW", worst);
    return ok;
}

}  // namespace

int main() {
    setenv("DSC_THREADS", "2", 0);  // fixed shard count unless the caller overrides

    std::vector<Criterion> criteria{
        {1, "SFI closed form, base bounds", c1_sfi_base},
        {2, "SFI under 5% coordinated demand response", c2_sfi_cdr},
        {3, "closed form vs Monte Carlo + unit integral", c3_closed_form_vs_mc},
        {4, "feature window sample split (220/30 and 50/200)", c4_window_identity},
        {5, "simulator soundness (drift, RK4 order, clearing-time monotonicity)",
         c5_simulator_soundness},
        {6, "gradient correctness (conv, attention, dense, softmax-CE)", c6_gradients},
        {7, "learning sanity (planted band, shuffled control, simulator dataset)",
         c7_learning_sanity},
        {8, "weighted-majority-vote arithmetic", c8_wmv},
        {9, "SFI policy curve over the shed grid", c9_policy_curve},
        {10, "pipeline byte-level determinism", c10_pipeline_determinism},
        {11, "dispatch conservation and selector exclusivity", c11_dispatch_conservation},
    };

    int failures = 0;
    for (auto& c : criteria) {
        std::string detail;
        bool ok = false;
        try {
            ok = c.run(detail);
        } catch (const std::exception& ex) {
            detail = std::string("exception: ") + ex.what();
        }
        if (!ok) ++failures;
        std::printf("%s  %2d. %s (%s)\n", ok ? "PASS" : "FAIL", c.id, c.name.c_str(),
                    detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", int(criteria.size()) - failures, criteria.size());
    return failures;
}
