#pragma once

#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dsc/cdr.hpp"
#include "dsc/dataset_io.hpp"
#include "dsc/pipeline.hpp"
#include "dsc/png.hpp"

namespace dsc::cli {

using nlohmann::json;

/// Plain key=value run configuration ('#' comments). Referenced paths must
/// resolve when the file is loaded and a seed entry is mandatory.
struct RunConfig {
    std::map<std::string, std::string> kv;

    static RunConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ValidationError("cannot open config " + path);
        RunConfig cfg;
        std::string line;
        int ln = 0;
        while (std::getline(in, line)) {
            ++ln;
            std::string s = csv::trim(line);
            if (s.empty() || s[0] == '#') continue;
            auto eq = s.find('=');
            if (eq == std::string::npos)
                throw ValidationError(strf("%s:%d: expected key=value", path.c_str(), ln));
            cfg.kv[csv::trim(s.substr(0, eq))] = csv::trim(s.substr(eq + 1));
        }
        if (!cfg.kv.count("seed")) throw ValidationError(path + ": missing mandatory key 'seed'");
        for (const char* key : {"system_spec", "dataset_dir", "checkpoint_dir"}) {
            auto it = cfg.kv.find(key);
            if (it != cfg.kv.end() && !std::filesystem::exists(it->second))
                throw ValidationError(strf("%s: path for '%s' does not resolve: %s", path.c_str(),
                                           key, it->second.c_str()));
        }
        return cfg;
    }

    std::optional<std::string> get(const std::string& key) const {
        auto it = kv.find(key);
        if (it == kv.end()) return std::nullopt;
        return it->second;
    }
};

namespace detail {

inline std::string default_system_dir() {
#ifdef DSC_DATA_DIR
    return std::string(DSC_DATA_DIR) + "/ieee39";
#else
    return "data/ieee39";
#endif
}

struct StageTimer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double elapsed() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

/// Every stage ends with one machine-readable line on stdout.
inline void print_summary(const std::string& command, uint64_t seed, double elapsed,
                          const std::vector<std::string>& outputs, json extra = json::object()) {
    json j = std::move(extra);
    j["command"] = command;
    j["seed"] = seed;
    j["elapsed"] = elapsed;
    j["outputs"] = outputs;
    std::cout << j.dump() << "\n";
}

inline std::vector<int> labels_for_task(const io::Dataset& ds, const std::string& task,
                                        double asr) {
    std::vector<int> labels;
    labels.reserve(ds.records.size());
    for (const auto& r : ds.records) {
        if (task == "tis") labels.push_back(r.tis);
        else labels.push_back(cdr::label_dr_class(r.rhat, asr));
    }
    return labels;
}

inline std::vector<scen::TabularWindow> windows_of(const io::Dataset& ds) {
    std::vector<scen::TabularWindow> w;
    w.reserve(ds.records.size());
    for (size_t i = 0; i < ds.records.size(); ++i) w.push_back(ds.window(i));
    return w;
}

/// Demand-response participation target used for regressor training when no
/// measured participation exists: the resilience shortfall against the ASR,
/// scaled into the 1..10% shedding grid.
inline double dr_target(const io::DatasetRecord& r, double asr) {
    double shortfall = std::max(0.0, (asr - r.rhat) / asr);
    return std::min(0.1, 0.1 * shortfall);
}

inline std::vector<double> regressor_features(const io::DatasetRecord& r) {
    return {r.k, r.tau, r.x_pct / 100.0, r.rhat, r.r_metric, double(r.tis)};
}

inline void write_text_atomic(const std::string& path, const std::string& text) {
    io::detail::write_file_atomic(path, text);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stage implementations
// ---------------------------------------------------------------------------

struct GenArgs {
    size_t n = 100;
    uint64_t seed = 0;
    std::string out_dir;
    std::string system_dir;
    double horizon = 7.0;
    bool stratified = false;
    std::optional<double> asr;
    bool no_fault = false;
};

inline int run_gen(const GenArgs& a) {
    detail::StageTimer timer;
    if (a.n < 1) throw ValidationError("scenario count must be at least 1");
    if (a.horizon != 5.0 && a.horizon != 7.0)
        throw ValidationError("horizon must be 5 or 7 seconds");
    grid::PowerSystem sys = grid::load_system(a.system_dir);

    scen::BatchOptions opt;
    opt.sim.horizon = 7.0;  // labeling always uses the full 7 s observation
    opt.stratified = a.stratified;
    opt.no_fault = a.no_fault;
    scen::BatchResult batch = scen::run_batch(sys, a.n, a.seed, opt);

    size_t failed = 0;
    std::vector<double> rhat;
    for (const auto& r : batch.records) {
        if (!r.error.empty()) ++failed;
        else rhat.push_back(r.rhat);
    }
    if (rhat.empty()) throw NumericalError("every scenario in the batch failed");
    double asr = a.asr.value_or(risk::estimate_asr(rhat));
    for (auto& r : batch.records)
        if (r.error.empty()) r.dr_label = cdr::label_dr_class(r.rhat, asr);

    io::Dataset ds = io::dataset_from_batch(batch);
    std::string path = a.out_dir + "/dataset.dsc";
    io::write_dataset(ds, path);

    size_t unstable = 0;
    for (const auto& r : ds.records) unstable += r.tis;
    json extra;
    extra["n_records"] = ds.records.size();
    extra["n_failed"] = failed;
    extra["n_unstable"] = unstable;
    extra["asr"] = asr;
    detail::print_summary("gen", a.seed, timer.elapsed(), {path, io::sidecar_path(path)}, extra);
    return 0;
}

struct EncodeArgs {
    std::string in_path, out_path;
    std::string png_dir;
    std::string stats_path;
    uint64_t seed = 0;
    size_t png_limit = 8;
};

inline int run_encode(const EncodeArgs& a) {
    detail::StageTimer timer;
    io::Dataset in = io::read_dataset(a.in_path);
    if (in.channels != 1) throw ValidationError("encode expects a raw (1-channel) dataset");
    auto windows = detail::windows_of(in);
    enc::RowStats stats = enc::compute_stats(windows);

    io::Dataset out;
    out.channels = 5;
    out.records = in.records;
    out.payloads.reserve(windows.size());
    for (const auto& w : windows) {
        enc::FeatureVolume v = enc::build_volume(w, stats);
        out.payloads.push_back(std::move(v.data));
    }
    io::write_dataset(out, a.out_path);
    std::vector<std::string> outputs{a.out_path, io::sidecar_path(a.out_path)};

    if (!a.stats_path.empty()) {
        std::string txt = "row,min,max\n";
        for (size_t r = 0; r < stats.min.size(); ++r)
            txt += std::to_string(r) + "," + csv::fnum(stats.min[r]) + "," +
                   csv::fnum(stats.max[r]) + "\n";
        detail::write_text_atomic(a.stats_path, txt);
        outputs.push_back(a.stats_path);
    }
    if (!a.png_dir.empty()) {
        std::filesystem::create_directories(a.png_dir);
        size_t count = std::min(a.png_limit, windows.size());
        for (size_t i = 0; i < count; ++i) {
            enc::IntensityMap m = enc::build_intensity_map(windows[i], stats);
            std::string p = a.png_dir + strf("/scenario_%06llu.png",
                                             (unsigned long long)in.records[i].id);
            png::write_intensity_map(p, m);
            outputs.push_back(p);
        }
    }
    json extra;
    extra["n_records"] = out.records.size();
    detail::print_summary("encode", a.seed, timer.elapsed(), outputs, extra);
    return 0;
}

struct TrainArgs {
    std::string in_path, out_path, metrics_path;
    std::string task = "tis";  // tis | dr | dr-regress
    nn::TrainConfig cfg;
    std::optional<double> asr;
};

inline void write_fold_metrics_csv(const std::vector<nn::FoldMetrics>& folds,
                                   const std::string& path) {
    std::string txt = "fold,accuracy,precision,recall,n_val,train_loss\n";
    for (const auto& f : folds)
        txt += std::to_string(f.fold) + "," + csv::fnum(f.accuracy) + "," +
               csv::fnum(f.precision) + "," + csv::fnum(f.recall) + "," + std::to_string(f.n_val) +
               "," + csv::fnum(f.train_loss) + "\n";
    detail::write_text_atomic(path, txt);
}

inline int run_train(const TrainArgs& a) {
    detail::StageTimer timer;
    io::Dataset ds = io::read_dataset(a.in_path);
    if (ds.channels != 1) throw ValidationError("train expects a raw (1-channel) dataset");
    if (ds.records.empty()) throw ValidationError("dataset is empty");
    double asr = a.asr.value_or(0.48);
    json extra;
    std::vector<std::string> outputs;

    if (a.task == "dr-regress") {
        // held-out RMSE on an 80/20 split, then a full-data fit
        std::vector<std::vector<double>> features;
        std::vector<double> targets;
        for (const auto& r : ds.records) {
            features.push_back(detail::regressor_features(r));
            targets.push_back(detail::dr_target(r, asr));
        }
        auto order = nn::detail::shuffled_indices(features.size(), split_seed(a.cfg.seed, 0xAB));
        size_t n_test = std::max<size_t>(1, features.size() / 5);
        nn::RegressorModel<double> model{nn::RegressorConfig{}};
        model.init(split_seed(a.cfg.seed, 1));
        nn::Adam<double> adam(model.params().size(), a.cfg.lr > 0 ? 1e-3 : 1e-3);
        nn::RegressorWorkspace<double> ws;
        std::vector<double> grad(model.params().size());
        for (int e = 0; e < std::max(1, a.cfg.epochs); ++e)
            for (size_t i = n_test; i < order.size(); ++i) {
                std::fill(grad.begin(), grad.end(), 0.0);
                model.forward(features[order[i]].data(), ws);
                model.backward(targets[order[i]], ws, grad.data());
                adam.step(model.params().data(), grad.data());
            }
        double se = 0;
        for (size_t i = 0; i < n_test; ++i) {
            double y = model.forward(features[order[i]].data(), ws);
            se += (y - targets[order[i]]) * (y - targets[order[i]]);
        }
        double rmse = std::sqrt(se / double(n_test));
        io::save_regressor(model, a.out_path);
        outputs.push_back(a.out_path);
        extra["rmse"] = rmse;
        extra["n_test"] = n_test;
    } else {
        auto windows = detail::windows_of(ds);
        auto labels = detail::labels_for_task(ds, a.task, asr);
        nn::ClassifierResult res = nn::train_classifier(windows, labels, a.cfg);
        io::save_cnn_att(res.model, res.stats, a.out_path);
        outputs.push_back(a.out_path);
        if (!a.metrics_path.empty()) {
            write_fold_metrics_csv(res.folds, a.metrics_path);
            outputs.push_back(a.metrics_path);
        }
        double mean_acc = 0;
        for (const auto& f : res.folds) mean_acc += f.accuracy;
        if (!res.folds.empty()) mean_acc /= double(res.folds.size());
        extra["cv_accuracy"] = mean_acc;
        extra["folds"] = res.folds.size();
        if (!res.epoch_loss.empty()) extra["final_loss"] = res.epoch_loss.back();
        if (a.task != "tis") extra["asr"] = asr;
    }
    detail::print_summary("train", a.cfg.seed, timer.elapsed(), outputs, extra);
    return 0;
}

struct FinetuneArgs {
    std::string in_path, model_path, out_path, metrics_path;
    nn::TrainConfig cfg;
    double asr = 0.48;
};

inline int run_finetune(const FinetuneArgs& a) {
    detail::StageTimer timer;
    io::Dataset ds = io::read_dataset(a.in_path);
    if (ds.channels != 1) throw ValidationError("finetune expects a raw (1-channel) dataset");
    io::LoadedCnnAtt base = io::load_cnn_att(a.model_path);
    auto windows = detail::windows_of(ds);
    auto labels = detail::labels_for_task(ds, "dr", a.asr);
    nn::ClassifierResult res = nn::fine_tune(base.model, base.stats, windows, labels, a.cfg);
    io::save_cnn_att(res.model, res.stats, a.out_path);

    // training-set metrics of the tuned head
    std::vector<const scen::TabularWindow*> wp;
    for (auto& w : windows) wp.push_back(&w);
    std::vector<size_t> all(windows.size());
    for (size_t i = 0; i < all.size(); ++i) all[i] = i;
    nn::CnnAttWorkspace<float> ws;
    auto ec = nn::evaluate_classifier(wp, labels, all, [&](const scen::TabularWindow& w) {
        return nn::predict_class(res.model, w, res.stats, ws);
    });
    json extra;
    extra["accuracy"] = ec.accuracy();
    extra["asr"] = a.asr;
    detail::print_summary("finetune", a.cfg.seed, timer.elapsed(), {a.out_path}, extra);
    return 0;
}

struct EvalArgs {
    std::string in_path, model_path;
    std::string task = "tis";
    bool wmv = false;
    uint64_t seed = 0;
    double asr = 0.48;
};

inline int run_eval(const EvalArgs& a) {
    detail::StageTimer timer;
    io::Dataset ds = io::read_dataset(a.in_path);
    if (ds.channels != 1) throw ValidationError("eval expects a raw (1-channel) dataset");
    io::LoadedCnnAtt m = io::load_cnn_att(a.model_path);
    auto windows = detail::windows_of(ds);
    auto labels = detail::labels_for_task(ds, a.task, a.asr);
    std::vector<const scen::TabularWindow*> wp;
    for (auto& w : windows) wp.push_back(&w);

    json extra;
    if (!a.wmv) {
        std::vector<size_t> all(windows.size());
        for (size_t i = 0; i < all.size(); ++i) all[i] = i;
        nn::CnnAttWorkspace<float> ws;
        auto ec = nn::evaluate_classifier(wp, labels, all, [&](const scen::TabularWindow& w) {
            return nn::predict_class(m.model, w, m.stats, ws);
        });
        extra["accuracy"] = ec.accuracy();
        extra["precision"] = ec.precision();
        extra["recall"] = ec.recall();
        extra["n"] = ec.total;
    } else {
        // 60/20/20 member-fit / precision / test split
        auto order = nn::detail::shuffled_indices(windows.size(), split_seed(a.seed, 0xE));
        size_t n = order.size();
        size_t n_fit = n * 3 / 5, n_val = n / 5;
        if (n_fit == 0 || n_val == 0 || n_fit + n_val >= n)
            throw ValidationError("dataset too small for the WMV split");
        std::vector<const scen::TabularWindow*> fit_w;
        std::vector<int> fit_l;
        for (size_t i = 0; i < n_fit; ++i) {
            fit_w.push_back(wp[order[i]]);
            fit_l.push_back(labels[order[i]]);
        }
        std::vector<size_t> val_idx(order.begin() + long(n_fit), order.begin() + long(n_fit + n_val));
        std::vector<size_t> test_idx(order.begin() + long(n_fit + n_val), order.end());

        auto logistic = nn::train_logistic(fit_w, fit_l, m.stats, split_seed(a.seed, 0xF), 10);
        auto centroid = nn::train_centroid(fit_w, fit_l, m.stats);
        nn::CnnAttWorkspace<float> ws;
        auto cnn_pred = [&](const scen::TabularWindow& w) {
            return nn::predict_class(m.model, w, m.stats, ws);
        };
        auto log_pred = [&](const scen::TabularWindow& w) { return logistic.predict(w); };
        auto cen_pred = [&](const scen::TabularWindow& w) { return centroid.predict(w); };

        nn::WmvEnsemble ens;
        ens.members.push_back(
            {"cnn_att", nn::evaluate_classifier(wp, labels, val_idx, cnn_pred).precision(), {}});
        ens.members.push_back(
            {"logistic", nn::evaluate_classifier(wp, labels, val_idx, log_pred).precision(), {}});
        ens.members.push_back(
            {"centroid", nn::evaluate_classifier(wp, labels, val_idx, cen_pred).precision(), {}});
        ens.finalize();

        auto wmv_predict_w = [&](const scen::TabularWindow& w) {
            std::vector<int> votes{cnn_pred(w), log_pred(w), cen_pred(w)};
            return nn::wmv_vote(ens.weights, votes);
        };
        auto ec = nn::evaluate_classifier(wp, labels, test_idx, wmv_predict_w);
        auto ec_cnn = nn::evaluate_classifier(wp, labels, test_idx, cnn_pred);
        extra["wmv_accuracy"] = ec.accuracy();
        extra["cnn_accuracy"] = ec_cnn.accuracy();
        extra["weights"] = ens.weights;
        extra["precisions"] = {ens.members[0].precision, ens.members[1].precision,
                               ens.members[2].precision};
        extra["n_test"] = test_idx.size();
    }
    detail::print_summary("eval", a.seed, timer.elapsed(), {}, extra);
    return 0;
}

struct RiskArgs {
    double asr = 0.48;
    double alpha = 0.75, beta = 1.5;
    int grid = 20;
    size_t mc_samples = 0;
    uint64_t seed = 0;
    std::string out_path;
    size_t estimate_asr_n = 0;
};

inline int run_risk(const RiskArgs& a) {
    detail::StageTimer timer;
    risk::LoadingBounds b;
    b.alpha = a.alpha;
    b.beta = a.beta;
    b.validate();
    if (!(a.asr > 0)) throw ValidationError("ASR must be positive");

    std::string table = "r,closed_form,mc_estimate,mc_stderr\n";
    double lo = b.alpha * b.tau_min, hi = b.beta * b.tau_max;
    for (int i = 0; i < a.grid; ++i) {
        double r = lo + (hi - lo) * (double(i) + 0.5) / double(a.grid);
        double cf = risk::product_density(r, b);
        std::string mc = "", se = "";
        if (a.mc_samples > 0) {
            auto est = risk::mc_density_estimate(a.mc_samples, r, b, split_seed(a.seed, uint64_t(i)));
            mc = csv::fnum(est.density);
            se = csv::fnum(est.stderr_);
        }
        table += csv::fnum(r) + "," + csv::fnum(cf) + "," + mc + "," + se + "\n";
    }
    std::vector<std::string> outputs;
    if (!a.out_path.empty()) {
        detail::write_text_atomic(a.out_path, table);
        outputs.push_back(a.out_path);
    } else {
        std::cout << table;
    }

    json extra;
    extra["sfi"] = risk::sfi(a.asr, b);
    extra["asr"] = a.asr;
    extra["alpha"] = b.alpha;
    extra["beta"] = b.beta;
    extra["density_integral"] = risk::density_integral(b);
    if (a.estimate_asr_n > 0) {
        auto rhat = scen::sample_rhat(a.estimate_asr_n, a.seed, true);
        extra["asr_estimate"] = risk::estimate_asr(rhat);
        extra["asr_samples"] = a.estimate_asr_n;
    }
    detail::print_summary("risk", a.seed, timer.elapsed(), outputs, extra);
    return 0;
}

struct CdrArgs {
    std::string system_dir;
    std::string out_prefix;
    double asr = 0.48;
    int target_count = 30;
    uint64_t seed = 0;
    double dr1 = 0.05, dr2 = 0.05;
    size_t dispatch_n = 0;  // optional demonstration dispatches
};

inline int run_cdr(const CdrArgs& a) {
    detail::StageTimer timer;
    grid::PowerSystem sys = grid::load_system(a.system_dir);
    cdr::ScreenOptions sopt;
    sopt.target_count = a.target_count;
    cdr::CdrPolicy policy = cdr::screen_critical(sys, sopt);
    policy.asr = a.asr;

    std::string screen_csv = "line,tis,lambda_max_deg,failed\n";
    for (const auto& r : policy.screen)
        screen_csv += std::to_string(r.line) + "," + std::to_string(r.tis) + "," +
                      csv::fnum(r.lambda_max) + "," + (r.failed ? "1" : "0") + "\n";
    std::string policy_csv = "kind,value\n";
    for (int l : policy.critical_lines) policy_csv += "critical_line," + std::to_string(l) + "\n";
    for (int b : policy.critical_load_buses)
        policy_csv += "critical_load_bus," + std::to_string(b) + "\n";

    auto curve = cdr::evaluate_policy(a.asr, risk::LoadingBounds{});
    std::string curve_csv = "shed_pct,alpha,beta,sfi\n";
    for (const auto& p : curve)
        curve_csv += csv::fnum(p.shed * 100) + "," + csv::fnum(p.alpha) + "," +
                     csv::fnum(p.beta) + "," + csv::fnum(p.sfi) + "\n";

    std::string p1 = a.out_prefix + "_screen.csv";
    std::string p2 = a.out_prefix + "_policy.csv";
    std::string p3 = a.out_prefix + "_sfi_curve.csv";
    detail::write_text_atomic(p1, screen_csv);
    detail::write_text_atomic(p2, policy_csv);
    detail::write_text_atomic(p3, curve_csv);

    size_t unstable = 0;
    for (const auto& r : policy.screen) unstable += r.tis;
    std::string summary;
    summary += "N-1 dynamic screening of " + std::to_string(policy.screen.size()) + " lines\n";
    summary += "unstable lines: " + std::to_string(unstable) + "\n";
    summary += "critical lines (" + std::to_string(policy.critical_lines.size()) + "):";
    for (int l : policy.critical_lines) summary += " " + std::to_string(l);
    summary += "\ncritical load buses:";
    for (int b : policy.critical_load_buses) summary += " " + std::to_string(b);
    summary += "\nSFI at ASR " + csv::fnum(a.asr) + ": base " + csv::fnum(curve.front().sfi) +
               ", 5% shed " + csv::fnum(curve[5].sfi) + ", 10% shed " + csv::fnum(curve.back().sfi) +
               "\n";
    std::string p4 = a.out_prefix + "_summary.txt";
    detail::write_text_atomic(p4, summary);
    std::cout << summary;

    json extra;
    extra["n_unstable"] = unstable;
    extra["n_critical"] = policy.critical_lines.size();
    extra["sfi_base"] = curve.front().sfi;
    extra["sfi_5pct"] = curve[5].sfi;
    detail::print_summary("cdr", a.seed, timer.elapsed(), {p1, p2, p3, p4}, extra);
    return 0;
}

struct ReportArgs {
    std::string ds_path;
    std::string model_path;     // optional
    std::string fold_metrics;   // optional CSV from the train stage
    std::string out_dir;
    uint64_t seed = 0;
    double asr = 0.48;
    size_t png_limit = 8;
};

inline int run_report(const ReportArgs& a) {
    detail::StageTimer timer;
    io::Dataset ds = io::read_dataset(a.ds_path);
    if (ds.channels != 1) throw ValidationError("report expects a raw (1-channel) dataset");
    std::filesystem::create_directories(a.out_dir);
    std::vector<std::string> outputs;
    std::string summary;
    summary += "records: " + std::to_string(ds.records.size()) + "\n";

    // risk section is always available
    auto curve = cdr::evaluate_policy(a.asr, risk::LoadingBounds{});
    std::string curve_csv = "shed_pct,alpha,beta,sfi\n";
    for (const auto& p : curve)
        curve_csv += csv::fnum(p.shed * 100) + "," + csv::fnum(p.alpha) + "," +
                     csv::fnum(p.beta) + "," + csv::fnum(p.sfi) + "\n";
    std::string sfi_path = a.out_dir + "/sfi_curve.csv";
    detail::write_text_atomic(sfi_path, curve_csv);
    outputs.push_back(sfi_path);
    summary += "sfi: base " + csv::fnum(curve.front().sfi) + " -> 10% shed " +
               csv::fnum(curve.back().sfi) + " at ASR " + csv::fnum(a.asr) + "\n";

    if (!a.fold_metrics.empty()) {
        std::string p = a.out_dir + "/fold_metrics.csv";
        detail::write_text_atomic(p, io::detail::read_all(a.fold_metrics));
        outputs.push_back(p);
    }

    bool have_model = !a.model_path.empty();
    if (have_model) {
        io::LoadedCnnAtt m = io::load_cnn_att(a.model_path);
        auto windows = detail::windows_of(ds);
        std::vector<const scen::TabularWindow*> wp;
        for (auto& w : windows) wp.push_back(&w);

        // model metrics over the dataset
        auto labels = detail::labels_for_task(ds, "tis", a.asr);
        std::vector<size_t> all(windows.size());
        for (size_t i = 0; i < all.size(); ++i) all[i] = i;
        nn::CnnAttWorkspace<float> ws;
        auto ec = nn::evaluate_classifier(wp, labels, all, [&](const scen::TabularWindow& w) {
            return nn::predict_class(m.model, w, m.stats, ws);
        });
        std::string metrics_csv = "metric,value\naccuracy," + csv::fnum(ec.accuracy()) +
                                  "\nprecision," + csv::fnum(ec.precision()) + "\nrecall," +
                                  csv::fnum(ec.recall()) + "\nn," + std::to_string(ec.total) + "\n";
        std::string metrics_path = a.out_dir + "/model_metrics.csv";
        detail::write_text_atomic(metrics_path, metrics_csv);
        outputs.push_back(metrics_path);
        summary += "model accuracy on dataset: " + csv::fnum(ec.accuracy()) + "\n";

        // interpretability tables
        auto itp = nn::interpret(m.model, m.stats, wp);
        std::string anw_csv = "kernel,anw\n";
        for (size_t b = 0; b < itp.kernel_anw.size(); ++b) {
            int k = m.model.config().kernels[b];
            anw_csv += std::to_string(k) + "x" + std::to_string(k) + "," +
                       csv::fnum(itp.kernel_anw[b]) + "\n";
        }
        std::string anw_path = a.out_dir + "/kernel_anw.csv";
        detail::write_text_atomic(anw_path, anw_csv);
        outputs.push_back(anw_path);

        std::string attn_csv = "head,first_index,second_index\n";
        for (size_t h = 0; h < itp.head_top_indices.size(); ++h)
            attn_csv += "A" + std::to_string(h + 1) + "," +
                        std::to_string(itp.head_top_indices[h][0]) + "," +
                        std::to_string(itp.head_top_indices[h][1]) + "\n";
        std::string attn_path = a.out_dir + "/attention_indices.csv";
        detail::write_text_atomic(attn_path, attn_csv);
        outputs.push_back(attn_path);

        // intensity maps for visual inspection
        size_t count = std::min(a.png_limit, windows.size());
        for (size_t i = 0; i < count; ++i) {
            enc::IntensityMap im = enc::build_intensity_map(windows[i], m.stats);
            std::string p = a.out_dir + strf("/scenario_%06llu.png",
                                             (unsigned long long)ds.records[i].id);
            png::write_intensity_map(p, im);
            outputs.push_back(p);
        }
    } else {
        summary += "warning: no model supplied; risk/CDR sections only\n";
    }

    std::string sum_path = a.out_dir + "/summary.txt";
    detail::write_text_atomic(sum_path, summary);
    outputs.push_back(sum_path);

    json extra;
    extra["have_model"] = have_model;
    detail::print_summary("report", a.seed, timer.elapsed(), outputs, extra);
    return 0;
}

// ---------------------------------------------------------------------------
// Argument wiring
// ---------------------------------------------------------------------------

inline int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"dynamic-security-control toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "key=value run configuration");

    GenArgs gen;
    auto* cmd_gen = app.add_subcommand("gen", "simulate fault scenarios into a dataset");
    cmd_gen->add_option("--n", gen.n, "scenario count");
    auto* gen_seed = cmd_gen->add_option("--seed", gen.seed, "master seed");
    cmd_gen->add_option("--out", gen.out_dir, "output directory")->required();
    cmd_gen->add_option("--system", gen.system_dir, "system spec directory");
    cmd_gen->add_option("--horizon", gen.horizon, "monitoring horizon (5 or 7 s)");
    cmd_gen->add_flag("--stratified", gen.stratified, "equal scenario counts per line");
    cmd_gen->add_flag("--no-fault", gen.no_fault, "base-case batch without faults");
    double gen_asr = -1;
    cmd_gen->add_option("--asr", gen_asr, "ASR override for DR labels");

    EncodeArgs enc_args;
    auto* cmd_enc = app.add_subcommand("encode", "build blurred-colormap volumes");
    cmd_enc->add_option("--in", enc_args.in_path, "raw dataset")->required();
    cmd_enc->add_option("--out", enc_args.out_path, "encoded dataset")->required();
    cmd_enc->add_option("--png", enc_args.png_dir, "directory for intensity-map PNGs");
    cmd_enc->add_option("--png-limit", enc_args.png_limit, "max PNG exports");
    cmd_enc->add_option("--stats", enc_args.stats_path, "write normalization stats CSV");
    cmd_enc->add_option("--seed", enc_args.seed, "seed (recorded in the summary)");

    TrainArgs train;
    auto* cmd_train = app.add_subcommand("train", "train the classifier or regressor");
    cmd_train->add_option("--in", train.in_path, "raw dataset")->required();
    cmd_train->add_option("--out", train.out_path, "model checkpoint")->required();
    cmd_train->add_option("--task", train.task, "tis | dr | dr-regress");
    cmd_train->add_option("--metrics", train.metrics_path, "fold metrics CSV");
    auto* train_seed = cmd_train->add_option("--seed", train.cfg.seed, "master seed");
    cmd_train->add_option("--folds", train.cfg.folds, "cross-validation folds");
    cmd_train->add_option("--epochs", train.cfg.epochs, "training epochs");
    cmd_train->add_option("--batch", train.cfg.batch, "batch size");
    cmd_train->add_option("--lr", train.cfg.lr, "learning rate");
    double train_asr = -1;
    cmd_train->add_option("--asr", train_asr, "ASR for DR labels");

    FinetuneArgs ft;
    auto* cmd_ft = app.add_subcommand("finetune", "transfer-learn the DR classifier");
    cmd_ft->add_option("--in", ft.in_path, "raw dataset")->required();
    cmd_ft->add_option("--model", ft.model_path, "pretrained checkpoint")->required();
    cmd_ft->add_option("--out", ft.out_path, "tuned checkpoint")->required();
    auto* ft_seed = cmd_ft->add_option("--seed", ft.cfg.seed, "master seed");
    cmd_ft->add_option("--epochs", ft.cfg.epochs, "training epochs");
    cmd_ft->add_option("--batch", ft.cfg.batch, "batch size");
    cmd_ft->add_option("--lr", ft.cfg.lr, "learning rate");
    cmd_ft->add_option("--asr", ft.asr, "ASR for DR labels");

    EvalArgs ev;
    auto* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint");
    cmd_eval->add_option("--in", ev.in_path, "raw dataset")->required();
    cmd_eval->add_option("--model", ev.model_path, "model checkpoint")->required();
    cmd_eval->add_option("--task", ev.task, "tis | dr");
    cmd_eval->add_flag("--wmv", ev.wmv, "weighted-majority-vote ensemble evaluation");
    cmd_eval->add_option("--seed", ev.seed, "split seed");
    cmd_eval->add_option("--asr", ev.asr, "ASR for DR labels");

    RiskArgs rk;
    auto* cmd_risk = app.add_subcommand("risk", "SFI closed form and Monte Carlo table");
    cmd_risk->add_option("--asr", rk.asr, "average system resilience")->required();
    cmd_risk->add_option("--alpha", rk.alpha, "loading lower bound");
    cmd_risk->add_option("--beta", rk.beta, "loading upper bound");
    cmd_risk->add_option("--grid", rk.grid, "table grid points");
    cmd_risk->add_option("--mc", rk.mc_samples, "Monte Carlo samples per point");
    cmd_risk->add_option("--seed", rk.seed, "Monte Carlo seed");
    cmd_risk->add_option("--out", rk.out_path, "write the table to a file");
    cmd_risk->add_option("--estimate-asr", rk.estimate_asr_n,
                         "also estimate the ASR from sampled scenarios");

    CdrArgs cd;
    auto* cmd_cdr = app.add_subcommand("cdr", "screen critical lines and evaluate the policy");
    cmd_cdr->add_option("--system", cd.system_dir, "system spec directory");
    cmd_cdr->add_option("--out", cd.out_prefix, "output file prefix")->required();
    cmd_cdr->add_option("--asr", cd.asr, "ASR threshold");
    cmd_cdr->add_option("--target", cd.target_count, "critical line count");
    cmd_cdr->add_option("--seed", cd.seed, "seed (recorded in the summary)");

    ReportArgs rp;
    auto* cmd_rep = app.add_subcommand("report", "render the report bundle");
    cmd_rep->add_option("--ds", rp.ds_path, "raw dataset")->required();
    cmd_rep->add_option("--model", rp.model_path, "model checkpoint (optional)");
    cmd_rep->add_option("--fold-metrics", rp.fold_metrics, "fold metrics CSV to include");
    cmd_rep->add_option("--out", rp.out_dir, "output directory")->required();
    cmd_rep->add_option("--seed", rp.seed, "seed (recorded in the summary)");
    cmd_rep->add_option("--asr", rp.asr, "ASR for the risk section");
    cmd_rep->add_option("--png-limit", rp.png_limit, "max PNG exports");

    for (auto* sc : app.get_subcommands(nullptr)) sc->fallthrough();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ExtrasError& e) {
        std::cerr << app.help() << "\n";
        std::cerr << "error: " << e.what() << "\n";
        return 64;
    } catch (const CLI::ParseError& e) {
        if (app.get_subcommands().empty()) {
            std::cerr << app.help() << "\n";
            std::cerr << "error: " << e.what() << "\n";
            return 64;
        }
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) cfg = RunConfig::load(config_path);
        auto cfg_u64 = [&](const char* key, uint64_t& dst, bool provided) {
            if (provided) return;
            if (auto v = cfg.get(key)) dst = std::stoull(*v);
        };

        if (app.got_subcommand(cmd_gen)) {
            cfg_u64("seed", gen.seed, gen_seed->count() > 0);
            if (gen_seed->count() == 0 && !cfg.get("seed"))
                throw ValidationError("gen requires --seed (or a config with one)");
            if (gen.system_dir.empty())
                gen.system_dir = cfg.get("system_spec").value_or(detail::default_system_dir());
            if (auto v = cfg.get("scenario_count"); v && cmd_gen->count("--n") == 0)
                gen.n = std::stoull(*v);
            if (auto v = cfg.get("horizon"); v && cmd_gen->count("--horizon") == 0)
                gen.horizon = std::stod(*v);
            if (gen_asr >= 0) gen.asr = gen_asr;
            else if (auto v = cfg.get("asr")) gen.asr = std::stod(*v);
            return run_gen(gen);
        }
        if (app.got_subcommand(cmd_enc)) return run_encode(enc_args);
        if (app.got_subcommand(cmd_train)) {
            cfg_u64("seed", train.cfg.seed, train_seed->count() > 0);
            if (train_seed->count() == 0 && !cfg.get("seed"))
                throw ValidationError("train requires --seed (or a config with one)");
            if (auto v = cfg.get("batch_size"); v && cmd_train->count("--batch") == 0)
                train.cfg.batch = std::stoi(*v);
            if (train_asr >= 0) train.asr = train_asr;
            return run_train(train);
        }
        if (app.got_subcommand(cmd_ft)) {
            cfg_u64("seed", ft.cfg.seed, ft_seed->count() > 0);
            if (ft_seed->count() == 0 && !cfg.get("seed"))
                throw ValidationError("finetune requires --seed (or a config with one)");
            return run_finetune(ft);
        }
        if (app.got_subcommand(cmd_eval)) return run_eval(ev);
        if (app.got_subcommand(cmd_risk)) return run_risk(rk);
        if (app.got_subcommand(cmd_cdr)) {
            if (cd.system_dir.empty())
                cd.system_dir = cfg.get("system_spec").value_or(detail::default_system_dir());
            return run_cdr(cd);
        }
        if (app.got_subcommand(cmd_rep)) return run_report(rp);
        std::cerr << app.help() << "\n";
        return 64;
    } catch (const ValidationError& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 2;
    }
}

}  // namespace dsc::cli
