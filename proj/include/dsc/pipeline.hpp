#pragma once

#include <atomic>
#include <barrier>
#include <functional>
#include <mutex>
#include <thread>

#include "dsc/encoder.hpp"
#include "dsc/nn_cnn_att.hpp"
#include "dsc/nn_regressor.hpp"

namespace dsc::nn {

using enc::FeatureVolume;
using enc::RowStats;
using scen::TabularWindow;

struct TrainConfig {
    double lr = 1e-4;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int batch = 64;
    double dropout = 0.2;
    int folds = 10;
    int epochs = 2;
    uint64_t seed = 0;
    int threads = 0;        // 0 = DSC_THREADS or hardware
    bool final_fit = true;  // refit on all data after cross-validation

    void validate() const {
        if (!(lr > 0)) throw ValidationError("learning rate must be positive");
        if (folds < 2) throw ValidationError("need at least 2 folds");
        if (batch < 1 || epochs < 0) throw ValidationError("invalid batch/epoch counts");
    }
};

struct FoldMetrics {
    int fold = 0;
    double accuracy = 0, precision = 0, recall = 0;
    size_t n_val = 0;
    double train_loss = 0;  // mean cross-entropy of the last epoch
};

struct ClassifierResult {
    CnnAttModel<float> model;
    RowStats stats;
    std::vector<FoldMetrics> folds;
    std::vector<double> epoch_loss;  // final full-data training
};

namespace detail {

inline std::vector<size_t> shuffled_indices(size_t n, uint64_t seed) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(seed);
    for (size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.next_below(i)]);
    return idx;
}

struct Split {
    std::vector<size_t> train, val;
};

inline Split fold_split(const std::vector<size_t>& order, int fold, int folds) {
    Split s;
    const size_t n = order.size();
    for (size_t i = 0; i < n; ++i) {
        if (int(i % size_t(folds)) == fold) s.val.push_back(order[i]);
        else s.train.push_back(order[i]);
    }
    return s;
}

}  // namespace detail

/// One SGD pass machinery shared by training and fine-tuning. Batches are
/// processed by a fixed number of shards; each shard accumulates its sample
/// gradients in index order and shards are reduced in shard order, so results
/// are bit-stable for a given (seed, shard count).
class ClassifierTrainer {
public:
    ClassifierTrainer(const CnnAttModel<float>& model, const TrainConfig& cfg, size_t freeze_below = 0)
        : model_(model),
          cfg_(cfg),
          freeze_below_(freeze_below),
          adam_(model.params().size(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps) {
        cfg_.validate();
        n_shards_ = size_t(scen::resolve_threads(cfg.threads));
    }

    CnnAttModel<float>& model() { return model_; }
    const CnnAttModel<float>& model() const { return model_; }

    /// Decay or raise the learning rate between epochs; moments persist.
    void set_lr(double lr) { adam_.set_lr(lr); }

    /// Runs one epoch over the listed samples; returns the mean training
    /// loss. Shard threads persist across the whole epoch and synchronize on
    /// a barrier whose completion step performs the deterministic shard-order
    /// reduction and the Adam update.
    double run_epoch(const std::vector<const TabularWindow*>& windows,
                     const std::vector<int>& labels, const RowStats& stats, uint64_t order_seed,
                     uint64_t dropout_stream) {
        const size_t n = windows.size();
        auto order = detail::shuffled_indices(n, order_seed);
        const size_t psize = model_.params().size();
        std::vector<std::vector<float>> shard_grads(n_shards_, std::vector<float>(psize, 0.f));
        std::vector<double> shard_loss(n_shards_, 0.0);
        std::vector<float> grad(psize, 0.f);
        double total_loss = 0;
        size_t total_count = 0;
        size_t cur_start = 0;
        std::exception_ptr first_error;
        std::mutex error_mu;

        auto process_shard = [&](size_t shard, size_t start, size_t bsz, CnnAttWorkspace<float>& ws,
                                 std::vector<float>& x) {
            try {
                for (size_t b = shard; b < bsz; b += n_shards_) {
                    size_t si = order[start + b];
                    encode_input(*windows[si], stats, x);
                    uint64_t dseed = split_seed(dropout_stream, si);
                    model_.forward(x.data(), ws, cfg_.dropout > 0, dseed);
                    shard_loss[shard] +=
                        cross_entropy(ws.probs.data(), ws.probs.size(), size_t(labels[si]));
                    model_.backward(x.data(), size_t(labels[si]), ws, shard_grads[shard].data(),
                                    1.0f / float(bsz));
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!first_error) first_error = std::current_exception();
            }
        };
        auto reduce_and_step = [&]() noexcept {
            const size_t bsz = std::min(size_t(cfg_.batch), n - cur_start);
            std::fill(grad.begin(), grad.end(), 0.f);
            for (size_t s = 0; s < n_shards_; ++s) {
                const auto& g = shard_grads[s];
                for (size_t i = freeze_below_; i < psize; ++i) grad[i] += g[i];
                total_loss += shard_loss[s];
                shard_loss[s] = 0.0;
                std::fill(shard_grads[s].begin(), shard_grads[s].end(), 0.f);
            }
            total_count += bsz;
            adam_.step(model_.params().data(), grad.data(), freeze_below_, psize);
            cur_start += bsz;
        };

        if (n_shards_ <= 1 || n <= 1) {
            enable_flush_to_zero();
            CnnAttWorkspace<float> ws;
            std::vector<float> x;
            while (cur_start < n) {
                const size_t bsz = std::min(size_t(cfg_.batch), n - cur_start);
                process_shard(0, cur_start, bsz, ws, x);
                reduce_and_step();
            }
        } else {
            std::barrier bar(std::ptrdiff_t(n_shards_), reduce_and_step);
            auto worker = [&](size_t shard) {
                enable_flush_to_zero();
                CnnAttWorkspace<float> ws;
                std::vector<float> x;
                for (;;) {
                    const size_t start = cur_start;
                    if (start >= n) return;  // all shards observe the same phase result
                    const size_t bsz = std::min(size_t(cfg_.batch), n - start);
                    process_shard(shard, start, bsz, ws, x);
                    bar.arrive_and_wait();
                }
            };
            std::vector<std::thread> pool;
            for (size_t s = 0; s < n_shards_; ++s) pool.emplace_back(worker, s);
            for (auto& t : pool) t.join();
        }
        if (first_error) std::rethrow_exception(first_error);
        return total_count ? total_loss / double(total_count) : 0.0;
    }

    /// Encode one window with frozen stats into the model input volume.
    static void encode_input(const TabularWindow& w, const RowStats& stats, std::vector<float>& x) {
        FeatureVolume v = enc::build_volume(w, stats);
        x.assign(v.data.begin(), v.data.end());
    }

private:
    CnnAttModel<float> model_;
    TrainConfig cfg_;
    size_t freeze_below_;
    size_t n_shards_;
    Adam<float> adam_;
};

inline int predict_class(const CnnAttModel<float>& model, const TabularWindow& w,
                         const RowStats& stats, CnnAttWorkspace<float>& ws) {
    std::vector<float> x;
    ClassifierTrainer::encode_input(w, stats, x);
    model.forward(x.data(), ws, false, 0);
    int best = 0;
    for (size_t c = 1; c < ws.probs.size(); ++c)
        if (ws.probs[c] > ws.probs[size_t(best)]) best = int(c);
    return best;
}

struct EvalCounts {
    size_t correct = 0, total = 0, tp = 0, fp = 0, fn = 0;
    double accuracy() const { return total ? double(correct) / double(total) : 0.0; }
    double precision() const { return tp + fp ? double(tp) / double(tp + fp) : 0.0; }
    double recall() const { return tp + fn ? double(tp) / double(tp + fn) : 0.0; }
};

template <typename PredictFn>
EvalCounts evaluate_classifier(const std::vector<const TabularWindow*>& windows,
                               const std::vector<int>& labels,
                               const std::vector<size_t>& subset, const PredictFn& predict) {
    EvalCounts ec;
    for (size_t i : subset) {
        int got = predict(*windows[i]);
        int want = labels[i];
        ++ec.total;
        if (got == want) ++ec.correct;
        if (got == 1 && want == 1) ++ec.tp;
        if (got == 1 && want == 0) ++ec.fp;
        if (got == 0 && want == 1) ++ec.fn;
    }
    return ec;
}

/// Same counts with model inference sharded across worker threads.
inline EvalCounts evaluate_model_mt(const CnnAttModel<float>& model, const RowStats& stats,
                                    const std::vector<const TabularWindow*>& windows,
                                    const std::vector<int>& labels,
                                    const std::vector<size_t>& subset, int threads = 0) {
    const size_t nt = std::min<size_t>(size_t(scen::resolve_threads(threads)),
                                       std::max<size_t>(1, subset.size()));
    if (nt <= 1) {
        enable_flush_to_zero();
        CnnAttWorkspace<float> ws;
        return evaluate_classifier(windows, labels, subset, [&](const TabularWindow& w) {
            return predict_class(model, w, stats, ws);
        });
    }
    std::vector<EvalCounts> partial(nt);
    std::atomic<size_t> next{0};
    auto worker = [&](size_t t) {
        enable_flush_to_zero();
        CnnAttWorkspace<float> ws;
        EvalCounts& ec = partial[t];
        for (;;) {
            size_t j = next.fetch_add(1);
            if (j >= subset.size()) return;
            size_t i = subset[j];
            int got = predict_class(model, *windows[i], stats, ws);
            int want = labels[i];
            ++ec.total;
            if (got == want) ++ec.correct;
            if (got == 1 && want == 1) ++ec.tp;
            if (got == 1 && want == 0) ++ec.fp;
            if (got == 0 && want == 1) ++ec.fn;
        }
    };
    std::vector<std::thread> pool;
    for (size_t t = 0; t < nt; ++t) pool.emplace_back(worker, t);
    for (auto& th : pool) th.join();
    EvalCounts ec;
    for (const auto& p : partial) {
        ec.total += p.total;
        ec.correct += p.correct;
        ec.tp += p.tp;
        ec.fp += p.fp;
        ec.fn += p.fn;
    }
    return ec;
}

/// K-fold cross-validation followed by a full-data fit. Normalization stats
/// are recomputed from each fold's training split so no validation
/// information leaks into the encoding.
inline ClassifierResult train_classifier(const std::vector<TabularWindow>& windows,
                                         const std::vector<int>& labels, const TrainConfig& cfg,
                                         const CnnAttConfig& arch = {}) {
    cfg.validate();
    if (windows.size() != labels.size() || windows.empty())
        throw ValidationError("windows/labels size mismatch");
    bool has0 = false, has1 = false;
    for (int l : labels) (l ? has1 : has0) = true;
    if (!has0 || !has1) throw ValidationError("training set must contain both classes");

    std::vector<const TabularWindow*> wp(windows.size());
    for (size_t i = 0; i < windows.size(); ++i) wp[i] = &windows[i];

    ClassifierResult out;
    auto order = detail::shuffled_indices(windows.size(), split_seed(cfg.seed, 0xF01D));

    for (int fold = 0; fold < cfg.folds; ++fold) {
        auto split = detail::fold_split(order, fold, cfg.folds);
        if (split.train.empty() || split.val.empty()) continue;
        std::vector<const TabularWindow*> tw;
        for (size_t i : split.train) tw.push_back(wp[i]);
        RowStats stats = enc::compute_stats_ptrs(tw);

        CnnAttModel<float> m(arch);
        m.init(split_seed(cfg.seed, 100 + uint64_t(fold)));
        ClassifierTrainer trainer(m, cfg);
        std::vector<int> tl;
        for (size_t i : split.train) tl.push_back(labels[i]);
        double last_loss = 0;
        for (int e = 0; e < cfg.epochs; ++e)
            last_loss =
                trainer.run_epoch(tw, tl, stats, split_seed(cfg.seed, 1000 + uint64_t(fold * 131 + e)),
                                  split_seed(cfg.seed, 2000 + uint64_t(fold * 131 + e)));

        EvalCounts ec = evaluate_model_mt(trainer.model(), stats, wp, labels, split.val,
                                          cfg.threads);
        out.folds.push_back({fold, ec.accuracy(), ec.precision(), ec.recall(), ec.total, last_loss});
    }

    // final model on all data
    out.stats = enc::compute_stats(windows);
    if (cfg.final_fit) {
        CnnAttModel<float> m(arch);
        m.init(split_seed(cfg.seed, 99));
        ClassifierTrainer trainer(m, cfg);
        std::vector<int> al(labels);
        for (int e = 0; e < cfg.epochs; ++e)
            out.epoch_loss.push_back(trainer.run_epoch(wp, al, out.stats,
                                                       split_seed(cfg.seed, 3000 + uint64_t(e)),
                                                       split_seed(cfg.seed, 4000 + uint64_t(e))));
        out.model = trainer.model();
    }
    return out;
}

/// Transfer learning: convolution branches stay frozen, attention and the
/// dense head retrain against the new labels.
inline ClassifierResult fine_tune(const CnnAttModel<float>& pretrained, const RowStats& stats,
                                  const std::vector<TabularWindow>& windows,
                                  const std::vector<int>& labels, const TrainConfig& cfg) {
    cfg.validate();
    if (windows.size() != labels.size() || windows.empty())
        throw ValidationError("windows/labels size mismatch");
    std::vector<const TabularWindow*> wp(windows.size());
    for (size_t i = 0; i < windows.size(); ++i) wp[i] = &windows[i];

    ClassifierResult out;
    out.stats = stats;
    ClassifierTrainer trainer(pretrained, cfg, pretrained.layout().conv_end);
    std::vector<int> al(labels);
    for (int e = 0; e < cfg.epochs; ++e)
        out.epoch_loss.push_back(trainer.run_epoch(wp, al, stats,
                                                   split_seed(cfg.seed, 5000 + uint64_t(e)),
                                                   split_seed(cfg.seed, 6000 + uint64_t(e))));
    out.model = trainer.model();
    return out;
}

// ---------------------------------------------------------------------------
// Baseline ensemble members (logistic map classifier, nearest centroid)
// ---------------------------------------------------------------------------

/// Logistic regression over the flattened unblurred intensity map.
struct LogisticMapClassifier {
    RowStats stats;
    std::vector<float> w;  // dim + 1 (bias last)

    static std::vector<float> features(const TabularWindow& win, const RowStats& st) {
        enc::IntensityMap m = enc::build_intensity_map(win, st);
        return std::vector<float>(m.data.begin(), m.data.end());
    }

    double score(const TabularWindow& win) const {
        auto x = features(win, stats);
        double s = double(w.back());
        for (size_t i = 0; i < x.size(); ++i) s += double(w[i]) * x[i];
        return 1.0 / (1.0 + std::exp(-s));
    }
    int predict(const TabularWindow& win) const { return score(win) >= 0.5 ? 1 : 0; }
};

inline LogisticMapClassifier train_logistic(const std::vector<const TabularWindow*>& windows,
                                            const std::vector<int>& labels, const RowStats& stats,
                                            uint64_t seed, int epochs = 40, double lr = 1e-3) {
    const size_t dim = size_t(enc::kRows) * enc::kCols;
    LogisticMapClassifier cls;
    cls.stats = stats;
    cls.w.assign(dim + 1, 0.f);
    Adam<float> adam(dim + 1, lr);
    std::vector<float> grad(dim + 1);
    for (int e = 0; e < epochs; ++e) {
        auto order = detail::shuffled_indices(windows.size(), split_seed(seed, 7000 + uint64_t(e)));
        for (size_t i : order) {
            auto x = LogisticMapClassifier::features(*windows[i], stats);
            double s = double(cls.w.back());
            for (size_t j = 0; j < dim; ++j) s += double(cls.w[j]) * x[j];
            double p = 1.0 / (1.0 + std::exp(-s));
            float g = float(p - labels[i]);
            for (size_t j = 0; j < dim; ++j) grad[j] = g * x[j];
            grad[dim] = g;
            adam.step(cls.w.data(), grad.data());
        }
    }
    return cls;
}

/// Nearest centroid over the flattened intensity map; ties go to class 1.
struct CentroidClassifier {
    RowStats stats;
    std::vector<double> mean0, mean1;

    int predict(const TabularWindow& win) const {
        auto x = LogisticMapClassifier::features(win, stats);
        double d0 = 0, d1 = 0;
        for (size_t i = 0; i < x.size(); ++i) {
            double a = x[i] - mean0[i], b = x[i] - mean1[i];
            d0 += a * a;
            d1 += b * b;
        }
        return d1 <= d0 ? 1 : 0;
    }
};

inline CentroidClassifier train_centroid(const std::vector<const TabularWindow*>& windows,
                                         const std::vector<int>& labels, const RowStats& stats) {
    const size_t dim = size_t(enc::kRows) * enc::kCols;
    CentroidClassifier cls;
    cls.stats = stats;
    cls.mean0.assign(dim, 0.0);
    cls.mean1.assign(dim, 0.0);
    size_t n0 = 0, n1 = 0;
    for (size_t i = 0; i < windows.size(); ++i) {
        auto x = LogisticMapClassifier::features(*windows[i], stats);
        auto& m = labels[i] ? cls.mean1 : cls.mean0;
        (labels[i] ? n1 : n0)++;
        for (size_t j = 0; j < dim; ++j) m[j] += x[j];
    }
    if (n0 == 0 || n1 == 0) throw ValidationError("centroid classifier needs both classes");
    for (size_t j = 0; j < dim; ++j) {
        cls.mean0[j] /= double(n0);
        cls.mean1[j] /= double(n1);
    }
    return cls;
}

// ---------------------------------------------------------------------------
// Interpretability
// ---------------------------------------------------------------------------

struct Interpretation {
    std::array<double, 5> kernel_anw{};                 // one per branch, sums to 1
    std::vector<std::array<int, 2>> head_top_indices;   // per head, two largest-mass times
};

/// Average normalized |weight| per convolution branch plus the two time
/// positions carrying the most dataset-averaged attention mass per head.
inline Interpretation interpret(const CnnAttModel<float>& model, const RowStats& stats,
                                const std::vector<const TabularWindow*>& windows) {
    const auto& cfg = model.config();
    const auto& lay = model.layout();
    Interpretation out;

    double total = 0;
    for (size_t b = 0; b < cfg.kernels.size(); ++b) {
        int k = cfg.kernels[b];
        size_t nw = size_t(cfg.nf) * cfg.in_ch * k * k;
        double s = 0;
        for (size_t i = 0; i < nw; ++i) s += std::fabs(double(model.params()[lay.conv[b].w + i]));
        out.kernel_anw[b] = s / double(nw);
        total += out.kernel_anw[b];
    }
    if (total > 0)
        for (auto& v : out.kernel_anw) v /= total;

    std::vector<std::vector<double>> mass(size_t(cfg.heads),
                                          std::vector<double>(size_t(cfg.cols), 0.0));
    CnnAttWorkspace<float> ws;
    std::vector<float> x;
    for (const auto* w : windows) {
        ClassifierTrainer::encode_input(*w, stats, x);
        model.forward(x.data(), ws, false, 0);
        for (int h = 0; h < cfg.heads; ++h) {
            const float* a = ws.attn.data() + size_t(h) * cfg.cols * cfg.cols;
            for (int i = 0; i < cfg.cols; ++i)
                for (int j = 0; j < cfg.cols; ++j)
                    mass[size_t(h)][size_t(j)] += double(a[size_t(i) * cfg.cols + size_t(j)]);
        }
    }
    out.head_top_indices.resize(size_t(cfg.heads));
    for (int h = 0; h < cfg.heads; ++h) {
        int best = 0, second = -1;
        auto& mh = mass[size_t(h)];
        for (int j = 1; j < cfg.cols; ++j)
            if (mh[size_t(j)] > mh[size_t(best)]) best = j;
        for (int j = 0; j < cfg.cols; ++j) {
            if (j == best) continue;
            if (second < 0 || mh[size_t(j)] > mh[size_t(second)]) second = j;
        }
        out.head_top_indices[size_t(h)] = {best, second};
    }
    return out;
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

struct GradCheckResult {
    double max_rel_err = 0;
    size_t n_checked = 0;
};

/// Central finite differences against an analytic gradient on randomly chosen
/// parameter indices. Double precision only; eps is the probe step.
template <typename LossFn>
GradCheckResult grad_check_indices(std::vector<double>& params, const std::vector<double>& analytic,
                                   const LossFn& loss, const std::vector<size_t>& indices,
                                   double eps = 1e-5) {
    GradCheckResult r;
    for (size_t idx : indices) {
        const double keep = params[idx];
        params[idx] = keep + eps;
        double lp = loss();
        params[idx] = keep - eps;
        double lm = loss();
        params[idx] = keep;
        double num = (lp - lm) / (2 * eps);
        double ana = analytic[idx];
        double denom = std::max({std::fabs(num), std::fabs(ana), 1e-6});
        r.max_rel_err = std::max(r.max_rel_err, std::fabs(num - ana) / denom);
        ++r.n_checked;
    }
    return r;
}

inline std::vector<size_t> pick_indices(size_t begin, size_t end, size_t count, Rng& rng) {
    std::vector<size_t> out;
    if (end <= begin) return out;
    size_t span = end - begin;
    count = std::min(count, span);
    for (size_t i = 0; i < count; ++i) out.push_back(begin + rng.next_below(span));
    return out;
}

/// Full-model gradient check on a double-precision instance: cross-entropy
/// loss, >= `per_group` random parameters from each layer type.
inline GradCheckResult grad_check(const CnnAttModel<double>& model, const std::vector<double>& x,
                                  size_t label, size_t per_group = 200, double eps = 1e-5,
                                  uint64_t seed = 12345) {
    CnnAttModel<double> m = model;
    const auto& lay = m.layout();
    CnnAttWorkspace<double> ws;

    std::vector<double> analytic(m.params().size(), 0.0);
    m.forward(x.data(), ws, false, 0);
    m.backward(x.data(), label, ws, analytic.data());

    Rng rng(seed);
    std::vector<size_t> idx;
    auto add = [&](size_t b, size_t e) {
        for (size_t i : pick_indices(b, e, per_group, rng)) idx.push_back(i);
    };
    add(0, lay.conv_end);                                     // conv path
    add(lay.conv_end, lay.dense_w);                           // attention path
    add(lay.dense_w, m.params().size());                      // dense + softmax path

    auto loss = [&]() {
        m.forward(x.data(), ws, false, 0);
        return cross_entropy(ws.probs.data(), ws.probs.size(), label);
    };
    return grad_check_indices(m.params(), analytic, loss, idx, eps);
}

}  // namespace dsc::nn
