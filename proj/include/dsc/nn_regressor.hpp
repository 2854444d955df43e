#pragma once

#include <functional>
#include <string>

#include "dsc/nn_core.hpp"

namespace dsc::nn {

/// Dense feedforward regressor for the demand-response participation
/// fraction: ReLU hidden stack, sigmoid scalar output so predictions live in
/// [0, 1] by construction.
struct RegressorConfig {
    int input_dim = 6;
    std::vector<int> hidden{300, 300, 250, 250, 200};

    std::vector<int> widths() const {
        std::vector<int> w;
        w.push_back(input_dim);
        for (int h : hidden) w.push_back(h);
        w.push_back(1);
        return w;
    }
};

template <typename Real>
struct RegressorWorkspace {
    std::vector<std::vector<Real>> act;   // post-activation per layer (act[0] = input)
    std::vector<std::vector<Real>> pre;   // pre-activation per layer
    std::vector<std::vector<Real>> derr;  // backward scratch
};

template <typename Real>
class RegressorModel {
public:
    explicit RegressorModel(const RegressorConfig& cfg = {}) : cfg_(cfg) {
        auto w = cfg_.widths();
        size_t total = 0;
        for (size_t l = 0; l + 1 < w.size(); ++l) {
            w_off_.push_back(total);
            total += size_t(w[l + 1]) * w[l];
            b_off_.push_back(total);
            total += size_t(w[l + 1]);
        }
        params_.assign(total, Real(0));
    }

    void init(uint64_t seed) {
        Rng rng(split_seed(seed, 0x12E6));
        auto w = cfg_.widths();
        for (size_t l = 0; l + 1 < w.size(); ++l)
            he_uniform(params_.data() + w_off_[l], size_t(w[l + 1]) * w[l], size_t(w[l]), rng);
    }

    const RegressorConfig& config() const { return cfg_; }
    std::vector<Real>& params() { return params_; }
    const std::vector<Real>& params() const { return params_; }

    double forward(const Real* x, RegressorWorkspace<Real>& ws) const {
        auto w = cfg_.widths();
        const size_t nl = w.size() - 1;
        ws.act.resize(nl + 1);
        ws.pre.resize(nl);
        ws.act[0].assign(x, x + w[0]);
        for (size_t l = 0; l < nl; ++l) {
            const size_t nin = size_t(w[l]), nout = size_t(w[l + 1]);
            ws.pre[l].assign(nout, Real(0));
            const Real* wl = params_.data() + w_off_[l];
            const Real* bl = params_.data() + b_off_[l];
            for (size_t o = 0; o < nout; ++o) {
                Real s = bl[o];
                const Real* row = wl + o * nin;
                const Real* in = ws.act[l].data();
                for (size_t i = 0; i < nin; ++i) s += row[i] * in[i];
                ws.pre[l][o] = s;
            }
            ws.act[l + 1].resize(nout);
            if (l + 1 < nl) {
                for (size_t o = 0; o < nout; ++o)
                    ws.act[l + 1][o] = ws.pre[l][o] > Real(0) ? ws.pre[l][o] : Real(0);
            } else {
                ws.act[l + 1][0] = Real(1) / (Real(1) + std::exp(-ws.pre[l][0]));
            }
        }
        return double(ws.act[nl][0]);
    }

    /// Backward for squared error 0.5*(y - target)^2; accumulates gradients.
    void backward(double target, RegressorWorkspace<Real>& ws, Real* grads,
                  Real weight = Real(1)) const {
        auto w = cfg_.widths();
        const size_t nl = w.size() - 1;
        ws.derr.resize(nl);
        const Real y = ws.act[nl][0];
        // d/dz of sigmoid(z) = y(1-y)
        ws.derr[nl - 1].assign(1, weight * (y - Real(target)) * y * (Real(1) - y));
        for (size_t l = nl; l-- > 0;) {
            const size_t nin = size_t(w[l]), nout = size_t(w[l + 1]);
            const Real* wl = params_.data() + w_off_[l];
            Real* gw = grads + w_off_[l];
            Real* gb = grads + b_off_[l];
            const Real* in = ws.act[l].data();
            const Real* d = ws.derr[l].data();
            for (size_t o = 0; o < nout; ++o) {
                const Real g = d[o];
                gb[o] += g;
                Real* row = gw + o * nin;
                for (size_t i = 0; i < nin; ++i) row[i] += g * in[i];
            }
            if (l == 0) break;
            ws.derr[l - 1].assign(nin, Real(0));
            Real* dprev = ws.derr[l - 1].data();
            for (size_t o = 0; o < nout; ++o) {
                const Real g = d[o];
                const Real* row = wl + o * nin;
                for (size_t i = 0; i < nin; ++i) dprev[i] += g * row[i];
            }
            // ReLU gate of the previous layer
            for (size_t i = 0; i < nin; ++i)
                if (ws.pre[l - 1][i] <= Real(0)) dprev[i] = Real(0);
        }
    }

private:
    RegressorConfig cfg_;
    std::vector<size_t> w_off_, b_off_;
    std::vector<Real> params_;
};

// ---------------------------------------------------------------------------
// Precision-weighted majority voting
// ---------------------------------------------------------------------------

struct WmvMember {
    std::string name;
    double precision = 0;                     // validation precision, class 1 one-vs-rest
    std::function<int(const void*)> predict;  // bound by the caller
};

struct WmvEnsemble {
    std::vector<WmvMember> members;
    std::vector<double> weights;  // precision / sum(precisions)

    void finalize() {
        if (members.empty()) throw ValidationError("ensemble needs at least one member");
        double sum = 0;
        for (const auto& m : members) {
            if (m.precision < 0) throw ValidationError("negative precision");
            sum += m.precision;
        }
        if (sum <= 0) throw ValidationError("all member precisions are zero");
        weights.clear();
        for (const auto& m : members) weights.push_back(m.precision / sum);
    }
};

/// Weighted vote over binary classes; ties resolve to class 1 (treat as
/// critical).
inline int wmv_vote(const std::vector<double>& weights, const std::vector<int>& votes) {
    if (weights.size() != votes.size() || weights.empty())
        throw ValidationError("weights/votes mismatch");
    double w1 = 0, w0 = 0;
    for (size_t i = 0; i < votes.size(); ++i) (votes[i] == 1 ? w1 : w0) += weights[i];
    return w1 >= w0 ? 1 : 0;
}

inline int wmv_predict(const WmvEnsemble& ens, const void* sample) {
    if (ens.weights.size() != ens.members.size())
        throw ValidationError("ensemble not finalized");
    std::vector<int> votes;
    votes.reserve(ens.members.size());
    for (const auto& m : ens.members) votes.push_back(m.predict(sample));
    return wmv_vote(ens.weights, votes);
}

}  // namespace dsc::nn
