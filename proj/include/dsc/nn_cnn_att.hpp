#pragma once

#include <array>

#include "dsc/nn_core.hpp"

namespace dsc::nn {

/// Architecture of the convolution+attention classifier: five parallel
/// same-padded convolution branches (kernel sizes 1/3/5/7/9, N_F filters
/// each), channel-axis max pooling of width 2, multi-head scaled dot-product
/// attention over the time positions, and a dense softmax head with dropout
/// at its input.
struct CnnAttConfig {
    int in_ch = 5;
    int rows = 270;
    int cols = 250;  // time positions
    std::array<int, 5> kernels{1, 3, 5, 7, 9};
    int nf = 4;      // filters per branch
    int heads = 8;
    int dk = 32;     // key/query width per head
    int dv = 8;      // value width per head
    int classes = 2;
    double dropout = 0.2;

    int cat_ch() const { return nf * int(kernels.size()); }
    int pool_ch() const { return cat_ch() / 2; }
    int token_dim() const { return pool_ch() * rows; }
    int head_stride() const { return 2 * dk + dv; }           // fused QKV columns per head
    int attn_cols() const { return heads * head_stride(); }
    int attn_out() const { return heads * dv; }
    int dense_in() const { return cols * attn_out(); }

    void validate() const {
        if (cat_ch() % 2 != 0) throw ValidationError("pooling needs an even channel count");
        if (in_ch <= 0 || rows <= 0 || cols <= 0 || nf <= 0 || heads <= 0 || dk <= 0 || dv <= 0)
            throw ValidationError("invalid architecture dimensions");
        if (classes < 2 || classes > 16) throw ValidationError("unsupported class count");
        for (int k : kernels)
            if (k < 1 || k % 2 == 0) throw ValidationError("kernel sizes must be odd");
    }
};

/// Offsets of each parameter group inside the flat parameter vector. The
/// Q/K/V projections of all heads live in one fused [token_dim x attn_cols]
/// matrix; head h owns the column band starting at h*head_stride, split
/// Q (dk) | K (dk) | V (dv).
struct CnnAttLayout {
    struct Branch {
        size_t w = 0, b = 0;
    };
    std::array<Branch, 5> conv;
    size_t conv_end = 0;  // transfer learning freezes [0, conv_end)
    size_t attn_w = 0;
    size_t dense_w = 0, dense_b = 0;
    size_t total = 0;

    static CnnAttLayout build(const CnnAttConfig& c) {
        CnnAttLayout l;
        size_t off = 0;
        for (size_t b = 0; b < c.kernels.size(); ++b) {
            int k = c.kernels[b];
            l.conv[b].w = off;
            off += size_t(c.nf) * c.in_ch * k * k;
            l.conv[b].b = off;
            off += size_t(c.nf);
        }
        l.conv_end = off;
        l.attn_w = off;
        off += size_t(c.token_dim()) * c.attn_cols();
        l.dense_w = off;
        off += size_t(c.classes) * c.dense_in();
        l.dense_b = off;
        off += size_t(c.classes);
        l.total = off;
        return l;
    }
};

/// Per-sample activation cache. One instance per worker thread.
template <typename Real>
struct CnnAttWorkspace {
    std::vector<Real> conv_out;   // cat_ch x rows x cols
    std::vector<Real> pooled;     // pool_ch x rows x cols
    std::vector<uint8_t> argmax;  // pool_ch x rows x cols, winning sub-channel
    std::vector<Real> tokens;     // cols x token_dim
    std::vector<Real> qkv;        // cols x attn_cols (fused projections)
    std::vector<Real> q, k, v;    // packed per-head panels
    std::vector<Real> attn;       // heads x cols x cols (post-softmax)
    std::vector<Real> concat;     // cols x attn_out
    std::vector<Real> dropout_mask;
    std::vector<Real> probs;
    // backward scratch
    std::vector<Real> d_concat, d_o, d_q, d_k, d_v, d_qkv, d_attn, d_scores, d_tokens, d_pooled,
        d_conv;

    void resize(const CnnAttConfig& c) {
        size_t plane = size_t(c.rows) * c.cols;
        // every buffer is fully rewritten by forward/backward, so an
        // already-sized workspace needs no refill
        if (conv_out.size() == size_t(c.cat_ch()) * plane &&
            tokens.size() == size_t(c.cols) * c.token_dim() &&
            probs.size() == size_t(c.classes))
            return;
        conv_out.assign(size_t(c.cat_ch()) * plane, Real(0));
        pooled.assign(size_t(c.pool_ch()) * plane, Real(0));
        argmax.assign(size_t(c.pool_ch()) * plane, 0);
        tokens.assign(size_t(c.cols) * c.token_dim(), Real(0));
        qkv.assign(size_t(c.cols) * c.attn_cols(), Real(0));
        q.assign(size_t(c.cols) * c.dk, Real(0));
        k.assign(size_t(c.cols) * c.dk, Real(0));
        v.assign(size_t(c.cols) * c.dv, Real(0));
        attn.assign(size_t(c.heads) * c.cols * c.cols, Real(0));
        concat.assign(size_t(c.cols) * c.attn_out(), Real(0));
        dropout_mask.assign(size_t(c.dense_in()), Real(1));
        probs.assign(size_t(c.classes), Real(0));
        d_concat.assign(concat.size(), Real(0));
        d_o.assign(size_t(c.cols) * c.dv, Real(0));
        d_q.assign(q.size(), Real(0));
        d_k.assign(k.size(), Real(0));
        d_v.assign(v.size(), Real(0));
        d_qkv.assign(qkv.size(), Real(0));
        d_attn.assign(size_t(c.cols) * c.cols, Real(0));
        d_scores.assign(size_t(c.cols) * c.cols, Real(0));
        d_tokens.assign(tokens.size(), Real(0));
        d_pooled.assign(pooled.size(), Real(0));
        d_conv.assign(conv_out.size(), Real(0));
    }
};

template <typename Real>
class CnnAttModel {
public:
    CnnAttModel() : CnnAttModel(CnnAttConfig{}) {}
    explicit CnnAttModel(const CnnAttConfig& cfg) : cfg_(cfg), layout_(CnnAttLayout::build(cfg)) {
        cfg_.validate();
        params_.assign(layout_.total, Real(0));
    }

    void init(uint64_t seed) {
        Rng rng(split_seed(seed, 0xC0DE));
        for (size_t b = 0; b < cfg_.kernels.size(); ++b) {
            int k = cfg_.kernels[b];
            size_t nw = size_t(cfg_.nf) * cfg_.in_ch * k * k;
            he_uniform(params_.data() + layout_.conv[b].w, nw, size_t(cfg_.in_ch) * k * k, rng);
            for (int f = 0; f < cfg_.nf; ++f) params_[layout_.conv[b].b + size_t(f)] = Real(0);
        }
        size_t dt = size_t(cfg_.token_dim());
        he_uniform(params_.data() + layout_.attn_w, dt * size_t(cfg_.attn_cols()), dt, rng);
        he_uniform(params_.data() + layout_.dense_w, size_t(cfg_.classes) * cfg_.dense_in(),
                   size_t(cfg_.dense_in()), rng);
        for (int c = 0; c < cfg_.classes; ++c) params_[layout_.dense_b + size_t(c)] = Real(0);
    }

    const CnnAttConfig& config() const { return cfg_; }
    const CnnAttLayout& layout() const { return layout_; }
    std::vector<Real>& params() { return params_; }
    const std::vector<Real>& params() const { return params_; }

    /// Forward pass. `dropout_seed` only matters in training mode; inference
    /// is deterministic with dropout acting as the identity.
    void forward(const Real* x, CnnAttWorkspace<Real>& ws, bool train = false,
                 uint64_t dropout_seed = 0) const {
        ws.resize(cfg_);
        const size_t plane = size_t(cfg_.rows) * cfg_.cols;
        const size_t cols = size_t(cfg_.cols);

        // parallel convolution branches, zero ("same") padding
        for (size_t b = 0; b < cfg_.kernels.size(); ++b) {
            const int ks = cfg_.kernels[b];
            const int pad = ks / 2;
            for (int f = 0; f < cfg_.nf; ++f) {
                Real* out = ws.conv_out.data() + (b * size_t(cfg_.nf) + size_t(f)) * plane;
                const Real bias = params_[layout_.conv[b].b + size_t(f)];
                for (size_t i = 0; i < plane; ++i) out[i] = bias;
                for (int ci = 0; ci < cfg_.in_ch; ++ci) {
                    const Real* xin = x + size_t(ci) * plane;
                    for (int dr = 0; dr < ks; ++dr)
                        for (int dc = 0; dc < ks; ++dc) {
                            const Real w =
                                params_[layout_.conv[b].w +
                                        ((size_t(f) * cfg_.in_ch + size_t(ci)) * ks + size_t(dr)) * ks +
                                        size_t(dc)];
                            add_shifted(out, xin, w, dr - pad, dc - pad);
                        }
                }
            }
        }

        // max pool over channel pairs
        for (int c2 = 0; c2 < cfg_.pool_ch(); ++c2) {
            const Real* a = ws.conv_out.data() + size_t(2 * c2) * plane;
            const Real* b = a + plane;
            Real* out = ws.pooled.data() + size_t(c2) * plane;
            uint8_t* am = ws.argmax.data() + size_t(c2) * plane;
            for (size_t i = 0; i < plane; ++i) {
                // ties resolve to the first channel, matching backward routing
                if (b[i] > a[i]) {
                    out[i] = b[i];
                    am[i] = 1;
                } else {
                    out[i] = a[i];
                    am[i] = 0;
                }
            }
        }

        // tokens: one per time position, features = pooled channels x rows
        for (int c2 = 0; c2 < cfg_.pool_ch(); ++c2)
            for (int r = 0; r < cfg_.rows; ++r) {
                const Real* src = ws.pooled.data() + (size_t(c2) * cfg_.rows + size_t(r)) * cols;
                Real* dst = ws.tokens.data() + size_t(c2) * cfg_.rows + size_t(r);
                const size_t stride = size_t(cfg_.token_dim());
                for (size_t t = 0; t < cols; ++t) dst[t * stride] = src[t];
            }

        // fused Q/K/V projections for every head in one pass over the tokens
        const size_t dt = size_t(cfg_.token_dim());
        const size_t hs = size_t(cfg_.head_stride());
        const size_t ac = size_t(cfg_.attn_cols());
        gemm_nn(cols, ac, dt, ws.tokens.data(), params_.data() + layout_.attn_w, ws.qkv.data(),
                false);

        const Real scale = Real(1.0 / std::sqrt(double(cfg_.dk)));
        for (int h = 0; h < cfg_.heads; ++h) {
            pack_head(ws.qkv.data(), ws.q.data(), cols, ac, size_t(h) * hs, size_t(cfg_.dk));
            pack_head(ws.qkv.data(), ws.k.data(), cols, ac, size_t(h) * hs + size_t(cfg_.dk),
                      size_t(cfg_.dk));
            pack_head(ws.qkv.data(), ws.v.data(), cols, ac, size_t(h) * hs + 2 * size_t(cfg_.dk),
                      size_t(cfg_.dv));
            Real* a = ws.attn.data() + size_t(h) * cols * cols;
            gemm_nt(cols, cols, size_t(cfg_.dk), ws.q.data(), ws.k.data(), a, false);
            for (size_t i = 0; i < cols * cols; ++i) a[i] *= scale;
            for (size_t i = 0; i < cols; ++i) softmax_row(a + i * cols, cols);
            // head output written into its column slice of the concat buffer
            for (size_t i = 0; i < cols; ++i) {
                Real* oi = ws.concat.data() + i * size_t(cfg_.attn_out()) + size_t(h) * cfg_.dv;
                const Real* ai = a + i * cols;
                for (int d = 0; d < cfg_.dv; ++d) oi[d] = Real(0);
                for (size_t j = 0; j < cols; ++j) {
                    const Real w = ai[j];
                    const Real* vj = ws.v.data() + j * size_t(cfg_.dv);
                    for (int d = 0; d < cfg_.dv; ++d) oi[d] += w * vj[d];
                }
            }
        }

        // dropout at the dense input (inverted scaling; identity in inference)
        const size_t din = size_t(cfg_.dense_in());
        if (train && cfg_.dropout > 0) {
            Rng drng(dropout_seed);
            const Real keep = Real(1.0 - cfg_.dropout);
            for (size_t i = 0; i < din; ++i)
                ws.dropout_mask[i] = drng.next_double() < cfg_.dropout ? Real(0) : Real(1) / keep;
        } else {
            for (size_t i = 0; i < din; ++i) ws.dropout_mask[i] = Real(1);
        }

        for (int c = 0; c < cfg_.classes; ++c) {
            const Real* w = params_.data() + layout_.dense_w + size_t(c) * din;
            Real s = params_[layout_.dense_b + size_t(c)];
            const Real* z = ws.concat.data();
            for (size_t i = 0; i < din; ++i) s += w[i] * z[i] * ws.dropout_mask[i];
            ws.probs[size_t(c)] = s;
        }
        softmax_row(ws.probs.data(), size_t(cfg_.classes));
    }

    /// Backward pass for cross-entropy against `label`; accumulates into
    /// `grads` (same layout as the parameters), scaled by `weight`. Must be
    /// called on the workspace the forward pass filled.
    void backward(const Real* x, size_t label, CnnAttWorkspace<Real>& ws, Real* grads,
                  Real weight = Real(1)) const {
        const size_t plane = size_t(cfg_.rows) * cfg_.cols;
        const size_t cols = size_t(cfg_.cols);
        const size_t din = size_t(cfg_.dense_in());
        const size_t dt = size_t(cfg_.token_dim());
        const size_t hs = size_t(cfg_.head_stride());
        const size_t ac = size_t(cfg_.attn_cols());

        // fused softmax + cross-entropy
        std::array<Real, 16> dlogit;
        for (int c = 0; c < cfg_.classes; ++c)
            dlogit[size_t(c)] = weight * (ws.probs[size_t(c)] - Real(c == int(label) ? 1 : 0));

        // dense layer
        std::fill(ws.d_concat.begin(), ws.d_concat.end(), Real(0));
        for (int c = 0; c < cfg_.classes; ++c) {
            const Real g = dlogit[size_t(c)];
            Real* dw = grads + layout_.dense_w + size_t(c) * din;
            const Real* w = params_.data() + layout_.dense_w + size_t(c) * din;
            const Real* z = ws.concat.data();
            Real* dz = ws.d_concat.data();
            for (size_t i = 0; i < din; ++i) {
                const Real zi = z[i] * ws.dropout_mask[i];
                dw[i] += g * zi;
                dz[i] += g * w[i] * ws.dropout_mask[i];
            }
            grads[layout_.dense_b + size_t(c)] += g;
        }

        const Real scale = Real(1.0 / std::sqrt(double(cfg_.dk)));
        for (int h = 0; h < cfg_.heads; ++h) {
            const Real* a = ws.attn.data() + size_t(h) * cols * cols;
            pack_head(ws.qkv.data(), ws.q.data(), cols, ac, size_t(h) * hs, size_t(cfg_.dk));
            pack_head(ws.qkv.data(), ws.k.data(), cols, ac, size_t(h) * hs + size_t(cfg_.dk),
                      size_t(cfg_.dk));
            pack_head(ws.qkv.data(), ws.v.data(), cols, ac, size_t(h) * hs + 2 * size_t(cfg_.dk),
                      size_t(cfg_.dv));
            pack_head(ws.d_concat.data(), ws.d_o.data(), cols, size_t(cfg_.attn_out()),
                      size_t(h) * cfg_.dv, size_t(cfg_.dv));

            // dA = dO V^T ; dV = A^T dO
            gemm_nt(cols, cols, size_t(cfg_.dv), ws.d_o.data(), ws.v.data(), ws.d_attn.data(),
                    false);
            gemm_tn(cols, size_t(cfg_.dv), cols, a, ws.d_o.data(), ws.d_v.data(), false);
            // softmax backward per row, then scale
            for (size_t i = 0; i < cols; ++i) {
                const Real* ai = a + i * cols;
                const Real* dai = ws.d_attn.data() + i * cols;
                const Real dot = dot_n(ai, dai, cols);
                Real* dsi = ws.d_scores.data() + i * cols;
                for (size_t j = 0; j < cols; ++j) dsi[j] = ai[j] * (dai[j] - dot) * scale;
            }
            // dQ = dS K ; dK = dS^T Q
            gemm_nn(cols, size_t(cfg_.dk), cols, ws.d_scores.data(), ws.k.data(), ws.d_q.data(),
                    false);
            gemm_tn(cols, size_t(cfg_.dk), cols, ws.d_scores.data(), ws.q.data(), ws.d_k.data(),
                    false);
            unpack_head(ws.d_q.data(), ws.d_qkv.data(), cols, ac, size_t(h) * hs, size_t(cfg_.dk));
            unpack_head(ws.d_k.data(), ws.d_qkv.data(), cols, ac, size_t(h) * hs + size_t(cfg_.dk),
                        size_t(cfg_.dk));
            unpack_head(ws.d_v.data(), ws.d_qkv.data(), cols, ac,
                        size_t(h) * hs + 2 * size_t(cfg_.dk), size_t(cfg_.dv));
        }
        // dW += X^T dQKV ; dX = dQKV W^T, both fused across heads
        gemm_tn(dt, ac, cols, ws.tokens.data(), ws.d_qkv.data(), grads + layout_.attn_w, true);
        gemm_nt(cols, dt, ac, ws.d_qkv.data(), params_.data() + layout_.attn_w,
                ws.d_tokens.data(), false);

        // detokenize and unpool
        for (int c2 = 0; c2 < cfg_.pool_ch(); ++c2)
            for (int r = 0; r < cfg_.rows; ++r) {
                const Real* src = ws.d_tokens.data() + size_t(c2) * cfg_.rows + size_t(r);
                Real* dst = ws.d_pooled.data() + (size_t(c2) * cfg_.rows + size_t(r)) * cols;
                for (size_t t = 0; t < cols; ++t) dst[t] = src[t * dt];
            }
        std::fill(ws.d_conv.begin(), ws.d_conv.end(), Real(0));
        for (int c2 = 0; c2 < cfg_.pool_ch(); ++c2) {
            const Real* dp = ws.d_pooled.data() + size_t(c2) * plane;
            const uint8_t* am = ws.argmax.data() + size_t(c2) * plane;
            Real* d0 = ws.d_conv.data() + size_t(2 * c2) * plane;
            Real* d1 = d0 + plane;
            for (size_t i = 0; i < plane; ++i) (am[i] ? d1 : d0)[i] = dp[i];
        }

        // convolution weight/bias gradients (input gradient not needed)
        for (size_t b = 0; b < cfg_.kernels.size(); ++b) {
            const int ks = cfg_.kernels[b];
            const int pad = ks / 2;
            for (int f = 0; f < cfg_.nf; ++f) {
                const Real* dout = ws.d_conv.data() + (b * size_t(cfg_.nf) + size_t(f)) * plane;
                Real bsum = Real(0);
                for (size_t i = 0; i < plane; ++i) bsum += dout[i];
                grads[layout_.conv[b].b + size_t(f)] += bsum;
                for (int ci = 0; ci < cfg_.in_ch; ++ci) {
                    const Real* xin = x + size_t(ci) * plane;
                    for (int dr = 0; dr < ks; ++dr)
                        for (int dc = 0; dc < ks; ++dc) {
                            grads[layout_.conv[b].w +
                                  ((size_t(f) * cfg_.in_ch + size_t(ci)) * ks + size_t(dr)) * ks +
                                  size_t(dc)] += dot_shifted(dout, xin, dr - pad, dc - pad);
                        }
                }
            }
        }
    }

    /// Inference helper: class probabilities for one volume.
    std::vector<double> predict_probs(const Real* x, CnnAttWorkspace<Real>& ws) const {
        forward(x, ws, false, 0);
        std::vector<double> p(ws.probs.begin(), ws.probs.end());
        return p;
    }

private:
    static void pack_head(const Real* src, Real* dst, size_t rows, size_t src_stride,
                          size_t col0, size_t width) {
        for (size_t i = 0; i < rows; ++i) {
            const Real* s = src + i * src_stride + col0;
            Real* d = dst + i * width;
            for (size_t j = 0; j < width; ++j) d[j] = s[j];
        }
    }
    static void unpack_head(const Real* src, Real* dst, size_t rows, size_t dst_stride,
                            size_t col0, size_t width) {
        for (size_t i = 0; i < rows; ++i) {
            const Real* s = src + i * width;
            Real* d = dst + i * dst_stride + col0;
            for (size_t j = 0; j < width; ++j) d[j] = s[j];
        }
    }

    // out[r][c] += w * in[r+dr][c+dc] over the in-range region (zero padding)
    void add_shifted(Real* out, const Real* in, Real w, int dr, int dc) const {
        const int rows = cfg_.rows, cols = cfg_.cols;
        const int r0 = std::max(0, -dr), r1 = std::min(rows, rows - dr);
        const int c0 = std::max(0, -dc), c1 = std::min(cols, cols - dc);
        for (int r = r0; r < r1; ++r) {
            Real* orow = out + size_t(r) * cols;
            const Real* irow = in + size_t(r + dr) * cols + dc;
            for (int c = c0; c < c1; ++c) orow[c] += w * irow[c];
        }
    }
    // sum over the same region of dout[r][c] * in[r+dr][c+dc]
    Real dot_shifted(const Real* dout, const Real* in, int dr, int dc) const {
        const int rows = cfg_.rows, cols = cfg_.cols;
        const int r0 = std::max(0, -dr), r1 = std::min(rows, rows - dr);
        const int c0 = std::max(0, -dc), c1 = std::min(cols, cols - dc);
        Real s = Real(0);
        for (int r = r0; r < r1; ++r) {
            const Real* orow = dout + size_t(r) * cols + c0;
            const Real* irow = in + size_t(r + dr) * cols + dc + c0;
            s += dot_n(orow, irow, size_t(c1 - c0));
        }
        return s;
    }

    CnnAttConfig cfg_;
    CnnAttLayout layout_;
    std::vector<Real> params_;
};

}  // namespace dsc::nn
