#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "coolcodec/layers.hpp"
#include "coolcodec/model.hpp"

namespace coolcodec {

// ---------------------------------------------------------------------------
// Spatial context geometry: the N causal offsets nearest to the current
// position (Euclidean), ties broken by (dy, dx) lexicographic order. Causal
// means dy < 0, or dy == 0 and dx < 0 (raster order).
// ---------------------------------------------------------------------------

struct ContextOffsets {
    std::vector<std::pair<int, int>> off;  // (dy, dx)
    int pad = 0;                           // max |dy| / |dx|, padding radius
};

inline ContextOffsets make_context_offsets(int count) {
    struct Cand { int d2, dy, dx; };
    std::vector<Cand> cands;
    const int radius = 8;
    for (int dy = -radius; dy <= 0; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
            if (dy == 0 && dx >= 0) continue;
            cands.push_back({dy * dy + dx * dx, dy, dx});
        }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.d2 != b.d2) return a.d2 < b.d2;
        if (a.dy != b.dy) return a.dy < b.dy;
        return a.dx < b.dx;
    });
    if (count > int(cands.size())) throw ConfigError("spatial context too large");
    ContextOffsets ctx;
    for (int i = 0; i < count; ++i) {
        ctx.off.emplace_back(cands[i].dy, cands[i].dx);
        ctx.pad = std::max({ctx.pad, -cands[i].dy, std::abs(cands[i].dx)});
    }
    return ctx;
}

// ---------------------------------------------------------------------------
// Parameter views. The compute kernels below are templated on the scalar type
// so the test suite can instantiate them in double precision; float views are
// built straight from a DecoderModel.
// ---------------------------------------------------------------------------

template <typename T>
struct ArmView {
    int d = 0, w = 0;
    const T *w1 = nullptr, *b1 = nullptr;  // [w][d], [w]
    const T *w2 = nullptr, *b2 = nullptr;  // [w][w]
    const T *w3 = nullptr, *b3 = nullptr;  // [2][w]
    const T* stab = nullptr;               // [2][d], null when disabled
    T *dw1 = nullptr, *db1 = nullptr, *dw2 = nullptr, *db2 = nullptr;
    T *dw3 = nullptr, *db3 = nullptr, *dstab = nullptr;
};

template <typename T>
struct IfceView {
    int rdim = 0, fdim = 0;
    const T *w = nullptr, *b = nullptr;  // [f][r], [f]
    T *dw = nullptr, *db = nullptr;
};

inline ArmView<float> make_arm_view(DecoderModel& m, bool with_grads) {
    ArmView<float> v;
    v.d = m.arm.input_dim;
    v.w = m.arm.width;
    v.w1 = m.arm.l1.w.v.data(); v.b1 = m.arm.l1.b.v.data();
    v.w2 = m.arm.l2.w.v.data(); v.b2 = m.arm.l2.b.v.data();
    v.w3 = m.arm.head.w.v.data(); v.b3 = m.arm.head.b.v.data();
    v.stab = m.arm.use_stab ? m.arm.stab.v.data() : nullptr;
    if (with_grads) {
        v.dw1 = m.arm.l1.w.g.data(); v.db1 = m.arm.l1.b.g.data();
        v.dw2 = m.arm.l2.w.g.data(); v.db2 = m.arm.l2.b.g.data();
        v.dw3 = m.arm.head.w.g.data(); v.db3 = m.arm.head.b.g.data();
        v.dstab = m.arm.use_stab ? m.arm.stab.g.data() : nullptr;
    }
    return v;
}

inline std::vector<IfceView<float>> make_ifce_views(DecoderModel& m, bool with_grads) {
    std::vector<IfceView<float>> out;
    for (auto& p : m.ifce) {
        IfceView<float> v;
        v.rdim = p.map.in;
        v.fdim = p.map.out;
        v.w = p.map.w.v.data();
        v.b = p.map.b.v.data();
        if (with_grads) { v.dw = p.map.w.g.data(); v.db = p.map.b.g.data(); }
        out.push_back(v);
    }
    return out;
}

// ---------------------------------------------------------------------------
// ARM head: raw = trunk(c) + stabilizer(c); mu = raw0,
// sigma = clamp(exp(raw1), sigma_min, sigma_max).
// ---------------------------------------------------------------------------

template <typename T>
inline void arm_forward_single(const ArmView<T>& a, const T* ctx, T& mu, T& sigma) {
    T h1[kMaxFanOut], h2[kMaxFanOut], raw[2];
    for (int j = 0; j < a.w; ++j) {
        T acc = a.b1[j];
        const T* wr = a.w1 + size_t(j) * a.d;
        for (int k = 0; k < a.d; ++k) acc += wr[k] * ctx[k];
        h1[j] = acc > T(0) ? acc : T(0);
    }
    for (int j = 0; j < a.w; ++j) {
        T acc = a.b2[j];
        const T* wr = a.w2 + size_t(j) * a.w;
        for (int k = 0; k < a.w; ++k) acc += wr[k] * h1[k];
        h2[j] = acc > T(0) ? acc : T(0);
    }
    for (int j = 0; j < 2; ++j) {
        T acc = a.b3[j];
        const T* wr = a.w3 + size_t(j) * a.w;
        for (int k = 0; k < a.w; ++k) acc += wr[k] * h2[k];
        if (a.stab) {
            const T* sr = a.stab + size_t(j) * a.d;
            for (int k = 0; k < a.d; ++k) acc += sr[k] * ctx[k];
        }
        raw[j] = acc;
    }
    mu = raw[0];
    sigma = std::min(T(kSigmaMax), std::max(T(kSigmaMin), cc_exp(raw[1])));
}

// Causal gather on an unpadded grid; out-of-bounds contributes 0.
template <typename T, typename V>
inline void extract_spatial_context(const V* grid, int rows, int cols, int r, int c,
                                    const ContextOffsets& ctx, T* out) {
    (void)rows;
    for (size_t o = 0; o < ctx.off.size(); ++o) {
        const int rr = r + ctx.off[o].first;
        const int cc = c + ctx.off[o].second;
        out[o] = (rr >= 0 && cc >= 0 && cc < cols) ? T(grid[size_t(rr) * cols + cc]) : T(0);
    }
}

// ---------------------------------------------------------------------------
// Padded grid buffer used by both the training rate pass and the synthesis
// input. Borders stay zero so causal gathers never branch.
// ---------------------------------------------------------------------------

template <typename T>
struct PaddedGrid {
    int rows = 0, cols = 0, pad = 0, level = 0;
    bool hyper = false;
    std::vector<T> val, grad;

    int stride() const { return cols + 2 * pad; }
    size_t index(int r, int c) const { return size_t(r + pad) * stride() + (c + pad); }
    T* v_at(int r, int c) { return val.data() + index(r, c); }
    const T* v_at(int r, int c) const { return val.data() + index(r, c); }
    T* g_at(int r, int c) { return grad.data() + index(r, c); }

    void resize(int rows_, int cols_, int pad_, int level_, bool hyper_) {
        rows = rows_; cols = cols_; pad = pad_; level = level_; hyper = hyper_;
        val.assign(size_t(rows + 2 * pad) * stride(), T(0));
        grad.assign(val.size(), T(0));
    }
    void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

// ---------------------------------------------------------------------------
// Batched rate pass over all grids in decode order. Returns the total rate in
// bits; with a non-zero upstream it also backpropagates upstream * d(bits)
// into the ARM/IFCE parameter views and (unless latent_grads is off, as in the
// hardround stage) into the grids' padded gradient buffers.
// ---------------------------------------------------------------------------

template <typename T>
inline double rate_pass(std::vector<PaddedGrid<T>>& grids, const ContextOffsets& ctx,
                        const ArmView<T>& arm, const std::vector<IfceView<T>>& ifces,
                        const std::vector<int>& ifce_slot, int hyper_count,
                        T upstream, bool latent_grads = true) {
    const int d = arm.d, w = arm.w;
    const int s_dim = int(ctx.off.size());
    const bool bwd = upstream != T(0);
    int max_cols = 1;
    for (const auto& g : grids) max_cols = std::max(max_cols, g.cols);
    const size_t n_max = size_t(max_cols);

    // padded weight copies for the unrolled gemms
    std::vector<T> w1t, w2t, w3t, stabt, w1p, w2p, w3p, stabp;
    transpose_pad(arm.w1, w1t, w, d);
    transpose_pad(arm.w2, w2t, w, w);
    transpose_pad(arm.w3, w3t, 2, w);
    copy_pad_rows(arm.w1, w1p, w, d);
    copy_pad_rows(arm.w2, w2p, w, w);
    copy_pad_rows(arm.w3, w3p, 2, w);
    if (arm.stab) {
        transpose_pad(arm.stab, stabt, 2, d);
        copy_pad_rows(arm.stab, stabp, 2, d);
    }

    std::vector<T> C(n_max * d), H1(n_max * w), H2(n_max * w), raw(n_max * 2);
    std::vector<T> mu(n_max), sig(n_max), e1(n_max), e2(n_max), pr(n_max), bitsrow(n_max);
    std::vector<T> dC(n_max * d), dH1(n_max * w), dH2(n_max * w), draw(n_max * 2);
    std::vector<T> R, F, dR, dF, wft, wfp;

    double total_bits = 0.0;

    for (size_t gi = 0; gi < grids.size(); ++gi) {
        auto& g = grids[gi];
        const int n = g.cols;
        const int slot = ifce_slot[gi];
        const IfceView<T>* fv = slot >= 0 ? &ifces[slot] : nullptr;
        const int rdim = fv ? fv->rdim : 0;
        const int fdim = fv ? fv->fdim : 0;
        if (fv) {
            R.assign(size_t(n) * rdim, T(0));
            F.assign(size_t(n) * fdim, T(0));
            if (bwd) { dR.assign(size_t(n) * rdim, T(0)); dF.assign(size_t(n) * fdim, T(0)); }
            transpose_pad(fv->w, wft, fdim, rdim);
            copy_pad_rows(fv->w, wfp, fdim, rdim);
        } else if (d > s_dim) {
            // unequipped grid: inter-feature context is zero
            for (int i = 0; i < n; ++i)
                for (int j = s_dim; j < d; ++j) C[size_t(i) * d + j] = T(0);
        }
        (void)hyper_count;

        for (int r = 0; r < g.rows; ++r) {
            // context gather: spatial offsets from this grid's padded values
            for (int o = 0; o < s_dim; ++o) {
                const T* src = g.v_at(r + ctx.off[o].first, ctx.off[o].second);
                for (int i = 0; i < n; ++i) C[size_t(i) * d + o] = src[i];
            }
            if (fv) {
                for (int j = 0; j < rdim; ++j) {
                    const auto& s = grids[j];
                    const int sh = s.level - g.level;
                    const T* srow = s.v_at(r >> sh, 0);
                    for (int i = 0; i < n; ++i) R[size_t(i) * rdim + j] = srow[i >> sh];
                }
                gemm_xwt_fast(R.data(), wft, fv->b, F.data(), n, rdim, fdim);
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < fdim; ++j) C[size_t(i) * d + s_dim + j] = F[size_t(i) * fdim + j];
            }

            gemm_xwt_fast(C.data(), w1t, arm.b1, H1.data(), n, d, w);
            relu_inplace(H1.data(), size_t(n) * w);
            gemm_xwt_fast(H1.data(), w2t, arm.b2, H2.data(), n, w, w);
            relu_inplace(H2.data(), size_t(n) * w);
            gemm_xwt_fast(H2.data(), w3t, arm.b3, raw.data(), n, w, 2);
            if (arm.stab) gemm_xwt_fast(C.data(), stabt, nullptr, raw.data(), n, d, 2, true);

            const T* v = g.v_at(r, 0);
            for (int i = 0; i < n; ++i) {
                const T m = raw[size_t(i) * 2];
                const T sg = std::min(T(kSigmaMax), std::max(T(kSigmaMin), cc_exp(raw[size_t(i) * 2 + 1])));
                mu[i] = m;
                sig[i] = sg;
                const T b = sg * T(kInvSqrt2);
                const T u = std::fabs(v[i] - m);
                const T x1 = cc_exp(-(u + T(0.5)) / b);
                const T x2 = cc_exp(-std::fabs(u - T(0.5)) / b);
                const T p = u >= T(0.5) ? T(0.5) * (x2 - x1) : T(1) - T(0.5) * (x1 + x2);
                e1[i] = x1;
                e2[i] = x2;
                pr[i] = p;
                bitsrow[i] = -cc_log2(std::max(p, T(kProbFloor)));
            }
            total_bits += block_sum(bitsrow.data(), size_t(n));
            if (!bwd) continue;

            T* gv = latent_grads ? g.g_at(r, 0) : nullptr;
            for (int i = 0; i < n; ++i) {
                T dmu = T(0), dsr = T(0);
                const T p = pr[i];
                if (p > T(kProbFloor)) {
                    const T b = sig[i] * T(kInvSqrt2);
                    const T t = v[i] - mu[i];
                    const T u = std::fabs(t);
                    const T dbits_dp = -T(1) / (p * T(0.6931471805599453));
                    const T dp_du = (e1[i] - e2[i]) / (T(2) * b);
                    const T sgn = t > T(0) ? T(1) : (t < T(0) ? T(-1) : T(0));
                    const T dp_db = -((u + T(0.5)) * e1[i] - (u - T(0.5)) * e2[i]) / (T(2) * b * b);
                    const T up = upstream * dbits_dp;
                    dmu = -up * dp_du * sgn;
                    if (sig[i] > T(kSigmaMin) && sig[i] < T(kSigmaMax))
                        dsr = up * dp_db * T(kInvSqrt2) * sig[i];
                    if (gv) gv[i] += up * dp_du * sgn;  // gradient on the coded value itself
                }
                draw[size_t(i) * 2] = dmu;
                draw[size_t(i) * 2 + 1] = dsr;
            }

            // head (+stabilizer) backward
            gemm_xwt_fast(draw.data(), w3p, nullptr, dH2.data(), n, 2, w);
            relu_backward_from_out(H2.data(), dH2.data(), size_t(n) * w);
            gemm_add_dw(H2.data(), draw.data(), arm.dw3, arm.db3, n, w, 2);
            gemm_xwt_fast(dH2.data(), w2p, nullptr, dH1.data(), n, w, w);
            relu_backward_from_out(H1.data(), dH1.data(), size_t(n) * w);
            gemm_add_dw(H1.data(), dH2.data(), arm.dw2, arm.db2, n, w, w);
            gemm_xwt_fast(dH1.data(), w1p, nullptr, dC.data(), n, w, d);
            gemm_add_dw(C.data(), dH1.data(), arm.dw1, arm.db1, n, d, w);
            if (arm.stab) {
                gemm_xwt_fast(draw.data(), stabp, nullptr, dC.data(), n, 2, d, true);
                gemm_add_dw(C.data(), draw.data(), arm.dstab, nullptr, n, d, 2);
            }

            if (latent_grads) {
                for (int o = 0; o < s_dim; ++o) {
                    T* dst = g.g_at(r + ctx.off[o].first, ctx.off[o].second);
                    for (int i = 0; i < n; ++i) dst[i] += dC[size_t(i) * d + o];
                }
            }
            if (fv) {
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < fdim; ++j) dF[size_t(i) * fdim + j] = dC[size_t(i) * d + s_dim + j];
                gemm_add_dw(R.data(), dF.data(), fv->dw, fv->db, n, rdim, fdim);
                if (latent_grads) {
                    std::fill(dR.begin(), dR.begin() + size_t(n) * rdim, T(0));
                    gemm_xwt_fast(dF.data(), wfp, nullptr, dR.data(), n, fdim, rdim, true);
                    for (int j = 0; j < rdim; ++j) {
                        auto& s = grids[j];
                        const int sh = s.level - g.level;
                        T* drow = s.g_at(r >> sh, 0);
                        for (int i = 0; i < n; ++i) drow[i >> sh] += dR[size_t(i) * rdim + j];
                    }
                }
            }
        }
    }
    return total_bits;
}

// ---------------------------------------------------------------------------
// Exact (sequential, double-accumulated) rate of the quantized latents; the
// reference the range-coded payload is checked against.
// ---------------------------------------------------------------------------

inline double total_rate_bits(const LatentSet& set, DecoderModel& m, const ContextOffsets& ctx) {
    const auto arm = make_arm_view(m, false);
    const auto ifces = make_ifce_views(m, false);
    std::vector<float> cbuf(size_t(arm.d), 0.0f);
    double bits = 0.0;
    for (size_t gi = 0; gi < set.grids.size(); ++gi) {
        const auto& g = set.grids[gi];
        const int slot = g.hyper ? -1 : m.ifce_slot(g.level);
        const int rdim = slot >= 0 ? ifces[slot].rdim : 0;
        for (int r = 0; r < g.rows; ++r)
            for (int c = 0; c < g.cols; ++c) {
                extract_spatial_context(g.q.data(), g.rows, g.cols, r, c, ctx, cbuf.data());
                for (int j = int(ctx.off.size()); j < arm.d; ++j) cbuf[j] = 0.0f;
                if (slot >= 0) {
                    float rvec[kMaxFanOut];
                    for (int j = 0; j < rdim; ++j) {
                        const auto& s = set.grids[j];
                        const int sh = s.level - g.level;
                        rvec[j] = float(s.q[size_t(r >> sh) * s.cols + (c >> sh)]);
                    }
                    const auto& fv = ifces[slot];
                    for (int j = 0; j < fv.fdim; ++j) {
                        float acc = fv.b[j];
                        const float* wr = fv.w + size_t(j) * rdim;
                        for (int k = 0; k < rdim; ++k) acc += wr[k] * rvec[k];
                        cbuf[ctx.off.size() + j] = acc;
                    }
                }
                float mu, sigma;
                arm_forward_single(arm, cbuf.data(), mu, sigma);
                bits += double(laplace_bits(float(g.q[size_t(r) * g.cols + c]), mu, sigma));
            }
    }
    return bits;
}

}  // namespace coolcodec
