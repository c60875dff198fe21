#pragma once

#include <type_traits>
#include <vector>

#include "coolcodec/entropy_model.hpp"
#include "coolcodec/layers.hpp"
#include "coolcodec/model.hpp"

namespace coolcodec {

template <typename T>
struct UpsampleStageView {
    const T* k4 = nullptr;  // 4 free taps of the symmetric transposed conv
    const T* r3 = nullptr;  // {center, edge, corner} of the refinement
    T* dk4 = nullptr;
    T* dr3 = nullptr;
};

inline std::vector<UpsampleStageView<float>> make_ups_views(DecoderModel& m, bool grads) {
    std::vector<UpsampleStageView<float>> out;
    for (auto& s : m.ups) {
        UpsampleStageView<float> v;
        v.k4 = s.tconv.v.data();
        v.r3 = s.refine.v.data();
        if (grads) { v.dk4 = s.tconv.g.data(); v.dr3 = s.refine.g.data(); }
        out.push_back(v);
    }
    return out;
}

template <typename T>
struct PlaneRef {
    const T* v = nullptr;
    int stride = 0;
    int rows = 0, cols = 0;
};

// Per-grid, per-stage intermediates kept for the backward pass.
template <typename T>
struct UpsampleCache {
    struct Stage {
        std::vector<T> rowtmp;  // after the row pass: rows_in x cols_out
        std::vector<T> coltmp;  // after the column pass: rows_out x cols_out
        std::vector<T> out;     // after refinement
        int rows_in = 0, cols_in = 0, rows_out = 0, cols_out = 0;
    };
    std::vector<std::vector<Stage>> per_level;  // [level k] -> stages j=k-1..0
};

// Dense representation z has shape (levels, H, W); channel k is main grid k
// lifted through stages k-1 .. 0. Grid 0 passes through unchanged. Cache
// buffers persist across calls.
template <typename T>
inline void upsample_forward(const std::vector<PlaneRef<T>>& mains, int H, int W,
                             const std::vector<UpsampleStageView<T>>& stages,
                             T* z, std::type_identity_t<UpsampleCache<T>>* cache) {
    const int levels = int(mains.size());
    UpsampleCache<T> local;
    UpsampleCache<T>& cc = cache ? *cache : local;
    if (int(cc.per_level.size()) != levels) cc.per_level.resize(size_t(levels));
    for (int r = 0; r < mains[0].rows; ++r)
        for (int c = 0; c < mains[0].cols; ++c)
            z[size_t(r) * W + c] = mains[0].v[size_t(r) * mains[0].stride + c];

    for (int k = 1; k < levels; ++k) {
        auto& sts = cc.per_level[size_t(k)];
        if (int(sts.size()) != k) sts.resize(size_t(k));
        const T* cur = mains[k].v;
        int cur_stride = mains[k].stride;
        int rows_in = mains[k].rows, cols_in = mains[k].cols;
        for (int j = k - 1; j >= 0; --j) {
            auto& st = sts[size_t(k - 1 - j)];
            const int rows_out = ceil_div(H, 1 << j);
            const int cols_out = ceil_div(W, 1 << j);
            st.rows_in = rows_in; st.cols_in = cols_in;
            st.rows_out = rows_out; st.cols_out = cols_out;
            st.rowtmp.resize(size_t(rows_in) * cols_out);
            tconv2x_rows_forward(cur, rows_in, cols_in, cur_stride, st.rowtmp.data(), cols_out,
                                 stages[j].k4);
            st.coltmp.resize(size_t(rows_out) * cols_out);
            tconv2x_cols_forward(st.rowtmp.data(), rows_in, cols_out, st.coltmp.data(), rows_out,
                                 stages[j].k4);
            T* dst = j == 0 ? z + size_t(k) * H * W : (st.out.resize(size_t(rows_out) * cols_out),
                                                       st.out.data());
            conv3x3_sym_forward(st.coltmp.data(), rows_out, cols_out, dst,
                                stages[j].r3[0], stages[j].r3[1], stages[j].r3[2]);
            cur = dst;
            cur_stride = cols_out;
            rows_in = rows_out; cols_in = cols_out;
        }
    }
}

// dmains: per main grid, gradient base pointer + stride (accumulated into).
template <typename T>
struct PlaneGrad {
    T* g = nullptr;
    int stride = 0;
};

template <typename T>
inline void upsample_backward(const std::vector<PlaneRef<T>>& mains, int H, int W,
                              const std::vector<UpsampleStageView<T>>& stages,
                              const UpsampleCache<T>& cache, const T* dz,
                              std::vector<PlaneGrad<T>>& dmains) {
    const int levels = int(mains.size());
    for (int r = 0; r < mains[0].rows; ++r)
        for (int c = 0; c < mains[0].cols; ++c)
            dmains[0].g[size_t(r) * dmains[0].stride + c] += dz[size_t(r) * W + c];

    std::vector<T> dcur, dprev, dcol, drow;
    for (int k = 1; k < levels; ++k) {
        const auto& sts = cache.per_level[size_t(k)];
        dcur.assign(size_t(sts.back().rows_out) * sts.back().cols_out, T(0));
        std::copy(dz + size_t(k) * H * W, dz + size_t(k + 1) * H * W, dcur.begin());
        for (int si = int(sts.size()) - 1; si >= 0; --si) {
            const auto& st = sts[size_t(si)];
            const int j = k - 1 - si;
            dcol.assign(st.coltmp.size(), T(0));
            conv3x3_sym_backward(st.coltmp.data(), dcur.data(), st.rows_out, st.cols_out,
                                 stages[j].r3[0], stages[j].r3[1], stages[j].r3[2],
                                 dcol.data(), stages[j].dr3);
            drow.assign(st.rowtmp.size(), T(0));
            tconv2x_cols_backward(st.rowtmp.data(), dcol.data(), st.rows_in, st.cols_out,
                                  st.rows_out, stages[j].k4, drow.data(), stages[j].dk4);
            // this stage's input: the previous stage's output, or the grid
            const T* stage_in = si > 0 ? sts[size_t(si - 1)].out.data() : mains[k].v;
            const int in_stride = si > 0 ? st.cols_in : mains[k].stride;
            dprev.assign(size_t(st.rows_in) * st.cols_in, T(0));
            tconv2x_rows_backward(stage_in, drow.data(), st.rows_in, st.cols_in, in_stride,
                                  st.cols_out, stages[j].k4, dprev.data(), stages[j].dk4);
            dcur.swap(dprev);
        }
        for (int r = 0; r < mains[k].rows; ++r)
            for (int c = 0; c < mains[k].cols; ++c)
                dmains[k].g[size_t(r) * dmains[k].stride + c] += dcur[size_t(r) * mains[k].cols + c];
    }
}

// ---------------------------------------------------------------------------
// Synthesis: x = clamp01(posts(c2(relu(c1(z)))) + stab(z)). Post filters are
// residual 3x3 convolutions on the RGB channels.
// ---------------------------------------------------------------------------

template <typename T>
struct SynthesisView {
    int L = 0, F = 0, posts = 0;
    const T *c1w = nullptr, *c1b = nullptr;
    const T *c2w = nullptr, *c2b = nullptr;
    const T *pw[2] = {nullptr, nullptr};
    const T *pb[2] = {nullptr, nullptr};
    const T* stab = nullptr;
    T *dc1w = nullptr, *dc1b = nullptr, *dc2w = nullptr, *dc2b = nullptr;
    T *dpw[2] = {nullptr, nullptr}, *dpb[2] = {nullptr, nullptr};
    T* dstab = nullptr;
};

inline SynthesisView<float> make_syn_view(DecoderModel& m, bool grads) {
    SynthesisView<float> v;
    v.L = m.syn.in_ch;
    v.F = m.syn.hidden;
    v.posts = int(m.syn.post_w.size());
    v.c1w = m.syn.c1.w.v.data(); v.c1b = m.syn.c1.b.v.data();
    v.c2w = m.syn.c2.w.v.data(); v.c2b = m.syn.c2.b.v.data();
    for (int i = 0; i < v.posts; ++i) {
        v.pw[i] = m.syn.post_w[i].v.data();
        v.pb[i] = m.syn.post_b[i].v.data();
    }
    v.stab = m.syn.use_stab ? m.syn.stab.v.data() : nullptr;
    if (grads) {
        v.dc1w = m.syn.c1.w.g.data(); v.dc1b = m.syn.c1.b.g.data();
        v.dc2w = m.syn.c2.w.g.data(); v.dc2b = m.syn.c2.b.g.data();
        for (int i = 0; i < v.posts; ++i) {
            v.dpw[i] = m.syn.post_w[i].g.data();
            v.dpb[i] = m.syn.post_b[i].g.data();
        }
        v.dstab = m.syn.use_stab ? m.syn.stab.g.data() : nullptr;
    }
    return v;
}

template <typename T>
struct SynthCache {
    std::vector<T> h1;       // (F, HW), post-ReLU
    std::vector<T> trunk;    // (3, HW) after c2
    std::vector<T> post[2];  // (3, HW) after each residual filter
    std::vector<T> dh1;      // backward scratch
};

template <typename T>
inline void synthesize_forward(const T* z, int L, int H, int W, const SynthesisView<T>& s,
                               T* xhat, std::type_identity_t<SynthCache<T>>* cache,
                               bool clamp = true) {
    const size_t npix = size_t(H) * W;
    SynthCache<T> local;
    SynthCache<T>& c = cache ? *cache : local;
    c.h1.resize(size_t(s.F) * npix);
    c.trunk.resize(3 * npix);
    conv1x1_forward(z, s.c1w, s.c1b, c.h1.data(), L, s.F, npix);
    relu_inplace(c.h1.data(), c.h1.size());
    conv1x1_forward(c.h1.data(), s.c2w, s.c2b, c.trunk.data(), s.F, 3, npix);
    const T* cur = c.trunk.data();
    for (int i = 0; i < s.posts; ++i) {
        c.post[i].resize(3 * npix);
        conv3x3_forward(cur, s.pw[i], s.pb[i], c.post[i].data(), 3, 3, H, W);
        for (size_t p = 0; p < 3 * npix; ++p) c.post[i][p] += cur[p];  // residual
        cur = c.post[i].data();
    }
    std::copy(cur, cur + 3 * npix, xhat);
    if (s.stab) conv1x1_forward(z, s.stab, nullptr, xhat, L, 3, npix, true);
    if (clamp) clamp01_inplace(xhat, 3 * npix);
}

// Straight-through on the clamp: dxhat passes unchanged.
template <typename T>
inline void synthesize_backward(const T* z, int L, int H, int W, const SynthesisView<T>& s,
                                SynthCache<T>& c, const T* dxhat, T* dz) {
    const size_t npix = size_t(H) * W;
    if (s.stab) conv1x1_backward(z, s.stab, dxhat, dz, s.dstab, nullptr, L, 3, npix);
    std::vector<T> dcur(dxhat, dxhat + 3 * npix), dprev;
    for (int i = s.posts - 1; i >= 0; --i) {
        const T* input = i > 0 ? c.post[i - 1].data() : c.trunk.data();
        dprev.assign(3 * npix, T(0));
        conv3x3_backward(input, s.pw[i], dcur.data(), dprev.data(), s.dpw[i], s.dpb[i], 3, 3, H, W);
        for (size_t p = 0; p < 3 * npix; ++p) dprev[p] += dcur[p];  // residual path
        dcur.swap(dprev);
    }
    c.dh1.assign(size_t(s.F) * npix, T(0));
    conv1x1_backward(c.h1.data(), s.c2w, dcur.data(), c.dh1.data(), s.dc2w, s.dc2b, s.F, 3, npix);
    relu_backward_from_out(c.h1.data(), c.dh1.data(), c.dh1.size());
    conv1x1_backward(z, s.c1w, c.dh1.data(), dz, s.dc1w, s.dc1b, L, s.F, npix);
}

// ---------------------------------------------------------------------------
// Analytic decoder complexity in multiply-accumulates per pixel.
// ---------------------------------------------------------------------------

inline double count_macs_per_pixel(const DecoderConfig& cfg, int H, int W) {
    const int levels = latent_levels(H, W);
    const double npix = double(H) * double(W);
    auto grid_pix = [&](int k) {
        return double(ceil_div(H, 1 << k)) * double(ceil_div(W, 1 << k));
    };

    const int d = cfg.arm_input_dim();
    const int w = cfg.arm_width;
    double arm_per_latent = double(d) * w + double(w) * w + 2.0 * w;
    if (cfg.use_stabilizer) arm_per_latent += 2.0 * d;

    double total = 0.0;
    for (int k = 0; k < levels; ++k) total += grid_pix(k) * arm_per_latent;
    if (cfg.use_hyperlatents)
        for (int k = kHyperCoarsestLevel; k < levels; ++k) total += grid_pix(k) * arm_per_latent;
    if (cfg.ifce_dim > 0) {
        const int hyper = cfg.use_hyperlatents ? levels - kHyperCoarsestLevel : 0;
        for (int k = 0; k < std::min(3, levels); ++k) {
            const int rdim = hyper + levels - 1 - k;
            total += grid_pix(k) * double(rdim) * cfg.ifce_dim;
        }
    }
    // upsampling: per stage, 4 MAC per row-pass output, 4 per column-pass
    // output, 9 for the refinement
    for (int k = 1; k < levels; ++k) {
        for (int j = k - 1; j >= 0; --j) {
            const double rows_in = ceil_div(H, 1 << (j + 1));
            const double rows_out = ceil_div(H, 1 << j);
            const double cols_out = ceil_div(W, 1 << j);
            total += rows_in * cols_out * 4.0 + rows_out * cols_out * (4.0 + 9.0);
        }
    }
    double syn_per_pix = double(levels) * cfg.synth_hidden + cfg.synth_hidden * 3.0 +
                         cfg.synth_posts * 81.0;
    if (cfg.use_stabilizer) syn_per_pix += 3.0 * levels;
    total += npix * syn_per_pix;
    return total / npix;
}

}  // namespace coolcodec
