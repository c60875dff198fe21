#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <type_traits>
#include <vector>

#include "coolcodec/mathutil.hpp"

// Per-layer forward/backward kernels for the fixed decoder graph. All kernels
// are templated on the scalar type: float in production, double when the test
// suite finite-differences them. Backward kernels accumulate (+=) into their
// gradient outputs so shared tensors collect contributions from every use.

namespace coolcodec {

inline constexpr int kMaxFanOut = 64;  // widest layer across all presets

// y[n,m] = x[n,k] * wt[k,m] (+ bias), wt stored k-major (transposed weights).
// With accumulate, adds on top of existing y (bias must then be null).
template <typename T>
inline void gemm_xwt(const T* x, const T* wt, const std::type_identity_t<T>* bias, T* y,
                     int n, int k, int m, bool accumulate = false) {
    assert(m <= kMaxFanOut);
    for (int i = 0; i < n; ++i) {
        T acc[kMaxFanOut];
        const T* xi = x + size_t(i) * k;
        T* yi = y + size_t(i) * m;
        if (accumulate) {
            for (int j = 0; j < m; ++j) acc[j] = yi[j];
        } else if (bias) {
            for (int j = 0; j < m; ++j) acc[j] = bias[j];
        } else {
            for (int j = 0; j < m; ++j) acc[j] = T(0);
        }
        for (int kk = 0; kk < k; ++kk) {
            const T xv = xi[kk];
            const T* wr = wt + size_t(kk) * m;
            for (int j = 0; j < m; ++j) acc[j] += xv * wr[j];
        }
        for (int j = 0; j < m; ++j) yi[j] = acc[j];
    }
}

// Fast path for the hot batched matmuls: weights transposed and padded to a
// fixed stride (multiple of the vector width), rows unrolled by 4. Same
// contract as gemm_xwt otherwise.
template <typename T, int MPAD>
inline void gemm_xwt_pad(const T* x, const T* wt, const std::type_identity_t<T>* bias, T* y,
                         int n, int k, int m, bool accumulate = false) {
    assert(m <= MPAD);
    constexpr int kRows = 4;
    int i = 0;
    for (; i + kRows <= n; i += kRows) {
        T acc[kRows][MPAD];
        const T* xr[kRows];
        for (int r = 0; r < kRows; ++r) {
            xr[r] = x + size_t(i + r) * k;
            if (accumulate) {
                const T* yr = y + size_t(i + r) * m;
                for (int j = 0; j < MPAD; ++j) acc[r][j] = j < m ? yr[j] : T(0);
            } else if (bias) {
                for (int j = 0; j < MPAD; ++j) acc[r][j] = j < m ? bias[j] : T(0);
            } else {
                for (int j = 0; j < MPAD; ++j) acc[r][j] = T(0);
            }
        }
        for (int kk = 0; kk < k; ++kk) {
            const T* wr = wt + size_t(kk) * MPAD;
            for (int r = 0; r < kRows; ++r) {
                const T a = xr[r][kk];
                for (int j = 0; j < MPAD; ++j) acc[r][j] += a * wr[j];
            }
        }
        for (int r = 0; r < kRows; ++r)
            for (int j = 0; j < m; ++j) y[size_t(i + r) * m + j] = acc[r][j];
    }
    for (; i < n; ++i) {
        T acc[MPAD];
        const T* xi = x + size_t(i) * k;
        T* yi = y + size_t(i) * m;
        if (accumulate) {
            for (int j = 0; j < MPAD; ++j) acc[j] = j < m ? yi[j] : T(0);
        } else if (bias) {
            for (int j = 0; j < MPAD; ++j) acc[j] = j < m ? bias[j] : T(0);
        } else {
            for (int j = 0; j < MPAD; ++j) acc[j] = T(0);
        }
        for (int kk = 0; kk < k; ++kk) {
            const T a = xi[kk];
            const T* wr = wt + size_t(kk) * MPAD;
            for (int j = 0; j < MPAD; ++j) acc[j] += a * wr[j];
        }
        for (int j = 0; j < m; ++j) yi[j] = acc[j];
    }
}

inline int gemm_pad_dim(int m) { return m <= 16 ? 16 : m <= 32 ? 32 : m <= 48 ? 48 : 64; }

// w is [m][k]; wt_pad becomes [k][pad(m)] zero-filled.
template <typename T>
inline void transpose_pad(const T* w, std::vector<T>& wt_pad, int m, int k) {
    const int mp = gemm_pad_dim(m);
    wt_pad.assign(size_t(k) * mp, T(0));
    for (int j = 0; j < m; ++j)
        for (int kk = 0; kk < k; ++kk) wt_pad[size_t(kk) * mp + j] = w[size_t(j) * k + kk];
}

// w is [m][k], copied row-wise into stride pad(k) (for the dX backward gemm).
template <typename T>
inline void copy_pad_rows(const T* w, std::vector<T>& w_pad, int m, int k) {
    const int kp = gemm_pad_dim(k);
    w_pad.assign(size_t(m) * kp, T(0));
    for (int j = 0; j < m; ++j)
        for (int kk = 0; kk < k; ++kk) w_pad[size_t(j) * kp + kk] = w[size_t(j) * k + kk];
}

template <typename T>
inline void gemm_xwt_fast(const T* x, const std::vector<T>& wt_pad,
                          const std::type_identity_t<T>* bias, T* y,
                          int n, int k, int m, bool accumulate = false) {
    switch (gemm_pad_dim(m)) {
        case 16: gemm_xwt_pad<T, 16>(x, wt_pad.data(), bias, y, n, k, m, accumulate); break;
        case 32: gemm_xwt_pad<T, 32>(x, wt_pad.data(), bias, y, n, k, m, accumulate); break;
        case 48: gemm_xwt_pad<T, 48>(x, wt_pad.data(), bias, y, n, k, m, accumulate); break;
        default: gemm_xwt_pad<T, 64>(x, wt_pad.data(), bias, y, n, k, m, accumulate); break;
    }
}

// dw[m,k] += sum_n dy[n,m] * x[n,k];  db[m] += sum_n dy[n,m]
template <typename T>
inline void gemm_add_dw(const T* x, const T* dy, T* dw, std::type_identity_t<T>* db, int n, int k, int m) {
    for (int i = 0; i < n; ++i) {
        const T* xi = x + size_t(i) * k;
        const T* di = dy + size_t(i) * m;
        for (int j = 0; j < m; ++j) {
            const T dv = di[j];
            T* dwr = dw + size_t(j) * k;
            for (int kk = 0; kk < k; ++kk) dwr[kk] += dv * xi[kk];
        }
        if (db)
            for (int j = 0; j < m; ++j) db[j] += di[j];
    }
}

template <typename T>
inline void transpose(const T* w, T* wt, int m, int k) {
    for (int j = 0; j < m; ++j)
        for (int kk = 0; kk < k; ++kk) wt[size_t(kk) * m + j] = w[size_t(j) * k + kk];
}

template <typename T>
inline void relu_inplace(T* x, size_t n) {
    for (size_t i = 0; i < n; ++i) x[i] = x[i] > T(0) ? x[i] : T(0);
}

// Mask gradient with the cached post-activation output.
template <typename T>
inline void relu_backward_from_out(const T* out, T* d, size_t n) {
    for (size_t i = 0; i < n; ++i) d[i] = out[i] > T(0) ? d[i] : T(0);
}

// ---------------------------------------------------------------------------
// Pointwise 1x1 convolution over planar (C, npix) data.
// ---------------------------------------------------------------------------

inline constexpr size_t kPixBlock = 4096;  // planes stay cache-resident per block

// Deterministic vector-friendly sum: 16 explicit lanes, folded in double.
template <typename T>
inline double block_sum(const T* v, size_t n) {
    T lanes[16] = {};
    size_t p = 0;
    for (; p + 16 <= n; p += 16)
        for (int l = 0; l < 16; ++l) lanes[l] += v[p + l];
    double acc = 0.0;
    for (int l = 0; l < 16; ++l) acc += double(lanes[l]);
    for (; p < n; ++p) acc += double(v[p]);
    return acc;
}

// Same lane structure for a product sum: sum_i a[i] * b[i].
template <typename T>
inline double block_dot(const T* a, const T* b, size_t n) {
    T lanes[16] = {};
    size_t p = 0;
    for (; p + 16 <= n; p += 16)
        for (int l = 0; l < 16; ++l) lanes[l] += a[p + l] * b[p + l];
    double acc = 0.0;
    for (int l = 0; l < 16; ++l) acc += double(lanes[l]);
    for (; p < n; ++p) acc += double(a[p]) * double(b[p]);
    return acc;
}

template <typename T>
inline void conv1x1_forward(const T* x, const T* w, const std::type_identity_t<T>* bias, T* y,
                            int cin, int cout, size_t npix, bool accumulate = false) {
    for (size_t p0 = 0; p0 < npix; p0 += kPixBlock) {
        const size_t pb = std::min(kPixBlock, npix - p0);
        for (int co = 0; co < cout; ++co) {
            T* yc = y + size_t(co) * npix + p0;
            if (!accumulate) {
                const T b0 = bias ? bias[co] : T(0);
                for (size_t p = 0; p < pb; ++p) yc[p] = b0;
            }
            for (int ci = 0; ci < cin; ++ci) {
                const T wv = w[size_t(co) * cin + ci];
                const T* xc = x + size_t(ci) * npix + p0;
                for (size_t p = 0; p < pb; ++p) yc[p] += wv * xc[p];
            }
        }
    }
}

template <typename T>
inline void conv1x1_backward(const T* x, const T* w, const T* dy,
                             std::type_identity_t<T>* dx, std::type_identity_t<T>* dw,
                             std::type_identity_t<T>* db, int cin, int cout, size_t npix) {
    std::vector<double> dw_acc(dw ? size_t(cout) * cin : 0, 0.0);
    std::vector<double> db_acc(db ? size_t(cout) : 0, 0.0);
    for (size_t p0 = 0; p0 < npix; p0 += kPixBlock) {
        const size_t pb = std::min(kPixBlock, npix - p0);
        if (dx) {
            for (int ci = 0; ci < cin; ++ci) {
                T* dxc = dx + size_t(ci) * npix + p0;
                for (int co = 0; co < cout; ++co) {
                    const T wv = w[size_t(co) * cin + ci];
                    const T* dyc = dy + size_t(co) * npix + p0;
                    for (size_t p = 0; p < pb; ++p) dxc[p] += wv * dyc[p];
                }
            }
        }
        if (dw) {
            for (int co = 0; co < cout; ++co) {
                const T* dyc = dy + size_t(co) * npix + p0;
                for (int ci = 0; ci < cin; ++ci)
                    dw_acc[size_t(co) * cin + ci] += block_dot(dyc, x + size_t(ci) * npix + p0, pb);
            }
        }
        if (db) {
            for (int co = 0; co < cout; ++co)
                db_acc[size_t(co)] += block_sum(dy + size_t(co) * npix + p0, pb);
        }
    }
    if (dw)
        for (size_t i = 0; i < dw_acc.size(); ++i) dw[i] += T(dw_acc[i]);
    if (db)
        for (size_t i = 0; i < db_acc.size(); ++i) db[i] += T(db_acc[i]);
}

// ---------------------------------------------------------------------------
// 3x3 convolution over planar (C, h, w) data with replicate padding.
// Kernel layout: w[co][ci][3*3].
// ---------------------------------------------------------------------------

template <typename T>
inline void conv3x3_forward(const T* x, const T* w, const std::type_identity_t<T>* bias, T* y,
                            int cin, int cout, int h, int wd) {
    for (int co = 0; co < cout; ++co) {
        const T b0 = bias ? bias[co] : T(0);
        for (int r = 0; r < h; ++r) {
            T* yr = y + (size_t(co) * h + r) * wd;
            for (int c = 0; c < wd; ++c) yr[c] = b0;
        }
        for (int ci = 0; ci < cin; ++ci) {
            const T* k = w + (size_t(co) * cin + ci) * 9;
            for (int r = 0; r < h; ++r) {
                const int rm = r > 0 ? r - 1 : 0;
                const int rp = r < h - 1 ? r + 1 : h - 1;
                const T* x0 = x + (size_t(ci) * h + rm) * wd;
                const T* x1 = x + (size_t(ci) * h + r) * wd;
                const T* x2 = x + (size_t(ci) * h + rp) * wd;
                T* yr = y + (size_t(co) * h + r) * wd;
                if (wd >= 3) {
                    yr[0] += k[0] * x0[0] + k[1] * x0[0] + k[2] * x0[1] +
                             k[3] * x1[0] + k[4] * x1[0] + k[5] * x1[1] +
                             k[6] * x2[0] + k[7] * x2[0] + k[8] * x2[1];
                    for (int c = 1; c < wd - 1; ++c) {
                        yr[c] += k[0] * x0[c - 1] + k[1] * x0[c] + k[2] * x0[c + 1] +
                                 k[3] * x1[c - 1] + k[4] * x1[c] + k[5] * x1[c + 1] +
                                 k[6] * x2[c - 1] + k[7] * x2[c] + k[8] * x2[c + 1];
                    }
                    const int c = wd - 1;
                    yr[c] += k[0] * x0[c - 1] + k[1] * x0[c] + k[2] * x0[c] +
                             k[3] * x1[c - 1] + k[4] * x1[c] + k[5] * x1[c] +
                             k[6] * x2[c - 1] + k[7] * x2[c] + k[8] * x2[c];
                } else {
                    for (int c = 0; c < wd; ++c) {
                        const int cm = c > 0 ? c - 1 : 0;
                        const int cp = c < wd - 1 ? c + 1 : wd - 1;
                        yr[c] += k[0] * x0[cm] + k[1] * x0[c] + k[2] * x0[cp] +
                                 k[3] * x1[cm] + k[4] * x1[c] + k[5] * x1[cp] +
                                 k[6] * x2[cm] + k[7] * x2[c] + k[8] * x2[cp];
                    }
                }
            }
        }
    }
}

template <typename T>
inline void conv3x3_backward(const T* x, const T* w, const T* dy,
                             std::type_identity_t<T>* dx, std::type_identity_t<T>* dw,
                             std::type_identity_t<T>* db, int cin, int cout, int h, int wd) {
    for (int co = 0; co < cout; ++co) {
        for (int r = 0; r < h; ++r) {
            const int rm = r > 0 ? r - 1 : 0;
            const int rp = r < h - 1 ? r + 1 : h - 1;
            const T* dyr = dy + (size_t(co) * h + r) * wd;
            for (int ci = 0; ci < cin; ++ci) {
                const T* k = w + (size_t(co) * cin + ci) * 9;
                T* dk = dw ? dw + (size_t(co) * cin + ci) * 9 : nullptr;
                const T* x0 = x + (size_t(ci) * h + rm) * wd;
                const T* x1 = x + (size_t(ci) * h + r) * wd;
                const T* x2 = x + (size_t(ci) * h + rp) * wd;
                T* d0 = dx ? dx + (size_t(ci) * h + rm) * wd : nullptr;
                T* d1 = dx ? dx + (size_t(ci) * h + r) * wd : nullptr;
                T* d2 = dx ? dx + (size_t(ci) * h + rp) * wd : nullptr;
                for (int c = 0; c < wd; ++c) {
                    const int cm = c > 0 ? c - 1 : 0;
                    const int cp = c < wd - 1 ? c + 1 : wd - 1;
                    const T g = dyr[c];
                    if (dx) {
                        d0[cm] += k[0] * g; d0[c] += k[1] * g; d0[cp] += k[2] * g;
                        d1[cm] += k[3] * g; d1[c] += k[4] * g; d1[cp] += k[5] * g;
                        d2[cm] += k[6] * g; d2[c] += k[7] * g; d2[cp] += k[8] * g;
                    }
                    if (dk) {
                        dk[0] += g * x0[cm]; dk[1] += g * x0[c]; dk[2] += g * x0[cp];
                        dk[3] += g * x1[cm]; dk[4] += g * x1[c]; dk[5] += g * x1[cp];
                        dk[6] += g * x2[cm]; dk[7] += g * x2[c]; dk[8] += g * x2[cp];
                    }
                }
            }
            if (db) {
                double acc = 0.0;
                for (int c = 0; c < wd; ++c) acc += double(dyr[c]);
                db[co] += T(acc);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// x2 transposed convolution, separable and symmetric: the 8-tap kernel is
// built from 4 free taps (k8[i] = k4[i], k8[7-i] = k4[i]). Replicate padding,
// output cropped to the requested size. Even outputs t=2u read inputs
// (u-2, u-1, u, u+1) with taps (k4[0], k4[2], k4[3], k4[1]); odd outputs read
// (u-1, u, u+1, u+2) with the mirrored taps.
// ---------------------------------------------------------------------------

template <typename T>
inline void tconv2x_rows_forward(const T* in, int h, int win, int in_stride, T* out, int wout,
                                 const T* k4) {
    assert(wout <= 2 * win);
    for (int r = 0; r < h; ++r) {
        const T* xi = in + size_t(r) * in_stride;
        T* yo = out + size_t(r) * wout;
        for (int t = 0; t < wout; ++t) {
            const int u = t >> 1;
            const int last = win - 1;
            if ((t & 1) == 0) {
                const int a = u >= 2 ? u - 2 : 0;
                const int b = u >= 1 ? u - 1 : 0;
                const int d = u < last ? u + 1 : last;
                yo[t] = k4[0] * xi[a] + k4[2] * xi[b] + k4[3] * xi[u] + k4[1] * xi[d];
            } else {
                const int a = u >= 1 ? u - 1 : 0;
                const int b = u < last ? u + 1 : last;
                const int d = u + 2 < last ? u + 2 : last;
                yo[t] = k4[1] * xi[a] + k4[3] * xi[u] + k4[2] * xi[b] + k4[0] * xi[d];
            }
        }
    }
}

template <typename T>
inline void tconv2x_rows_backward(const T* in, const T* dout, int h, int win, int in_stride,
                                  int wout, const T* k4, std::type_identity_t<T>* din,
                                  std::type_identity_t<T>* dk4) {
    for (int r = 0; r < h; ++r) {
        const T* xi = in + size_t(r) * in_stride;
        const T* go = dout + size_t(r) * wout;
        T* gi = din ? din + size_t(r) * win : nullptr;
        for (int t = 0; t < wout; ++t) {
            const int u = t >> 1;
            const int last = win - 1;
            const T g = go[t];
            if ((t & 1) == 0) {
                const int a = u >= 2 ? u - 2 : 0;
                const int b = u >= 1 ? u - 1 : 0;
                const int d = u < last ? u + 1 : last;
                if (gi) { gi[a] += k4[0] * g; gi[b] += k4[2] * g; gi[u] += k4[3] * g; gi[d] += k4[1] * g; }
                if (dk4) { dk4[0] += g * xi[a]; dk4[2] += g * xi[b]; dk4[3] += g * xi[u]; dk4[1] += g * xi[d]; }
            } else {
                const int a = u >= 1 ? u - 1 : 0;
                const int b = u < last ? u + 1 : last;
                const int d = u + 2 < last ? u + 2 : last;
                if (gi) { gi[a] += k4[1] * g; gi[u] += k4[3] * g; gi[b] += k4[2] * g; gi[d] += k4[0] * g; }
                if (dk4) { dk4[1] += g * xi[a]; dk4[3] += g * xi[u]; dk4[2] += g * xi[b]; dk4[0] += g * xi[d]; }
            }
        }
    }
}

template <typename T>
inline void tconv2x_cols_forward(const T* in, int hin, int w, T* out, int hout, const T* k4) {
    assert(hout <= 2 * hin);
    for (int t = 0; t < hout; ++t) {
        const int u = t >> 1;
        const int last = hin - 1;
        int ia, ib, ic, id;
        T ca, cb, cc, cd;
        if ((t & 1) == 0) {
            ia = u >= 2 ? u - 2 : 0; ib = u >= 1 ? u - 1 : 0; ic = u; id = u < last ? u + 1 : last;
            ca = k4[0]; cb = k4[2]; cc = k4[3]; cd = k4[1];
        } else {
            ia = u >= 1 ? u - 1 : 0; ib = u; ic = u < last ? u + 1 : last; id = u + 2 < last ? u + 2 : last;
            ca = k4[1]; cb = k4[3]; cc = k4[2]; cd = k4[0];
        }
        const T* r0 = in + size_t(ia) * w;
        const T* r1 = in + size_t(ib) * w;
        const T* r2 = in + size_t(ic) * w;
        const T* r3 = in + size_t(id) * w;
        T* yo = out + size_t(t) * w;
        for (int c = 0; c < w; ++c) yo[c] = ca * r0[c] + cb * r1[c] + cc * r2[c] + cd * r3[c];
    }
}

template <typename T>
inline void tconv2x_cols_backward(const T* in, const T* dout, int hin, int w, int hout,
                                  const T* k4, std::type_identity_t<T>* din,
                                  std::type_identity_t<T>* dk4) {
    for (int t = 0; t < hout; ++t) {
        const int u = t >> 1;
        const int last = hin - 1;
        int idx[4];
        int tap[4];
        if ((t & 1) == 0) {
            idx[0] = u >= 2 ? u - 2 : 0; idx[1] = u >= 1 ? u - 1 : 0; idx[2] = u; idx[3] = u < last ? u + 1 : last;
            tap[0] = 0; tap[1] = 2; tap[2] = 3; tap[3] = 1;
        } else {
            idx[0] = u >= 1 ? u - 1 : 0; idx[1] = u; idx[2] = u < last ? u + 1 : last; idx[3] = u + 2 < last ? u + 2 : last;
            tap[0] = 1; tap[1] = 3; tap[2] = 2; tap[3] = 0;
        }
        const T* go = dout + size_t(t) * w;
        for (int j = 0; j < 4; ++j) {
            const T kv = k4[tap[j]];
            const T* xr = in + size_t(idx[j]) * w;
            T* gr = din ? din + size_t(idx[j]) * w : nullptr;
            double acc = 0.0;
            for (int c = 0; c < w; ++c) {
                if (gr) gr[c] += kv * go[c];
                acc += double(go[c]) * double(xr[c]);
            }
            if (dk4) dk4[tap[j]] += T(acc);
        }
    }
}

// ---------------------------------------------------------------------------
// Single-channel 3x3 convolution with 8-fold symmetric kernel (center, edge,
// corner free parameters), replicate padding.
// ---------------------------------------------------------------------------

template <typename T>
inline void conv3x3_sym_forward(const T* in, int h, int w, T* out, T kc, T ke, T ko) {
    for (int r = 0; r < h; ++r) {
        const int rm = r > 0 ? r - 1 : 0;
        const int rp = r < h - 1 ? r + 1 : h - 1;
        const T* x0 = in + size_t(rm) * w;
        const T* x1 = in + size_t(r) * w;
        const T* x2 = in + size_t(rp) * w;
        T* yr = out + size_t(r) * w;
        for (int c = 0; c < w; ++c) {
            const int cm = c > 0 ? c - 1 : 0;
            const int cp = c < w - 1 ? c + 1 : w - 1;
            yr[c] = kc * x1[c] + ke * (x0[c] + x2[c] + x1[cm] + x1[cp]) +
                    ko * (x0[cm] + x0[cp] + x2[cm] + x2[cp]);
        }
    }
}

template <typename T>
inline void conv3x3_sym_backward(const T* in, const T* dout, int h, int w,
                                 T kc, T ke, T ko, std::type_identity_t<T>* din,
                                 std::type_identity_t<T>* dk /* {c,e,o} */) {
    double ac = 0.0, ae = 0.0, ao = 0.0;
    for (int r = 0; r < h; ++r) {
        const int rm = r > 0 ? r - 1 : 0;
        const int rp = r < h - 1 ? r + 1 : h - 1;
        const T* x0 = in + size_t(rm) * w;
        const T* x1 = in + size_t(r) * w;
        const T* x2 = in + size_t(rp) * w;
        const T* go = dout + size_t(r) * w;
        T* d0 = din ? din + size_t(rm) * w : nullptr;
        T* d1 = din ? din + size_t(r) * w : nullptr;
        T* d2 = din ? din + size_t(rp) * w : nullptr;
        for (int c = 0; c < w; ++c) {
            const int cm = c > 0 ? c - 1 : 0;
            const int cp = c < w - 1 ? c + 1 : w - 1;
            const T g = go[c];
            ac += double(g) * double(x1[c]);
            ae += double(g) * double(x0[c] + x2[c] + x1[cm] + x1[cp]);
            ao += double(g) * double(x0[cm] + x0[cp] + x2[cm] + x2[cp]);
            if (din) {
                d1[c] += kc * g;
                d0[c] += ke * g; d2[c] += ke * g; d1[cm] += ke * g; d1[cp] += ke * g;
                d0[cm] += ko * g; d0[cp] += ko * g; d2[cm] += ko * g; d2[cp] += ko * g;
            }
        }
    }
    if (dk) { dk[0] += T(ac); dk[1] += T(ae); dk[2] += T(ao); }
}

// ---------------------------------------------------------------------------
// Nearest-neighbor upsample; source index = floor(pos * src/dst). Used only in
// the non-differentiated entropy-decode path; training gradient = scatter-sum.
// ---------------------------------------------------------------------------

template <typename T>
inline void nn_upsample_forward(const T* in, int hin, int win, T* out, int hout, int wout) {
    for (int r = 0; r < hout; ++r) {
        const T* src = in + size_t(int(int64_t(r) * hin / hout)) * win;
        T* yo = out + size_t(r) * wout;
        for (int c = 0; c < wout; ++c) yo[c] = src[int(int64_t(c) * win / wout)];
    }
}

template <typename T>
inline void nn_upsample_backward(const T* dout, int hout, int wout, T* din, int hin, int win) {
    for (int r = 0; r < hout; ++r) {
        T* dst = din + size_t(int(int64_t(r) * hin / hout)) * win;
        const T* go = dout + size_t(r) * wout;
        for (int c = 0; c < wout; ++c) dst[int(int64_t(c) * win / wout)] += go[c];
    }
}

// ---------------------------------------------------------------------------
// Softround (temperature-parameterized differentiable rounding):
//   s_T(x) = floor(x) + 1/2 + tanh(d/T) / (2 tanh(1/(2T))),  d = x-floor(x)-1/2
// The floor term takes subgradient 0, so ds/dx = (1-tanh^2(d/T)) / (2T tanh(1/(2T))).
// ---------------------------------------------------------------------------

template <typename T>
inline T softround_denom(T temp) { return T(2) * cc_tanh(T(1) / (T(2) * temp)); }

template <typename T>
inline T softround_value(T x, T temp) {
    const T f = std::floor(x);
    const T d = x - f - T(0.5);
    return f + T(0.5) + cc_tanh(d / temp) / softround_denom(temp);
}

// th_cache stores tanh(d/T) for the backward pass.
template <typename T>
inline void softround_forward(const T* x, T* y, T* th_cache, size_t n, T temp) {
    const T inv_denom = T(1) / softround_denom(temp);
    const T inv_t = T(1) / temp;
    for (size_t i = 0; i < n; ++i) {
        const T f = std::floor(x[i]);
        const T d = x[i] - f - T(0.5);
        const T th = cc_tanh(d * inv_t);
        th_cache[i] = th;
        y[i] = f + T(0.5) + th * inv_denom;
    }
}

template <typename T>
inline void softround_backward(const T* dy, const T* th_cache, T* dx, size_t n, T temp) {
    const T scale = T(1) / (temp * softround_denom(temp));
    for (size_t i = 0; i < n; ++i) {
        const T th = th_cache[i];
        dx[i] += dy[i] * (T(1) - th * th) * scale;
    }
}

// Additive zero-mean Gaussian noise keyed by (stream, element index).
// Backward is a pass-through.
template <typename T>
inline void add_noise_forward(const T* x, T* y, size_t n, T sigma, uint64_t stream) {
    for (size_t i = 0; i < n; ++i) y[i] = x[i] + sigma * T(counter_gauss(stream, i));
}

// ---------------------------------------------------------------------------
// Laplace coding cost in bits of value v under L(mu, sigma):
//   bits = -log2(max(F(v-mu+1/2) - F(v-mu-1/2), pfloor)),  scale b = sigma/sqrt(2)
// ---------------------------------------------------------------------------

inline constexpr double kSigmaMin = 0.06;
inline constexpr double kSigmaMax = 256.0;
inline constexpr double kProbFloor = 1.0 / 65536.0;  // 16-bit coder resolution
inline constexpr double kInvSqrt2 = 0.7071067811865476;

template <typename T>
inline T laplace_prob(T v, T mu, T sigma) {
    const T b = sigma * T(kInvSqrt2);
    const T u = std::fabs(v - mu);
    const T e1 = cc_exp(-(u + T(0.5)) / b);
    const T e2 = cc_exp(-std::fabs(u - T(0.5)) / b);
    return u >= T(0.5) ? T(0.5) * (e2 - e1) : T(1) - T(0.5) * (e1 + e2);
}

template <typename T>
inline T laplace_bits(T v, T mu, T sigma) {
    const T p = laplace_prob(v, mu, sigma);
    return -cc_log2(std::max(p, T(kProbFloor)));
}

template <typename T>
inline void laplace_rate_forward(const T* v, const T* mu, const T* sigma, T* bits, size_t n) {
    for (size_t i = 0; i < n; ++i) bits[i] = laplace_bits(v[i], mu[i], sigma[i]);
}

template <typename T>
inline void laplace_rate_backward(const T* v, const T* mu, const T* sigma, const T* dbits,
                                  std::type_identity_t<T>* dv, std::type_identity_t<T>* dmu,
                                  std::type_identity_t<T>* dsigma, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        const T b = sigma[i] * T(kInvSqrt2);
        const T t = v[i] - mu[i];
        const T u = std::fabs(t);
        const T e1 = cc_exp(-(u + T(0.5)) / b);
        const T e2 = cc_exp(-std::fabs(u - T(0.5)) / b);
        const T p = u >= T(0.5) ? T(0.5) * (e2 - e1) : T(1) - T(0.5) * (e1 + e2);
        if (p <= T(kProbFloor)) continue;  // clipped by the floor, no gradient
        const T dbits_dp = -T(1) / (p * T(0.6931471805599453));  // -1/(P ln2)
        const T dp_du = (e1 - e2) / (T(2) * b);
        const T sg = t > T(0) ? T(1) : (t < T(0) ? T(-1) : T(0));
        const T dp_db = -((u + T(0.5)) * e1 - (u - T(0.5)) * e2) / (T(2) * b * b);
        const T up = dbits[i] * dbits_dp;
        if (dv) dv[i] += up * dp_du * sg;
        if (dmu) dmu[i] -= up * dp_du * sg;
        if (dsigma) dsigma[i] += up * dp_db * T(kInvSqrt2);
    }
}

// ---------------------------------------------------------------------------
// Mean squared error with double-precision accumulation.
// ---------------------------------------------------------------------------

template <typename T>
inline double mse_forward(const T* a, const T* b, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double d = double(a[i]) - double(b[i]);
        acc += d * d;
    }
    return acc / double(n);
}

template <typename T>
inline void mse_backward(const T* a, const T* b, double upstream, T* da, size_t n) {
    const T s = T(upstream * 2.0 / double(n));
    for (size_t i = 0; i < n; ++i) da[i] += s * (a[i] - b[i]);
}

// Clamp to [0,1]; training backward treats it as identity (straight-through)
// so saturated pixels keep receiving distortion gradient.
template <typename T>
inline void clamp01_inplace(T* x, size_t n) {
    for (size_t i = 0; i < n; ++i) x[i] = std::min(T(1), std::max(T(0), x[i]));
}

}  // namespace coolcodec
