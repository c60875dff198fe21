#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "coolcodec/tensor.hpp"

namespace coolcodec {

// ---------------------------------------------------------------------------
// Adam. Per-element arithmetic is done in double and stored in float; SOAP
// below uses the exact same expressions so that, with rotations pinned to the
// identity, both optimizers produce identical trajectories.
// ---------------------------------------------------------------------------

struct AdamConfig {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

struct AdamState {
    std::vector<float> m, v;
    int64_t t = 0;
    void init(size_t n) {
        m.assign(n, 0.0f);
        v.assign(n, 0.0f);
        t = 0;
    }
};

inline bool grads_finite(const float* g, size_t n) {
    for (size_t i = 0; i < n; ++i)
        if (!std::isfinite(g[i])) return false;
    return true;
}

// Returns false (and leaves everything untouched) on a non-finite gradient.
inline bool adam_step(float* p, const float* g, size_t n, AdamState& st, double lr,
                      const AdamConfig& cfg = {}) {
    if (!grads_finite(g, n)) return false;
    st.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(st.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(st.t));
    for (size_t i = 0; i < n; ++i) {
        const double gi = double(g[i]);
        const double mt = cfg.beta1 * double(st.m[i]) + (1.0 - cfg.beta1) * gi;
        const double vt = cfg.beta2 * double(st.v[i]) + (1.0 - cfg.beta2) * gi * gi;
        st.m[i] = float(mt);
        st.v[i] = float(vt);
        p[i] = float(double(p[i]) - lr * (mt / bc1) / (std::sqrt(vt / bc2) + cfg.eps));
    }
    return true;
}

// ---------------------------------------------------------------------------
// Cyclic Jacobi eigendecomposition for small symmetric matrices. A is
// destroyed; Q receives the eigenvectors as columns.
// ---------------------------------------------------------------------------

inline bool jacobi_eigen(std::vector<double>& a, std::vector<double>& q, int n,
                         int max_sweeps = 32) {
    q.assign(size_t(n) * n, 0.0);
    for (int i = 0; i < n; ++i) q[size_t(i) * n + i] = 1.0;
    if (n == 1) return std::isfinite(a[0]);
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0, diag = 0.0;
        for (int i = 0; i < n; ++i) {
            diag += std::abs(a[size_t(i) * n + i]);
            for (int j = i + 1; j < n; ++j) off += std::abs(a[size_t(i) * n + j]);
        }
        if (!std::isfinite(off) || !std::isfinite(diag)) return false;
        if (off <= 1e-14 * (diag + 1e-300)) return true;
        for (int p = 0; p < n - 1; ++p) {
            for (int r = p + 1; r < n; ++r) {
                const double apq = a[size_t(p) * n + r];
                if (apq == 0.0) continue;
                const double app = a[size_t(p) * n + p];
                const double aqq = a[size_t(r) * n + r];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a[size_t(k) * n + p];
                    const double akq = a[size_t(k) * n + r];
                    a[size_t(k) * n + p] = c * akp - s * akq;
                    a[size_t(k) * n + r] = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a[size_t(p) * n + k];
                    const double aqk = a[size_t(r) * n + k];
                    a[size_t(p) * n + k] = c * apk - s * aqk;
                    a[size_t(r) * n + k] = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double qkp = q[size_t(k) * n + p];
                    const double qkq = q[size_t(k) * n + r];
                    q[size_t(k) * n + p] = c * qkp - s * qkq;
                    q[size_t(k) * n + r] = s * qkp + c * qkq;
                }
            }
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// SOAP: Shampoo-style preconditioner EMAs (GG^T / G^TG) whose eigenbases
// rotate an inner Adam. First moment lives in the original space, second
// moment in the rotated space. pin_identity keeps the rotations at identity
// (the full rotation arithmetic still runs), which reduces the step to Adam.
// ---------------------------------------------------------------------------

struct SoapConfig {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double shampoo_beta = 0.95;
    int update_freq = 10;
    bool pin_identity = false;
};

struct SoapState {
    int rows = 0, cols = 0;
    std::vector<double> lpre, rpre;  // preconditioner EMAs
    std::vector<double> ql, qr;      // orthonormal eigenbases
    std::vector<float> m1;           // first moment, original space
    std::vector<float> v2;           // second moment, rotated space
    int64_t t = 0;
    int eig_failures = 0;

    void init(int r, int c) {
        rows = r;
        cols = c;
        lpre.assign(size_t(r) * r, 0.0);
        rpre.assign(size_t(c) * c, 0.0);
        ql.assign(size_t(r) * r, 0.0);
        qr.assign(size_t(c) * c, 0.0);
        for (int i = 0; i < r; ++i) ql[size_t(i) * r + i] = 1.0;
        for (int i = 0; i < c; ++i) qr[size_t(i) * c + i] = 1.0;
        m1.assign(size_t(r) * c, 0.0f);
        v2.assign(size_t(r) * c, 0.0f);
        t = 0;
        eig_failures = 0;
    }
};

namespace detail {
// out[r,c] = sum_k A[k,r] * B[k,c]  (A^T B), all row-major doubles
inline void matmul_atb(const double* a, const double* b, double* out, int k, int r, int c) {
    for (size_t i = 0; i < size_t(r) * c; ++i) out[i] = 0.0;
    for (int kk = 0; kk < k; ++kk) {
        const double* ar = a + size_t(kk) * r;
        const double* br = b + size_t(kk) * c;
        for (int i = 0; i < r; ++i) {
            const double av = ar[i];
            double* or_ = out + size_t(i) * c;
            for (int j = 0; j < c; ++j) or_[j] += av * br[j];
        }
    }
}
// out[r,c] = sum_k A[r,k] * B[k,c]
inline void matmul_ab(const double* a, const double* b, double* out, int r, int k, int c) {
    for (size_t i = 0; i < size_t(r) * c; ++i) out[i] = 0.0;
    for (int i = 0; i < r; ++i) {
        const double* ar = a + size_t(i) * k;
        double* or_ = out + size_t(i) * c;
        for (int kk = 0; kk < k; ++kk) {
            const double av = ar[kk];
            const double* br = b + size_t(kk) * c;
            for (int j = 0; j < c; ++j) or_[j] += av * br[j];
        }
    }
}
// out[r,c] = sum_k A[r,k] * B[c,k]  (A B^T)
inline void matmul_abt(const double* a, const double* b, double* out, int r, int k, int c) {
    for (int i = 0; i < r; ++i) {
        const double* ar = a + size_t(i) * k;
        double* or_ = out + size_t(i) * c;
        for (int j = 0; j < c; ++j) {
            const double* br = b + size_t(j) * k;
            double acc = 0.0;
            for (int kk = 0; kk < k; ++kk) acc += ar[kk] * br[kk];
            or_[j] = acc;
        }
    }
}
}  // namespace detail

inline bool soap_step(float* p, const float* g, SoapState& st, double lr,
                      const SoapConfig& cfg = {}) {
    const int r = st.rows, c = st.cols;
    const size_t n = size_t(r) * c;
    if (!grads_finite(g, n)) return false;
    st.t += 1;

    std::vector<double> gd(n);
    for (size_t i = 0; i < n; ++i) gd[i] = double(g[i]);

    // preconditioner EMAs: L += GG^T, R += G^TG
    const double bs = cfg.shampoo_beta;
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j) {
            double acc = 0.0;
            for (int k = 0; k < c; ++k) acc += gd[size_t(i) * c + k] * gd[size_t(j) * c + k];
            st.lpre[size_t(i) * r + j] = bs * st.lpre[size_t(i) * r + j] + (1.0 - bs) * acc;
        }
    for (int i = 0; i < c; ++i)
        for (int j = 0; j < c; ++j) {
            double acc = 0.0;
            for (int k = 0; k < r; ++k) acc += gd[size_t(k) * c + i] * gd[size_t(k) * c + j];
            st.rpre[size_t(i) * c + j] = bs * st.rpre[size_t(i) * c + j] + (1.0 - bs) * acc;
        }

    if (!cfg.pin_identity && (st.t - 1) % cfg.update_freq == 0) {
        std::vector<double> tmp = st.lpre, q;
        if (jacobi_eigen(tmp, q, r))
            st.ql = q;
        else
            ++st.eig_failures;  // keep the previous basis
        tmp = st.rpre;
        if (jacobi_eigen(tmp, q, c))
            st.qr = q;
        else
            ++st.eig_failures;
    }

    // Gp = QL^T G QR
    std::vector<double> t1(n), gp(n);
    detail::matmul_atb(st.ql.data(), gd.data(), t1.data(), r, r, c);
    detail::matmul_ab(t1.data(), st.qr.data(), gp.data(), r, c, c);

    const double bc1 = 1.0 - std::pow(cfg.beta1, double(st.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(st.t));
    std::vector<double> m1d(n), v2d(n);
    for (size_t i = 0; i < n; ++i) {
        const double mt = cfg.beta1 * double(st.m1[i]) + (1.0 - cfg.beta1) * gd[i];
        st.m1[i] = float(mt);
        m1d[i] = mt;
        const double vt = cfg.beta2 * double(st.v2[i]) + (1.0 - cfg.beta2) * gp[i] * gp[i];
        st.v2[i] = float(vt);
        v2d[i] = vt;
    }
    // m1 projected into the rotated space, inner Adam there, rotate back
    std::vector<double> m1p(n), upd(n);
    detail::matmul_atb(st.ql.data(), m1d.data(), t1.data(), r, r, c);
    detail::matmul_ab(t1.data(), st.qr.data(), m1p.data(), r, c, c);
    for (size_t i = 0; i < n; ++i)
        m1p[i] = (m1p[i] / bc1) / (std::sqrt(v2d[i] / bc2) + cfg.eps);
    detail::matmul_ab(st.ql.data(), m1p.data(), t1.data(), r, r, c);
    detail::matmul_abt(t1.data(), st.qr.data(), upd.data(), r, c, c);

    for (size_t i = 0; i < n; ++i) p[i] = float(double(p[i]) - lr * upd[i]);
    return true;
}

// NN parameter optimizer: SOAP over per-layer matrices, or plain Adam when
// disabled (ablation arm).
struct NnOptimizer {
    bool use_soap = true;
    SoapConfig soap_cfg;
    AdamConfig adam_cfg;
    std::vector<SoapState> soap;
    std::vector<AdamState> adam;

    void init(const std::vector<MatView>& mats) {
        soap.clear();
        adam.clear();
        if (use_soap) {
            soap.resize(mats.size());
            for (size_t i = 0; i < mats.size(); ++i) soap[i].init(mats[i].rows, mats[i].cols);
        } else {
            adam.resize(mats.size());
            for (size_t i = 0; i < mats.size(); ++i) adam[i].init(mats[i].size());
        }
    }
    // Returns the number of skipped (non-finite gradient) layers.
    int step(const std::vector<MatView>& mats, double lr) {
        int skipped = 0;
        for (size_t i = 0; i < mats.size(); ++i) {
            const bool ok = use_soap
                                ? soap_step(mats[i].v, mats[i].g, soap[i], lr, soap_cfg)
                                : adam_step(mats[i].v, mats[i].g, mats[i].size(), adam[i], lr, adam_cfg);
            if (!ok) ++skipped;
        }
        return skipped;
    }
};

}  // namespace coolcodec
