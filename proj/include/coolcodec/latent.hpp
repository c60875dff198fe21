#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "coolcodec/config.hpp"
#include "coolcodec/layers.hpp"
#include "coolcodec/tensor.hpp"

namespace coolcodec {

inline int ceil_div(int a, int b) { return (a + b - 1) / b; }

// One 2-D latent grid at dyadic level k (shape ceil(H/2^k) x ceil(W/2^k)).
struct LatentGrid {
    int level = 0;
    bool hyper = false;
    int rows = 0, cols = 0;
    ParamTensor y;            // continuous values, optimized at encode time
    std::vector<int32_t> q;   // quantized values, what the bitstream carries
    int amp = 255;            // |q| <= amp; measured and signalled per grid

    size_t count() const { return size_t(rows) * size_t(cols); }
};

// All grids of one image in decode order: hyperlatents coarse-to-fine, then
// the main grids coarse-to-fine. Hyperlatents only ever feed the entropy
// model; the synthesis consumes main grids exclusively.
struct LatentSet {
    int image_h = 0, image_w = 0;
    int levels = 0;       // number of main grids (L)
    int hyper_count = 0;
    std::vector<LatentGrid> grids;

    int main_index(int k) const { return hyper_count + (levels - 1 - k); }
    LatentGrid& main_grid(int k) { return grids[main_index(k)]; }
    const LatentGrid& main_grid(int k) const { return grids[main_index(k)]; }
    size_t total_values() const {
        size_t n = 0;
        for (const auto& g : grids) n += g.count();
        return n;
    }
};

inline LatentSet build_latents(int h, int w, const DecoderConfig& cfg) {
    if (h < 1 || w < 1) throw ConfigError("image dimensions must be positive");
    LatentSet set;
    set.image_h = h;
    set.image_w = w;
    set.levels = latent_levels(h, w);
    const int hyper_lo = kHyperCoarsestLevel;  // 1/16
    set.hyper_count = cfg.use_hyperlatents ? set.levels - hyper_lo : 0;

    auto push = [&](int k, bool hyper) {
        LatentGrid g;
        g.level = k;
        g.hyper = hyper;
        g.rows = ceil_div(h, 1 << k);
        g.cols = ceil_div(w, 1 << k);
        g.y = ParamTensor(std::string(hyper ? "hyper" : "latent") + std::to_string(k),
                          ParamRole::Latent, {g.rows, g.cols});
        g.q.assign(g.count(), 0);
        set.grids.push_back(std::move(g));
    };
    if (cfg.use_hyperlatents)
        for (int k = set.levels - 1; k >= hyper_lo; --k) push(k, true);
    for (int k = set.levels - 1; k >= 0; --k) push(k, false);
    return set;
}

// Continuous latents start as small-amplitude uniform noise per candidate.
inline void init_latents_uniform(LatentSet& set, uint64_t stream, float amplitude = 0.3f) {
    for (size_t gi = 0; gi < set.grids.size(); ++gi) {
        const uint64_t gs = hash_combine(stream, gi);
        auto& y = set.grids[gi].y.v;
        for (size_t i = 0; i < y.size(); ++i)
            y[i] = counter_uniform(gs, i, -amplitude, amplitude);
    }
}

// ---------------------------------------------------------------------------
// Hard quantizer: round to nearest, ties away from zero, clamp to [-amp, amp].
// ---------------------------------------------------------------------------

inline int32_t quantize_value(float y, int amp) {
    int32_t q = int32_t(std::lround(y));  // lround ties away from zero
    if (q > amp) q = amp;
    if (q < -amp) q = -amp;
    return q;
}

inline void quantize_grid(LatentGrid& g) {
    for (size_t i = 0; i < g.count(); ++i) g.q[i] = quantize_value(g.y.v[i], g.amp);
}

inline void quantize_all(LatentSet& set) {
    for (auto& g : set.grids) quantize_grid(g);
}

// Tightest per-grid amplitude bound for the header (at least 1, u8 range).
inline int measure_amplitude(const LatentGrid& g) {
    int32_t m = 1;
    for (int32_t v : g.q) m = std::max(m, std::abs(v));
    return int(std::min<int32_t>(m, 255));
}

// ---------------------------------------------------------------------------
// Training-time quantization proxy: y_train = s_T(s_T(y) + n_sigma) with
// i.i.d. zero-mean Gaussian noise. th1/th2 cache the two tanh evaluations for
// the backward pass.
// ---------------------------------------------------------------------------

struct QuantProxyConfig {
    double temp = 0.35;
    double noise_std = 0.22;
    uint64_t seed = 0;
};

template <typename T>
inline void soft_quantize_forward(const T* y, T* out, T* th1, T* th2, size_t n,
                                  T temp, T noise_std, uint64_t stream, uint64_t idx0 = 0) {
    softround_forward(y, out, th1, n, temp);
    if (noise_std > T(0)) {
        for (size_t i = 0; i < n; ++i) out[i] += noise_std * T(counter_gauss(stream, idx0 + i));
    }
    softround_forward(out, out, th2, n, temp);
}

template <typename T>
inline void soft_quantize_backward(const T* dout, const T* th1, const T* th2,
                                   T* dy, size_t n, T temp) {
    const T scale = T(1) / (temp * softround_denom(temp));
    for (size_t i = 0; i < n; ++i) {
        const T d2 = (T(1) - th2[i] * th2[i]) * scale;
        const T d1 = (T(1) - th1[i] * th1[i]) * scale;
        dy[i] += dout[i] * d2 * d1;
    }
}

// Convenience single-shot form of the proxy.
inline std::vector<float> soft_quantize(const std::vector<float>& y, const QuantProxyConfig& cfg) {
    std::vector<float> out(y.size()), th1(y.size()), th2(y.size());
    soft_quantize_forward(y.data(), out.data(), th1.data(), th2.data(), y.size(),
                          float(cfg.temp), float(cfg.noise_std), cfg.seed);
    return out;
}

}  // namespace coolcodec
