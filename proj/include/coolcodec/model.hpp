#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "coolcodec/config.hpp"
#include "coolcodec/latent.hpp"
#include "coolcodec/tensor.hpp"

namespace coolcodec {

struct DenseParams {
    ParamTensor w;  // [out][in]
    ParamTensor b;  // [out]
    int in = 0, out = 0;

    DenseParams() = default;
    DenseParams(const std::string& name, int in_, int out_)
        : w(name + ".w", ParamRole::Weight, {out_, in_}),
          b(name + ".b", ParamRole::Bias, {out_}),
          in(in_), out(out_) {}
};

// Autoregressive probability model: 2 hidden dense layers with ReLU, a dense
// head to (mu, log-sigma), plus a residual linear stabilizer on the context.
struct ArmParams {
    int input_dim = 0, width = 0;
    DenseParams l1, l2, head;
    ParamTensor stab;  // [2][input_dim], no bias (pure linear branch)
    bool use_stab = true;
};

// Inter-feature context extractor: one linear map from the sampled values of
// the previously decoded grids to the f-dimensional context.
struct IfceParams {
    int level = 0;  // the equipped main grid's dyadic level
    DenseParams map;
};

// One x2 upsampling stage: symmetric separable 8-tap transposed conv (4 free
// taps, shared by rows and columns) followed by an 8-fold symmetric 3x3
// refinement ({center, edge, corner}). Stage j lifts scale j+1 to scale j and
// is shared by every grid passing through it.
struct UpsampleStage {
    ParamTensor tconv;   // [4]
    ParamTensor refine;  // [3]
};

// Synthesis: pointwise trunk L -> F -> 3 with ReLU, residual 3x3 post filters
// on the RGB channels, and a pointwise linear stabilizer L -> 3.
struct SynthesisParams {
    int in_ch = 0, hidden = 0;
    DenseParams c1, c2;
    std::vector<ParamTensor> post_w;  // each [3][3][3][3]
    std::vector<ParamTensor> post_b;  // each [3]
    ParamTensor stab;                 // [3][in_ch]
    bool use_stab = true;
};

struct DecoderModel {
    DecoderConfig cfg;
    int levels = 0;
    int hyper_count = 0;
    ArmParams arm;
    std::vector<IfceParams> ifce;
    std::vector<UpsampleStage> ups;  // stage j in [0, levels-2]
    SynthesisParams syn;

    int ifce_source_count(int level) const { return hyper_count + (levels - 1 - level); }
    // IFCE slot for a main grid level, or -1.
    int ifce_slot(int level) const {
        if (cfg.ifce_dim <= 0) return -1;
        for (size_t i = 0; i < ifce.size(); ++i)
            if (ifce[i].level == level) return int(i);
        return -1;
    }
};

inline DecoderModel make_model(const DecoderConfig& cfg, int h, int w) {
    DecoderModel m;
    m.cfg = cfg;
    m.levels = latent_levels(h, w);
    m.hyper_count = cfg.use_hyperlatents ? m.levels - kHyperCoarsestLevel : 0;

    const int d = cfg.arm_input_dim();
    m.arm.input_dim = d;
    m.arm.width = cfg.arm_width;
    m.arm.use_stab = cfg.use_stabilizer;
    m.arm.l1 = DenseParams("arm.l1", d, cfg.arm_width);
    m.arm.l2 = DenseParams("arm.l2", cfg.arm_width, cfg.arm_width);
    m.arm.head = DenseParams("arm.head", cfg.arm_width, 2);
    m.arm.stab = ParamTensor("arm.stab", ParamRole::Weight, {2, d});

    if (cfg.ifce_dim > 0) {
        for (int k = 0; k < std::min(3, m.levels); ++k) {
            IfceParams p;
            p.level = k;
            p.map = DenseParams("ifce" + std::to_string(k), m.ifce_source_count(k), cfg.ifce_dim);
            m.ifce.push_back(std::move(p));
        }
    }

    m.ups.resize(size_t(std::max(0, m.levels - 1)));
    for (size_t j = 0; j < m.ups.size(); ++j) {
        m.ups[j].tconv = ParamTensor("ups" + std::to_string(j) + ".tconv", ParamRole::Weight, {4});
        m.ups[j].refine = ParamTensor("ups" + std::to_string(j) + ".refine", ParamRole::Weight, {3});
    }

    m.syn.in_ch = m.levels;
    m.syn.hidden = cfg.synth_hidden;
    m.syn.use_stab = cfg.use_stabilizer;
    m.syn.c1 = DenseParams("syn.c1", m.levels, cfg.synth_hidden);
    m.syn.c2 = DenseParams("syn.c2", cfg.synth_hidden, 3);
    for (int i = 0; i < cfg.synth_posts; ++i) {
        m.syn.post_w.emplace_back("syn.post" + std::to_string(i) + ".w", ParamRole::Weight,
                                  std::vector<int>{3, 3, 3, 3});
        m.syn.post_b.emplace_back("syn.post" + std::to_string(i) + ".b", ParamRole::Bias,
                                  std::vector<int>{3});
    }
    m.syn.stab = ParamTensor("syn.stab", ParamRole::Weight, {3, m.levels});
    return m;
}

// Bicubic interpolation taps for the +-1/4-phase polyphase pair; each phase of
// the expanded 8-tap kernel sums to 1, so constants survive upsampling.
inline constexpr float kBicubicTaps[4] = {-0.0234375f, -0.0703125f, 0.2265625f, 0.8671875f};

inline void init_kaiming(ParamTensor& t, int fan_in, uint64_t stream) {
    const float a = std::sqrt(6.0f / float(fan_in));
    for (size_t i = 0; i < t.size(); ++i) t.v[i] = counter_uniform(stream, i, -a, a);
}

// Random init for one training candidate. Trunk weights are Kaiming-uniform,
// biases and the residual branches (stabilizers, post filters) start at zero;
// upsampling starts as bicubic with an identity refinement.
inline void init_model(DecoderModel& m, uint64_t stream) {
    uint64_t ctr = 0;
    auto sub = [&]() { return hash_combine(stream, ctr++); };
    init_kaiming(m.arm.l1.w, m.arm.input_dim, sub());
    init_kaiming(m.arm.l2.w, m.arm.width, sub());
    init_kaiming(m.arm.head.w, m.arm.width, sub());
    std::fill(m.arm.stab.v.begin(), m.arm.stab.v.end(), 0.0f);
    for (auto& f : m.ifce) {
        init_kaiming(f.map.w, f.map.in, sub());
        std::fill(f.map.b.v.begin(), f.map.b.v.end(), 0.0f);
    }
    for (auto& s : m.ups) {
        for (int i = 0; i < 4; ++i) s.tconv.v[i] = kBicubicTaps[i];
        s.refine.v = {1.0f, 0.0f, 0.0f};
    }
    init_kaiming(m.syn.c1.w, m.levels, sub());
    init_kaiming(m.syn.c2.w, m.syn.hidden, sub());
    for (auto& p : m.syn.post_w) std::fill(p.v.begin(), p.v.end(), 0.0f);
    std::fill(m.syn.stab.v.begin(), m.syn.stab.v.end(), 0.0f);
}

template <typename F>
inline void for_each_param(DecoderModel& m, F&& f) {
    f(m.arm.l1.w); f(m.arm.l1.b);
    f(m.arm.l2.w); f(m.arm.l2.b);
    f(m.arm.head.w); f(m.arm.head.b);
    if (m.arm.use_stab) f(m.arm.stab);
    for (auto& p : m.ifce) { f(p.map.w); f(p.map.b); }
    for (auto& s : m.ups) { f(s.tconv); f(s.refine); }
    f(m.syn.c1.w); f(m.syn.c1.b);
    f(m.syn.c2.w); f(m.syn.c2.b);
    for (auto& p : m.syn.post_w) f(p);
    for (auto& p : m.syn.post_b) f(p);
    if (m.syn.use_stab) f(m.syn.stab);
}

inline void zero_grads(DecoderModel& m) {
    for_each_param(m, [](ParamTensor& t) { t.zero_grad(); });
}

// Stable per-layer matrix views for the optimizer (invalidated by model moves).
inline std::vector<MatView> trainable_matrices(DecoderModel& m) {
    std::vector<MatView> out;
    for_each_param(m, [&](ParamTensor& t) { out.push_back(MatView::of(t)); });
    return out;
}

inline size_t param_count(DecoderModel& m) {
    size_t n = 0;
    for_each_param(m, [&](ParamTensor& t) { n += t.size(); });
    return n;
}

// Name of the first tensor with a non-finite gradient, or nullptr.
inline const char* find_nonfinite_grad(DecoderModel& m) {
    const char* bad = nullptr;
    for_each_param(m, [&](ParamTensor& t) {
        if (!bad && !t.grad_finite()) bad = t.name.c_str();
    });
    return bad;
}

// ---------------------------------------------------------------------------
// Submodule grouping used by the network-parameter coding scheme. The four
// submodules are quantized and signalled independently, each with separate
// weight/bias quantization steps.
// ---------------------------------------------------------------------------

enum class Submodule : uint8_t { Arm = 0, Synthesis = 1, Upsampling = 2, Ifce = 3 };
inline constexpr int kSubmoduleCount = 4;

struct SubmoduleParams {
    std::vector<ParamTensor*> weights;
    std::vector<ParamTensor*> biases;
};

inline SubmoduleParams submodule_params(DecoderModel& m, Submodule s) {
    SubmoduleParams out;
    switch (s) {
        case Submodule::Arm:
            out.weights = {&m.arm.l1.w, &m.arm.l2.w, &m.arm.head.w};
            if (m.arm.use_stab) out.weights.push_back(&m.arm.stab);
            out.biases = {&m.arm.l1.b, &m.arm.l2.b, &m.arm.head.b};
            break;
        case Submodule::Synthesis:
            out.weights = {&m.syn.c1.w, &m.syn.c2.w};
            for (auto& p : m.syn.post_w) out.weights.push_back(&p);
            if (m.syn.use_stab) out.weights.push_back(&m.syn.stab);
            out.biases = {&m.syn.c1.b, &m.syn.c2.b};
            for (auto& p : m.syn.post_b) out.biases.push_back(&p);
            break;
        case Submodule::Upsampling:
            for (auto& s2 : m.ups) {
                out.weights.push_back(&s2.tconv);
                out.weights.push_back(&s2.refine);
            }
            break;
        case Submodule::Ifce:
            for (auto& p : m.ifce) {
                out.weights.push_back(&p.map.w);
                out.biases.push_back(&p.map.b);
            }
            break;
    }
    return out;
}

}  // namespace coolcodec
