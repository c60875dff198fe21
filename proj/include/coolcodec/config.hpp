#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "coolcodec/tensor.hpp"

namespace coolcodec {

// ---------------------------------------------------------------------------
// Scalar schedules for the main training stage.
// ---------------------------------------------------------------------------

enum class ScheduleKind { Linear, Cosine };

struct Schedule {
    double start = 0.0;
    double end = 0.0;
    ScheduleKind kind = ScheduleKind::Linear;
    int horizon = 1;  // value(0) == start, value(horizon) == end

    double value(int iter) const {
        if (iter <= 0) return start;
        if (iter >= horizon) return end;
        const double t = double(iter) / double(horizon);
        if (kind == ScheduleKind::Linear) return start + (end - start) * t;
        return end + (start - end) * (1.0 + std::cos(3.141592653589793 * t)) * 0.5;
    }
};

// ---------------------------------------------------------------------------
// Decoder architecture presets. Complexity grows LOP -> VHOP; grid counts are
// resolved per image (7 latent grids below one megapixel, 8 above; hyperlatent
// grids span 1/16 down to the smallest latent resolution).
// ---------------------------------------------------------------------------

enum class Preset : uint8_t { Lop = 0, Mop = 1, Hop = 2, Vhop = 3 };

struct DecoderConfig {
    Preset preset = Preset::Hop;
    int spatial_ctx = 14;    // causal neighbors fed to the ARM
    int ifce_dim = 6;        // inter-feature context width (0 disables IFCE)
    int arm_width = 20;
    int arm_hidden = 2;
    int synth_hidden = 48;   // features of the first 1x1 synthesis conv
    int synth_posts = 2;     // residual 3x3 post filters
    bool use_hyperlatents = true;
    bool use_stabilizer = true;

    int arm_input_dim() const { return spatial_ctx + ifce_dim; }

    static DecoderConfig lop()  { return {Preset::Lop, 6, 2, 8, 2, 8, 1, true, true}; }
    static DecoderConfig mop()  { return {Preset::Mop, 10, 4, 10, 2, 16, 2, true, true}; }
    static DecoderConfig hop()  { return {Preset::Hop, 14, 6, 20, 2, 48, 2, true, true}; }
    static DecoderConfig vhop() { return {Preset::Vhop, 20, 6, 26, 2, 64, 2, true, true}; }

    static DecoderConfig from_preset(Preset p) {
        switch (p) {
            case Preset::Lop: return lop();
            case Preset::Mop: return mop();
            case Preset::Vhop: return vhop();
            default: return hop();
        }
    }
    static DecoderConfig from_name(const std::string& name) {
        if (name == "lop") return lop();
        if (name == "mop") return mop();
        if (name == "hop") return hop();
        if (name == "vhop") return vhop();
        throw ConfigError("unknown decoder config: " + name);
    }
    const char* name() const {
        switch (preset) {
            case Preset::Lop: return "lop";
            case Preset::Mop: return "mop";
            case Preset::Vhop: return "vhop";
            default: return "hop";
        }
    }
};

// Grid geometry shared by the latent builder and the bitstream reader.
inline int latent_levels(int h, int w) { return int64_t(h) * int64_t(w) < 1000000 ? 7 : 8; }
inline constexpr int kHyperCoarsestLevel = 4;  // biggest hyperlatent grid at 1/16

// ---------------------------------------------------------------------------
// Encoder settings. Defaults reproduce the reference 100k-iteration schedule:
// 5 warm-up candidates trained 400 iterations, the best 2 refined for 400
// more, a 96,700-iteration main stage and 500 hardround iterations.
// ---------------------------------------------------------------------------

struct EncoderConfig {
    int warmup_candidates = 5;
    int warmup_keep = 2;
    int warmup_iters = 400;  // per candidate, each round
    int main_iters = 96700;
    int hardround_iters = 500;

    double lr_start = 1e-2, lr_end = 1e-6;          // cosine
    double noise_std_start = 0.22, noise_std_end = 0.15;  // linear
    double temp_start = 0.35, temp_end = 0.08;      // linear
    double hardround_lr = 1e-4;

    double lambda = 0.001;
    uint64_t seed = 0;
    bool use_soap = true;
    int true_cost_interval = 1000;  // hard-quantized cost checks / snapshots
    std::string log_path;           // optional per-iteration CSV

    int warmup_total() const { return (warmup_candidates + warmup_keep) * warmup_iters; }
    int total_iters() const { return warmup_total() + main_iters + hardround_iters; }

    Schedule lr_schedule() const {
        return {lr_start, lr_end, ScheduleKind::Cosine, std::max(1, main_iters - 1)};
    }
    Schedule noise_schedule() const {
        return {noise_std_start, noise_std_end, ScheduleKind::Linear, std::max(1, main_iters - 1)};
    }
    Schedule temp_schedule() const {
        return {temp_start, temp_end, ScheduleKind::Linear, std::max(1, main_iters - 1)};
    }

    // Rescale the stage split to a different total budget, keeping the default
    // proportions. An exact match of the default total keeps the canonical
    // 2,800 / 96,700 / 500 split.
    static EncoderConfig with_total(int total) {
        EncoderConfig cfg;
        if (total == cfg.total_iters()) return cfg;
        if (total < 20) throw ConfigError("iteration budget too small");
        const double f = double(total) / 100000.0;
        cfg.warmup_iters = std::max(1, int(std::lround(400.0 * f)));
        cfg.hardround_iters = std::max(1, int(std::lround(500.0 * f)));
        int rest = total - cfg.warmup_total() - cfg.hardround_iters;
        while (rest < 1 && cfg.warmup_iters > 1) {  // tiny budgets
            --cfg.warmup_iters;
            rest = total - cfg.warmup_total() - cfg.hardround_iters;
        }
        cfg.main_iters = std::max(1, rest);
        return cfg;
    }
};

inline constexpr double kDefaultLambdas[5] = {0.02, 0.004, 0.001, 0.0004, 0.0001};

}  // namespace coolcodec
