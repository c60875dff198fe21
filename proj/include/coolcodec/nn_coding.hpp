#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "coolcodec/bits.hpp"
#include "coolcodec/decode_core.hpp"
#include "coolcodec/model.hpp"

namespace coolcodec {

// Network parameter signaling: per submodule (ARM, synthesis, upsampling,
// IFCE), weights and biases get their own power-of-two quantization step
// Delta in {2^-1 .. 2^-8} and Exp-Golomb order kappa in [0, 7], selected by
// rate-distortion search. Payload layout per submodule, byte-aligned:
//   weights: 3-bit Delta index | 3-bit kappa | 16-bit count | Exp-Golomb bits
//   biases:  same
// Delta index i encodes the step 2^-(i+1), so index 0 is the coarsest step.

inline constexpr int kNnDeltaCount = 8;
inline constexpr int kNnKappaMax = 7;

inline double nn_delta_from_index(int idx) { return std::ldexp(1.0, -(idx + 1)); }

struct NnPartSpec {
    int delta_idx = 0;
    int kappa = 0;
};
struct NnQuantSpec {
    std::array<std::array<NnPartSpec, 2>, kSubmoduleCount> parts;  // [submodule][w=0/b=1]
};

namespace nn_detail {

inline void gather_part(const SubmoduleParams& sp, bool biases, std::vector<ParamTensor*>& out) {
    out = biases ? sp.biases : sp.weights;
}

// Quantize every scalar of the part with step delta; returns the integer codes.
inline std::vector<int32_t> quantize_part(const std::vector<ParamTensor*>& tensors, double delta) {
    std::vector<int32_t> q;
    for (const auto* t : tensors)
        for (float v : t->v) q.push_back(int32_t(std::lround(double(v) / delta)));
    return q;
}

inline void apply_dequant(std::vector<ParamTensor*>& tensors, const std::vector<int32_t>& q,
                          double delta) {
    size_t i = 0;
    for (auto* t : tensors)
        for (auto& v : t->v) v = float(double(q[i++]) * delta);
}

inline int best_kappa(const std::vector<int32_t>& q, size_t* bits_out) {
    int best_k = 0;
    size_t best_bits = size_t(-1);
    for (int k = 0; k <= kNnKappaMax; ++k) {
        size_t bits = 0;
        for (int32_t v : q) bits += size_t(expgolomb_length(zigzag_encode(v), k));
        if (bits < best_bits) {
            best_bits = bits;
            best_k = k;
        }
    }
    if (bits_out) *bits_out = best_bits;
    return best_k;
}

// Header bits per part: 3 (delta) + 3 (kappa) + 16 (count).
inline constexpr size_t kPartHeaderBits = 22;

}  // namespace nn_detail

struct NnCodingResult {
    NnQuantSpec spec;
    std::vector<uint8_t> payload;
    double cost = 0.0;        // D + lambda*(R_latents + R_nn)/npix at the chosen spec
    double rate_bits = 0.0;   // latent rate estimate with the quantized model
    double mse = 0.0;
};

// Serialize the (already chosen) quantized parameters.
inline std::vector<uint8_t> write_nn_payload(DecoderModel& m, const NnQuantSpec& spec) {
    BitWriter bw;
    for (int s = 0; s < kSubmoduleCount; ++s) {
        auto sp = submodule_params(m, Submodule(s));
        for (int part = 0; part < 2; ++part) {
            std::vector<ParamTensor*> tensors;
            nn_detail::gather_part(sp, part == 1, tensors);
            const auto& ps = spec.parts[size_t(s)][size_t(part)];
            const double delta = nn_delta_from_index(ps.delta_idx);
            const auto q = nn_detail::quantize_part(tensors, delta);
            bw.put_bits(uint64_t(ps.delta_idx), 3);
            bw.put_bits(uint64_t(ps.kappa), 3);
            if (q.size() > 0xFFFF) throw ConfigError("nn payload: too many parameters");
            bw.put_bits(uint64_t(q.size()), 16);
            for (int32_t v : q) expgolomb_encode(bw, v, ps.kappa);
        }
        bw.align();
    }
    return bw.finish();
}

// Parse the payload and write the dequantized parameters into the model.
// Returns the spec actually read.
inline NnQuantSpec read_nn_payload(DecoderModel& m, const uint8_t* data, size_t len) {
    BitReader br(data, len);
    NnQuantSpec spec;
    for (int s = 0; s < kSubmoduleCount; ++s) {
        auto sp = submodule_params(m, Submodule(s));
        for (int part = 0; part < 2; ++part) {
            std::vector<ParamTensor*> tensors;
            nn_detail::gather_part(sp, part == 1, tensors);
            size_t expected = 0;
            for (const auto* t : tensors) expected += t->size();
            auto& ps = spec.parts[size_t(s)][size_t(part)];
            ps.delta_idx = int(br.get_bits(3));
            ps.kappa = int(br.get_bits(3));
            const size_t count = size_t(br.get_bits(16));
            if (count != expected)
                throw FormatError("nn payload: parameter count mismatch in submodule " +
                                  std::to_string(s));
            std::vector<int32_t> q(count);
            for (auto& v : q) v = expgolomb_decode(br, ps.kappa);
            const double delta = nn_delta_from_index(ps.delta_idx);
            nn_detail::apply_dequant(tensors, q, delta);
        }
        br.align();
    }
    return spec;
}

// ---------------------------------------------------------------------------
// Greedy per-submodule quantization search, in the order ARM, synthesis,
// upsampling, IFCE. Each candidate (Delta_w, Delta_b) pair is evaluated by
// decoding with the quantized submodule substituted (earlier submodules stay
// at their chosen quantization); kappa is the rate-minimizing order for the
// quantized integers. Candidates run coarse-to-fine with strict improvement,
// so ties go to the largest step. ARM/IFCE candidates only move the latent
// rate, synthesis/upsampling only the distortion, so each evaluation
// recomputes just the affected term. The model ends up holding the
// dequantized (transmitted) parameters.
// ---------------------------------------------------------------------------

inline NnCodingResult select_nn_coding(const Image& x, const LatentSet& lat, DecoderModel& m,
                                       double lambda, const ContextOffsets& ctx) {
    const double npix = double(lat.image_h) * double(lat.image_w);
    NnCodingResult res;

    double cur_rate = latent_rate_estimate(lat, m, ctx);
    double cur_mse = mse_rgb(reconstruct_image(lat, m), x);
    double nn_bits_chosen = 0.0;

    for (int s = 0; s < kSubmoduleCount; ++s) {
        const Submodule sub = Submodule(s);
        const bool affects_rate = sub == Submodule::Arm || sub == Submodule::Ifce;
        auto sp = submodule_params(m, sub);

        // original values to restore between candidates
        std::vector<std::vector<float>> backup_w, backup_b;
        for (auto* t : sp.weights) backup_w.push_back(t->v);
        for (auto* t : sp.biases) backup_b.push_back(t->v);
        auto restore = [&]() {
            for (size_t i = 0; i < sp.weights.size(); ++i) sp.weights[i]->v = backup_w[i];
            for (size_t i = 0; i < sp.biases.size(); ++i) sp.biases[i]->v = backup_b[i];
        };

        double best_cost = std::numeric_limits<double>::infinity();
        NnPartSpec best_w, best_b;
        double best_rate = cur_rate, best_mse = cur_mse, best_bits = 0.0;

        for (int iw = 0; iw < kNnDeltaCount; ++iw) {
            const double dw = nn_delta_from_index(iw);
            const auto qw = nn_detail::quantize_part(sp.weights, dw);
            size_t wbits = 0;
            const int kw = nn_detail::best_kappa(qw, &wbits);
            for (int ib = 0; ib < kNnDeltaCount; ++ib) {
                const double db = nn_delta_from_index(ib);
                const auto qb = nn_detail::quantize_part(sp.biases, db);
                size_t bbits = 0;
                const int kb = nn_detail::best_kappa(qb, &bbits);

                nn_detail::apply_dequant(sp.weights, qw, dw);
                nn_detail::apply_dequant(sp.biases, qb, db);
                double rate = cur_rate, mse = cur_mse;
                if (affects_rate)
                    rate = latent_rate_estimate(lat, m, ctx);
                else
                    mse = mse_rgb(reconstruct_image(lat, m), x);
                const double cand_bits =
                    double(wbits + bbits) + 2.0 * nn_detail::kPartHeaderBits;
                const double cost =
                    mse + lambda * (rate + nn_bits_chosen + cand_bits) / npix;
                if (cost < best_cost) {
                    best_cost = cost;
                    best_w = {iw, kw};
                    best_b = {ib, kb};
                    best_rate = rate;
                    best_mse = mse;
                    best_bits = cand_bits;
                }
                restore();
            }
        }

        // commit the winner: submodule stays dequantized from here on
        const auto qw = nn_detail::quantize_part(sp.weights, nn_delta_from_index(best_w.delta_idx));
        const auto qb = nn_detail::quantize_part(sp.biases, nn_delta_from_index(best_b.delta_idx));
        nn_detail::apply_dequant(sp.weights, qw, nn_delta_from_index(best_w.delta_idx));
        nn_detail::apply_dequant(sp.biases, qb, nn_delta_from_index(best_b.delta_idx));
        res.spec.parts[size_t(s)][0] = best_w;
        res.spec.parts[size_t(s)][1] = best_b;
        nn_bits_chosen += best_bits;
        cur_rate = best_rate;
        cur_mse = best_mse;
    }

    res.payload = write_nn_payload(m, res.spec);
    res.rate_bits = cur_rate;
    res.mse = cur_mse;
    res.cost = cur_mse + lambda * (cur_rate + 8.0 * double(res.payload.size())) / npix;
    return res;
}

}  // namespace coolcodec
