#pragma once

#include <vector>

#include "coolcodec/entropy_model.hpp"
#include "coolcodec/image.hpp"
#include "coolcodec/latent.hpp"
#include "coolcodec/synthesis.hpp"

namespace coolcodec {

// Shared evaluation path over quantized latents: used by the decoder proper,
// the encoder's final reconstruction, and the network-quantization search.
// Hyperlatents participate only in the rate; step B never sees them.

inline std::vector<PaddedGrid<float>> pads_from_q(const LatentSet& set, int pad) {
    std::vector<PaddedGrid<float>> pads(set.grids.size());
    for (size_t gi = 0; gi < set.grids.size(); ++gi) {
        const auto& g = set.grids[gi];
        pads[gi].resize(g.rows, g.cols, pad, g.level, g.hyper);
        for (int r = 0; r < g.rows; ++r) {
            float* dst = pads[gi].v_at(r, 0);
            const int32_t* src = g.q.data() + size_t(r) * g.cols;
            for (int c = 0; c < g.cols; ++c) dst[c] = float(src[c]);
        }
    }
    return pads;
}

inline std::vector<int> ifce_slots(const LatentSet& set, const DecoderModel& m) {
    std::vector<int> slots(set.grids.size(), -1);
    for (size_t gi = 0; gi < set.grids.size(); ++gi)
        if (!set.grids[gi].hyper) slots[gi] = m.ifce_slot(set.grids[gi].level);
    return slots;
}

// Batched bit-rate estimate of the quantized latents under the model.
inline double latent_rate_estimate(const LatentSet& set, DecoderModel& m,
                                   const ContextOffsets& ctx) {
    auto pads = pads_from_q(set, std::max(1, ctx.pad));
    const auto slots = ifce_slots(set, m);
    return rate_pass(pads, ctx, make_arm_view(m, false), make_ifce_views(m, false), slots,
                     set.hyper_count, 0.0f, false);
}

// Step B: upsample the main grids and synthesize the image.
inline Image reconstruct_image(const LatentSet& set, DecoderModel& m) {
    const int L = set.levels;
    const int H = set.image_h, W = set.image_w;
    std::vector<std::vector<float>> planes(L);
    std::vector<PlaneRef<float>> mains(L);
    for (int k = 0; k < L; ++k) {
        const auto& g = set.main_grid(k);
        planes[k].resize(g.count());
        for (size_t i = 0; i < g.count(); ++i) planes[k][i] = float(g.q[i]);
        mains[k] = {planes[k].data(), g.cols, g.rows, g.cols};
    }
    std::vector<float> z(size_t(L) * H * W);
    upsample_forward(mains, H, W, make_ups_views(m, false), z.data(), nullptr);
    Image out(H, W);
    synthesize_forward(z.data(), L, H, W, make_syn_view(m, false), out.pix.data(), nullptr);
    return out;
}

}  // namespace coolcodec
