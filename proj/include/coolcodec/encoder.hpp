#pragma once

#include <algorithm>
#include <chrono>
#include <fstream>
#include <limits>
#include <vector>

#include "coolcodec/config.hpp"
#include "coolcodec/entropy_model.hpp"
#include "coolcodec/image.hpp"
#include "coolcodec/latent.hpp"
#include "coolcodec/model.hpp"
#include "coolcodec/optim.hpp"
#include "coolcodec/synthesis.hpp"

namespace coolcodec {

// Rate-distortion cost; the training loop passes the rate as bits per pixel.
inline double rd_loss(double mse, double rate, double lambda) {
    return mse + lambda * rate;
}

struct TrainStats {
    int64_t iterations = 0;
    double true_cost = std::numeric_limits<double>::infinity();
    double psnr = 0.0;
    double rate_bpp = 0.0;  // latent rate estimate, hard-quantized
    int restarts = 0;
    int skipped_steps = 0;
    double seconds = 0.0;
};

struct TrainResult {
    LatentSet latents;  // q filled from the best snapshot
    DecoderModel model;
    TrainStats stats;
};

namespace detail {

struct CandidateState {
    LatentSet lat;
    DecoderModel model;
    std::vector<AdamState> adam;  // one per latent grid
    NnOptimizer nn;
    double cost = std::numeric_limits<double>::infinity();
};

struct Snapshot {
    std::vector<std::vector<float>> latents;
    std::vector<std::vector<float>> params;
    double cost = std::numeric_limits<double>::infinity();
    bool valid = false;
};

// One per-image training instance. Owns the heavy scratch buffers so warm-up
// candidates can be swapped through without reallocating them.
class Trainer {
public:
    Trainer(const Image& img, const EncoderConfig& enc, const DecoderConfig& dcfg)
        : img_(img), enc_(enc), dcfg_(dcfg), ctx_(make_context_offsets(dcfg.spatial_ctx)) {
        npix_ = img.npix();
        rate_upstream_ = float(enc.lambda / double(npix_));
        z_.resize(0);
        log_open();
    }
    ~Trainer() { log_close(); }

    const EncoderConfig& config() const { return enc_; }
    int64_t global_iter = 0;
    int skipped_steps = 0;

    void load_candidate(CandidateState&& c) {
        cur_ = std::move(c);
        mats_ = trainable_matrices(cur_.model);
        setup_buffers();
    }
    CandidateState take_candidate() { return std::move(cur_); }
    CandidateState& current() { return cur_; }

    void fresh_candidate(int index) {
        CandidateState c;
        c.lat = build_latents(img_.h, img_.w, dcfg_);
        init_latents_uniform(c.lat, hash_combine(enc_.seed, 0x1000 + index));
        c.model = make_model(dcfg_, img_.h, img_.w);
        init_model(c.model, hash_combine(enc_.seed, 0x2000 + index));
        c.adam.resize(c.lat.grids.size());
        for (size_t i = 0; i < c.adam.size(); ++i) c.adam[i].init(c.lat.grids[i].count());
        c.nn.use_soap = enc_.use_soap;
        c.nn.init(trainable_matrices(c.model));
        load_candidate(std::move(c));
    }

    // One training iteration on the quantization proxy. Returns the proxy RD
    // cost (may be non-finite; the caller decides whether to restart).
    double proxy_iteration(double lr, double temp, double noise_std) {
        const float tf = float(temp);
        zero_all_grads();
        for (size_t gi = 0; gi < cur_.lat.grids.size(); ++gi) {
            auto& g = cur_.lat.grids[gi];
            auto& p = pads_[gi];
            const uint64_t stream = noise_stream(gi);
            for (int r = 0; r < g.rows; ++r) {
                const size_t o = size_t(r) * g.cols;
                soft_quantize_forward(g.y.v.data() + o, p.v_at(r, 0), th1_[gi].data() + o,
                                      th2_[gi].data() + o, size_t(g.cols), tf,
                                      float(noise_std), stream, o);
            }
        }
        const double bits = rate_pass(pads_, ctx_, make_arm_view(cur_.model, true),
                                      make_ifce_views(cur_.model, true), slots_,
                                      cur_.lat.hyper_count, rate_upstream_, true);
        const double mse = synth_forward_backward(true);
        const double cost = rd_loss(mse, bits / double(npix_), enc_.lambda);
        last_mse_ = mse;
        last_bits_ = bits;
        if (!std::isfinite(cost)) return cost;

        // chain proxy gradients back into the continuous latents, then step
        for (size_t gi = 0; gi < cur_.lat.grids.size(); ++gi) {
            auto& g = cur_.lat.grids[gi];
            auto& p = pads_[gi];
            for (int r = 0; r < g.rows; ++r) {
                const size_t o = size_t(r) * g.cols;
                soft_quantize_backward(p.g_at(r, 0), th1_[gi].data() + o, th2_[gi].data() + o,
                                       g.y.g.data() + o, size_t(g.cols), tf);
            }
            if (!adam_step(g.y.v.data(), g.y.g.data(), g.y.size(), cur_.adam[gi], lr))
                ++skipped_steps;
        }
        skipped_steps += cur_.nn.step(mats_, lr);
        ++global_iter;
        return cost;
    }

    // Hardround iteration: latents frozen at their quantized values (already
    // loaded into the pads), only the network parameters move. The returned
    // cost belongs to the parameters *before* this iteration's step, so the
    // snapshot (when requested) is taken prior to stepping.
    double hardround_iteration(double lr, Snapshot* best) {
        zero_all_grads();
        const double bits = rate_pass(pads_, ctx_, make_arm_view(cur_.model, true),
                                      make_ifce_views(cur_.model, true), slots_,
                                      cur_.lat.hyper_count, rate_upstream_, false);
        const double mse = synth_forward_backward(false);
        const double cost = rd_loss(mse, bits / double(npix_), enc_.lambda);
        last_mse_ = mse;
        last_bits_ = bits;
        if (!std::isfinite(cost)) return cost;
        if (best && cost < best->cost) *best = snapshot(cost);
        skipped_steps += cur_.nn.step(mats_, lr);
        ++global_iter;
        return cost;
    }

    // Hard-quantize the current latents and evaluate the true RD cost.
    double true_cost(double* psnr_out = nullptr, double* bpp_out = nullptr) {
        quantize_all(cur_.lat);
        load_pads_from_q();
        const double bits = rate_pass(pads_, ctx_, make_arm_view(cur_.model, false),
                                      make_ifce_views(cur_.model, false), slots_,
                                      cur_.lat.hyper_count, 0.0f, false);
        const double mse = synth_forward_backward(false, /*forward_only=*/true);
        if (psnr_out) *psnr_out = mse > 0 ? std::min(kPsnrCap, -10.0 * std::log10(mse)) : kPsnrCap;
        if (bpp_out) *bpp_out = bits / double(npix_);
        return rd_loss(mse, bits / double(npix_), enc_.lambda);
    }

    void load_pads_from_q() {
        for (size_t gi = 0; gi < cur_.lat.grids.size(); ++gi) {
            auto& g = cur_.lat.grids[gi];
            auto& p = pads_[gi];
            for (int r = 0; r < g.rows; ++r) {
                float* dst = p.v_at(r, 0);
                const int32_t* src = g.q.data() + size_t(r) * g.cols;
                for (int c = 0; c < g.cols; ++c) dst[c] = float(src[c]);
            }
        }
    }

    Snapshot snapshot(double cost) {
        Snapshot s;
        s.cost = cost;
        s.valid = true;
        for (auto& g : cur_.lat.grids) s.latents.push_back(g.y.v);
        for_each_param(cur_.model, [&](ParamTensor& t) { s.params.push_back(t.v); });
        return s;
    }
    void restore(const Snapshot& s) {
        size_t i = 0;
        for (auto& g : cur_.lat.grids) g.y.v = s.latents[i++];
        i = 0;
        for_each_param(cur_.model, [&](ParamTensor& t) { t.v = s.params[i++]; });
    }
    void reset_optimizers() {
        for (size_t i = 0; i < cur_.adam.size(); ++i) cur_.adam[i].init(cur_.lat.grids[i].count());
        cur_.nn.init(mats_);
    }

    void log_row(double proxy_cost, const double* truec) {
        if (!log_) return;
        const double psnr = last_mse_ > 0 ? -10.0 * std::log10(last_mse_) : kPsnrCap;
        log_ << global_iter << "," << proxy_cost << ",";
        if (truec) log_ << *truec;
        log_ << "," << psnr << "," << last_bits_ / double(npix_) << "\n";
    }

    double last_mse() const { return last_mse_; }
    double last_bits() const { return last_bits_; }

private:
    uint64_t noise_stream(size_t grid_index) const {
        return hash_combine(hash_combine(enc_.seed, uint64_t(global_iter)), grid_index);
    }

    void setup_buffers() {
        const int pad = std::max(1, ctx_.pad);
        pads_.resize(cur_.lat.grids.size());
        th1_.resize(pads_.size());
        th2_.resize(pads_.size());
        slots_.resize(pads_.size());
        for (size_t gi = 0; gi < pads_.size(); ++gi) {
            const auto& g = cur_.lat.grids[gi];
            pads_[gi].resize(g.rows, g.cols, pad, g.level, g.hyper);
            th1_[gi].assign(g.count(), 0.0f);
            th2_[gi].assign(g.count(), 0.0f);
            slots_[gi] = g.hyper ? -1 : cur_.model.ifce_slot(g.level);
        }
        const size_t zsz = size_t(cur_.lat.levels) * npix_;
        z_.assign(zsz, 0.0f);
        dz_.assign(zsz, 0.0f);
        xhat_.assign(3 * npix_, 0.0f);
        dx_.assign(3 * npix_, 0.0f);
    }

    void zero_all_grads() {
        zero_grads(cur_.model);
        for (auto& g : cur_.lat.grids) g.y.zero_grad();
        for (auto& p : pads_) p.zero_grad();
    }

    // Upsample + synthesize from the pads; returns the MSE. With grads, also
    // backpropagates the distortion term into pads_ and the model.
    double synth_forward_backward(bool latent_grads, bool forward_only = false) {
        const int L = cur_.lat.levels;
        std::vector<PlaneRef<float>> mains(L);
        for (int k = 0; k < L; ++k) {
            auto& p = pads_[cur_.lat.main_index(k)];
            mains[k] = {p.v_at(0, 0), p.stride(), p.rows, p.cols};
        }
        upsample_forward(mains, img_.h, img_.w, ups_views(!forward_only), z_.data(),
                         forward_only ? nullptr : &ups_cache_);
        synthesize_forward(z_.data(), L, img_.h, img_.w, syn_view(!forward_only), xhat_.data(),
                           forward_only ? nullptr : &syn_cache_);
        const double mse = mse_forward(xhat_.data(), img_.pix.data(), xhat_.size());
        if (forward_only || !std::isfinite(mse)) return mse;

        std::fill(dx_.begin(), dx_.end(), 0.0f);
        mse_backward(xhat_.data(), img_.pix.data(), 1.0, dx_.data(), xhat_.size());
        std::fill(dz_.begin(), dz_.end(), 0.0f);
        synthesize_backward(z_.data(), L, img_.h, img_.w, syn_view(true), syn_cache_, dx_.data(),
                            dz_.data());
        std::vector<PlaneGrad<float>> dmains(L);
        for (int k = 0; k < L; ++k) {
            auto& p = pads_[cur_.lat.main_index(k)];
            dmains[k] = {p.g_at(0, 0), p.stride()};
        }
        (void)latent_grads;  // upsample grads land in pads_, unused when frozen
        upsample_backward(mains, img_.h, img_.w, ups_views(true), ups_cache_, dz_.data(), dmains);
        return mse;
    }

    std::vector<UpsampleStageView<float>> ups_views(bool grads) {
        return make_ups_views(cur_.model, grads);
    }
    SynthesisView<float> syn_view(bool grads) { return make_syn_view(cur_.model, grads); }

    void log_open() {
        if (!enc_.log_path.empty()) {
            log_.open(enc_.log_path);
            if (log_) log_ << "iter,proxy_cost,true_cost,psnr,bpp\n";
        }
    }
    void log_close() {
        if (log_) log_.flush();
    }

    const Image& img_;
    EncoderConfig enc_;
    DecoderConfig dcfg_;
    ContextOffsets ctx_;
    size_t npix_ = 0;
    float rate_upstream_ = 0.0f;

    CandidateState cur_;
    std::vector<MatView> mats_;
    std::vector<PaddedGrid<float>> pads_;
    std::vector<std::vector<float>> th1_, th2_;
    std::vector<int> slots_;
    std::vector<float> z_, dz_, xhat_, dx_;
    UpsampleCache<float> ups_cache_;
    SynthCache<float> syn_cache_;
    std::ofstream log_;
    double last_mse_ = 0.0, last_bits_ = 0.0;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Warm-up: train N randomly initialized candidates for a few hundred
// iterations, refine the best two, keep the winner.
// ---------------------------------------------------------------------------

inline detail::CandidateState warmup(detail::Trainer& tr, const EncoderConfig& enc) {
    std::vector<detail::CandidateState> cands;
    for (int ci = 0; ci < enc.warmup_candidates; ++ci) {
        tr.fresh_candidate(ci);
        for (int i = 0; i < enc.warmup_iters; ++i)
            tr.proxy_iteration(enc.lr_start, enc.temp_start, enc.noise_std_start);
        tr.current().cost = tr.true_cost();
        cands.push_back(tr.take_candidate());
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const auto& a, const auto& b) { return a.cost < b.cost; });
    const int keep = std::min<int>(enc.warmup_keep, int(cands.size()));
    if (keep < int(cands.size())) cands.resize(keep);
    if (enc.warmup_candidates <= 1) {  // degenerate single-candidate warm-up
        tr.load_candidate(std::move(cands[0]));
        return tr.take_candidate();
    }
    for (auto& c : cands) {
        tr.load_candidate(std::move(c));
        for (int i = 0; i < enc.warmup_iters; ++i)
            tr.proxy_iteration(enc.lr_start, enc.temp_start, enc.noise_std_start);
        tr.current().cost = tr.true_cost();
        c = tr.take_candidate();
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const auto& a, const auto& b) { return a.cost < b.cost; });
    return std::move(cands[0]);
}

// ---------------------------------------------------------------------------
// Full per-image training: warm-up, scheduled main stage with true-cost
// snapshots and divergence restarts, hardround stage on frozen latents.
// ---------------------------------------------------------------------------

inline TrainResult train(const Image& img, const EncoderConfig& enc, const DecoderConfig& dcfg) {
    const auto t0 = std::chrono::steady_clock::now();
    detail::Trainer tr(img, enc, dcfg);
    tr.load_candidate(warmup(tr, enc));

    const Schedule lr_s = enc.lr_schedule();
    const Schedule t_s = enc.temp_schedule();
    const Schedule n_s = enc.noise_schedule();

    TrainStats stats;
    double lr_scale = 1.0;
    detail::Snapshot best = tr.snapshot(tr.true_cost());

    for (int it = 0; it < enc.main_iters; ++it) {
        const double cost =
            tr.proxy_iteration(lr_scale * lr_s.value(it), t_s.value(it), n_s.value(it));
        if (!std::isfinite(cost)) {
            if (stats.restarts >= 2) break;  // give up on this stage, keep the best snapshot
            ++stats.restarts;
            lr_scale *= 0.5;
            tr.restore(best);
            tr.reset_optimizers();
            ++tr.global_iter;  // the diverged iteration still counts
            continue;
        }
        const bool evaluate = (it + 1) % enc.true_cost_interval == 0 || it == enc.main_iters - 1;
        if (evaluate) {
            const double tc = tr.true_cost();
            if (tc < best.cost) best = tr.snapshot(tc);
            tr.log_row(cost, &tc);
        } else {
            tr.log_row(cost, nullptr);
        }
    }

    // hardround: freeze the quantized latents, adapt the networks to them
    tr.restore(best);
    quantize_all(tr.current().lat);
    tr.load_pads_from_q();
    for (int it = 0; it < enc.hardround_iters; ++it) {
        const double cost = tr.hardround_iteration(enc.hardround_lr, &best);
        if (!std::isfinite(cost)) break;
        tr.log_row(cost, &cost);
    }
    {
        const double tc = tr.true_cost();
        if (tc < best.cost) best = tr.snapshot(tc);
    }

    tr.restore(best);
    quantize_all(tr.current().lat);
    stats.iterations = tr.global_iter;
    stats.skipped_steps = tr.skipped_steps;
    double psnr = 0.0, bpp = 0.0;
    stats.true_cost = tr.true_cost(&psnr, &bpp);
    stats.psnr = psnr;
    stats.rate_bpp = bpp;
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    TrainResult result;
    result.latents = std::move(tr.current().lat);
    result.model = std::move(tr.current().model);
    result.stats = stats;
    return result;
}

}  // namespace coolcodec
