#include <catch2/catch_amalgamated.hpp>

#include "coolcodec/coolcodec.hpp"
#include "testutil.hpp"

using namespace coolcodec;
using Catch::Approx;

namespace {

LatentSet random_quantized_set(int h, int w, const DecoderConfig& cfg, uint64_t seed) {
    LatentSet set = build_latents(h, w, cfg);
    for (auto& g : set.grids)
        for (size_t i = 0; i < g.q.size(); ++i)
            g.q[i] = int32_t(splitmix64(seed + i * 13 + g.level) % 9) - 4;
    return set;
}

}  // namespace

TEST_CASE("upsample shape contract and grid-0 passthrough") {
    DecoderConfig cfg = DecoderConfig::hop();
    const int H = 512, W = 512;
    DecoderModel m = make_model(cfg, H, W);
    init_model(m, 5);
    LatentSet set = random_quantized_set(H, W, cfg, 31);

    const int L = set.levels;
    REQUIRE(L == 7);
    std::vector<std::vector<float>> planes(L);
    std::vector<PlaneRef<float>> mains(L);
    for (int k = 0; k < L; ++k) {
        const auto& g = set.main_grid(k);
        planes[k].resize(g.count());
        for (size_t i = 0; i < g.count(); ++i) planes[k][i] = float(g.q[i]);
        mains[k] = {planes[k].data(), g.cols, g.rows, g.cols};
    }
    std::vector<float> z(size_t(L) * H * W, -777.0f);
    upsample_forward(mains, H, W, make_ups_views(m, false), z.data(), nullptr);
    for (float v : z) REQUIRE(v != -777.0f);  // (7, 512, 512) fully written

    // channel 0 equals grid 0 exactly
    const auto& g0 = set.main_grid(0);
    for (size_t i = 0; i < g0.count(); ++i) REQUIRE(z[i] == float(g0.q[i]));
}

TEST_CASE("constant grids stay constant through bicubic-initialized upsampling") {
    DecoderConfig cfg = DecoderConfig::hop();
    const int H = 96, W = 80;  // odd-ish sizes force the crop path
    DecoderModel m = make_model(cfg, H, W);
    init_model(m, 6);  // bicubic taps + identity refinement
    LatentSet set = build_latents(H, W, cfg);
    const float c = 3.25f;
    for (auto& g : set.grids)
        for (auto& q : g.q) q = 0;
    for (int k = 0; k < set.levels; ++k) {
        auto& g = set.main_grid(k);
        // constant value c on grid k only, check channel k is constant c
        std::vector<std::vector<float>> planes(set.levels);
        std::vector<PlaneRef<float>> mains(set.levels);
        for (int j = 0; j < set.levels; ++j) {
            const auto& gj = set.main_grid(j);
            planes[j].assign(gj.count(), j == k ? c : 0.0f);
            mains[j] = {planes[j].data(), gj.cols, gj.rows, gj.cols};
        }
        std::vector<float> z(size_t(set.levels) * H * W);
        upsample_forward(mains, H, W, make_ups_views(m, false), z.data(), nullptr);
        for (size_t i = 0; i < size_t(H) * W; ++i)
            REQUIRE(z[size_t(k) * H * W + i] == Approx(c).margin(1e-4));
        (void)g;
    }
}

TEST_CASE("synthesis trivial parameter cases") {
    DecoderConfig cfg = DecoderConfig::hop();
    const int H = 16, W = 12;
    DecoderModel m = make_model(cfg, H, W);  // all zeros
    const int L = m.levels;
    std::vector<float> z(size_t(L) * H * W);
    ccodec_test::fill_uniform(z, 8, -2.0f, 2.0f);

    // all parameters zero -> output zero (clamped)
    std::vector<float> x(size_t(3) * H * W, 1.0f);
    synthesize_forward(z.data(), L, H, W, make_syn_view(m, false), x.data(), nullptr);
    for (float v : x) REQUIRE(v == 0.0f);

    // stabilizer-only path is a linear projection of z
    for (int c = 0; c < 3; ++c)
        for (int k = 0; k < L; ++k) m.syn.stab.v[size_t(c) * L + k] = (k == c) ? 1.0f : 0.5f / L;
    synthesize_forward(z.data(), L, H, W, make_syn_view(m, false), x.data(), nullptr, false);
    for (int c = 0; c < 3; ++c)
        for (size_t p = 0; p < size_t(H) * W; ++p) {
            double want = 0.0;
            for (int k = 0; k < L; ++k)
                want += double(m.syn.stab.v[size_t(c) * L + k]) * z[size_t(k) * H * W + p];
            REQUIRE(double(x[size_t(c) * H * W + p]) == Approx(want).margin(1e-5));
        }
}

TEST_CASE("synthesis output is always within [0,1]") {
    DecoderConfig cfg = DecoderConfig::mop();
    const int H = 24, W = 24;
    DecoderModel m = make_model(cfg, H, W);
    init_model(m, 17);
    for_each_param(m, [](ParamTensor& t) {  // exaggerate everything
        for (auto& v : t.v) v *= 20.0f;
    });
    std::vector<float> z(size_t(m.levels) * H * W);
    ccodec_test::fill_uniform(z, 9, -5.0f, 5.0f);
    std::vector<float> x(size_t(3) * H * W);
    synthesize_forward(z.data(), m.levels, H, W, make_syn_view(m, false), x.data(), nullptr);
    for (float v : x) {
        REQUIRE(v >= 0.0f);
        REQUIRE(v <= 1.0f);
    }
}

TEST_CASE("synthesis decomposes into stabilizer plus trunk/post paths") {
    DecoderConfig cfg = DecoderConfig::hop();
    const int H = 20, W = 28;
    DecoderModel m = make_model(cfg, H, W);
    init_model(m, 23);
    ccodec_test::fill_uniform(m.syn.stab.v, 24, -0.3f, 0.3f);
    for (auto& p : m.syn.post_w) ccodec_test::fill_uniform(p.v, 25, -0.2f, 0.2f);

    const int L = m.levels;
    std::vector<float> z(size_t(L) * H * W);
    ccodec_test::fill_uniform(z, 26, -1.5f, 1.5f);
    std::vector<float> full(size_t(3) * H * W), stab_only(full.size()), trunk_only(full.size());

    synthesize_forward(z.data(), L, H, W, make_syn_view(m, false), full.data(), nullptr, false);
    DecoderModel mt = m;
    std::fill(mt.syn.stab.v.begin(), mt.syn.stab.v.end(), 0.0f);
    synthesize_forward(z.data(), L, H, W, make_syn_view(mt, false), trunk_only.data(), nullptr,
                       false);
    DecoderModel ms = m;
    std::fill(ms.syn.c1.w.v.begin(), ms.syn.c1.w.v.end(), 0.0f);
    std::fill(ms.syn.c1.b.v.begin(), ms.syn.c1.b.v.end(), 0.0f);
    std::fill(ms.syn.c2.w.v.begin(), ms.syn.c2.w.v.end(), 0.0f);
    std::fill(ms.syn.c2.b.v.begin(), ms.syn.c2.b.v.end(), 0.0f);
    for (auto& p : ms.syn.post_w) std::fill(p.v.begin(), p.v.end(), 0.0f);
    for (auto& p : ms.syn.post_b) std::fill(p.v.begin(), p.v.end(), 0.0f);
    synthesize_forward(z.data(), L, H, W, make_syn_view(ms, false), stab_only.data(), nullptr,
                       false);
    for (size_t i = 0; i < full.size(); ++i)
        REQUIRE(double(full[i]) == Approx(double(stab_only[i]) + double(trunk_only[i])).margin(2e-5));
}

TEST_CASE("hypergrids never reach the synthesis") {
    DecoderConfig cfg = DecoderConfig::hop();
    DecoderModel m = make_model(cfg, 64, 64);
    init_model(m, 33);
    LatentSet a = random_quantized_set(64, 64, cfg, 1);
    LatentSet b = a;
    for (auto& g : b.grids)
        if (g.hyper)
            for (auto& q : g.q) q += 5;  // only hyper values differ
    const Image ia = reconstruct_image(a, m);
    const Image ib = reconstruct_image(b, m);
    REQUIRE(ia.pix == ib.pix);
}

TEST_CASE("complexity accounting matches the architecture bands") {
    // HOP at 512x768 lands near 2.0 kMAC/pixel, LOP near 0.5, and the counts
    // scale per-pixel (doubling the size barely moves them)
    const double hop = count_macs_per_pixel(DecoderConfig::hop(), 512, 768);
    REQUIRE(hop > 2000.0 * 0.75);
    REQUIRE(hop < 2000.0 * 1.25);
    const double lop = count_macs_per_pixel(DecoderConfig::lop(), 512, 768);
    REQUIRE(lop > 500.0 * 0.75);
    REQUIRE(lop < 500.0 * 1.25);
    const double mop = count_macs_per_pixel(DecoderConfig::mop(), 512, 768);
    REQUIRE(mop > 1000.0 * 0.75);
    REQUIRE(mop < 1000.0 * 1.25);
    const double vhop = count_macs_per_pixel(DecoderConfig::vhop(), 512, 768);
    REQUIRE(vhop > 3000.0 * 0.75);
    REQUIRE(vhop < 3000.0 * 1.25);

    const double hop2 = count_macs_per_pixel(DecoderConfig::hop(), 1024, 1536);
    REQUIRE(hop2 == Approx(hop).epsilon(0.05));
}

TEST_CASE("upsample/synthesize double-precision gradient check end to end") {
    // small double instantiation of the full step-B path
    const int H = 9, W = 7, L = 3;
    std::vector<std::vector<double>> planes(L);
    std::vector<PlaneRef<double>> mains(L);
    std::vector<int> rows(L), cols(L);
    for (int k = 0; k < L; ++k) {
        rows[k] = ceil_div(H, 1 << k);
        cols[k] = ceil_div(W, 1 << k);
        planes[k].resize(size_t(rows[k]) * cols[k]);
        ccodec_test::fill_uniform(planes[k], 40 + k, -1.5, 1.5);
        mains[k] = {planes[k].data(), cols[k], rows[k], cols[k]};
    }
    std::vector<double> k4a = {-0.02, -0.07, 0.23, 0.87}, r3a = {0.9, 0.05, -0.02};
    std::vector<double> k4b = {-0.01, -0.06, 0.21, 0.85}, r3b = {1.05, -0.04, 0.01};
    std::vector<double> dk4a(4, 0.0), dr3a(3, 0.0), dk4b(4, 0.0), dr3b(3, 0.0);
    std::vector<UpsampleStageView<double>> stages = {
        {k4a.data(), r3a.data(), dk4a.data(), dr3a.data()},
        {k4b.data(), r3b.data(), dk4b.data(), dr3b.data()},
    };
    std::vector<double> coef(size_t(L) * H * W);
    ccodec_test::fill_uniform(coef, 55, -1.0, 1.0);

    auto eval = [&]() {
        std::vector<double> z(size_t(L) * H * W);
        std::vector<UpsampleStageView<double>> sv = {{k4a.data(), r3a.data(), nullptr, nullptr},
                                                     {k4b.data(), r3b.data(), nullptr, nullptr}};
        upsample_forward(mains, H, W, sv, z.data(), nullptr);
        double acc = 0.0;
        for (size_t i = 0; i < z.size(); ++i) acc += coef[i] * z[i];
        return acc;
    };
    UpsampleCache<double> cache;
    std::vector<double> z(size_t(L) * H * W);
    upsample_forward(mains, H, W, stages, z.data(), &cache);
    std::vector<std::vector<double>> dplanes(L);
    std::vector<PlaneGrad<double>> dmains(L);
    for (int k = 0; k < L; ++k) {
        dplanes[k].assign(planes[k].size(), 0.0);
        dmains[k] = {dplanes[k].data(), cols[k]};
    }
    upsample_backward(mains, H, W, stages, cache, coef.data(), dmains);

    std::vector<double*> coords;
    std::vector<double> analytic;
    for (int k = 0; k < L; ++k)
        for (size_t i = 0; i < planes[k].size(); ++i) {
            coords.push_back(&planes[k][i]);
            analytic.push_back(dplanes[k][i]);
        }
    for (int i = 0; i < 4; ++i) { coords.push_back(&k4a[i]); analytic.push_back(dk4a[i]); }
    for (int i = 0; i < 3; ++i) { coords.push_back(&r3a[i]); analytic.push_back(dr3a[i]); }
    for (int i = 0; i < 4; ++i) { coords.push_back(&k4b[i]); analytic.push_back(dk4b[i]); }
    for (int i = 0; i < 3; ++i) { coords.push_back(&r3b[i]); analytic.push_back(dr3b[i]); }
    auto rep = ccodec_test::fd_check<double>(coords, eval,
                                             [&](size_t i) { return analytic[i]; }, 1e-5);
    REQUIRE(rep.max_rel < 1e-4);
}
