#include <catch2/catch_amalgamated.hpp>

#include "coolcodec/coolcodec.hpp"
#include "testutil.hpp"

using namespace coolcodec;
using Catch::Approx;

namespace {

// Random projection objective: L = sum_i coef_i * out_i, evaluated in double.
struct Proj {
    std::vector<double> coef;
    double operator()(const std::vector<double>& out) const {
        double acc = 0.0;
        for (size_t i = 0; i < out.size(); ++i) acc += coef[i] * out[i];
        return acc;
    }
};

constexpr double kFdH = 1e-4;
constexpr double kFdTol = 1e-4;

}  // namespace

TEST_CASE("dense forward trivial cases") {
    // zero weights -> output equals bias
    ParamTensor w("w", ParamRole::Weight, {3, 4});
    ParamTensor b("b", ParamRole::Bias, {3});
    b.v = {1.0f, -2.0f, 0.5f};
    Pipeline p;
    LayerNode n;
    n.kind = LayerKind::Dense;
    n.name = "dense";
    n.weight = &w;
    n.bias = &b;
    p.add(n);
    auto out = p.forward({0.3f, -1.0f, 2.0f, 0.7f});
    REQUIRE(out == std::vector<float>{1.0f, -2.0f, 0.5f});
}

TEST_CASE("pointwise conv identity channel matrix") {
    ParamTensor w("w", ParamRole::Weight, {2, 2});
    w.v = {1.0f, 0.0f, 0.0f, 1.0f};
    Pipeline p;
    LayerNode n;
    n.kind = LayerKind::Conv1x1;
    n.name = "conv1x1";
    n.weight = &w;
    n.in_ch = 2;
    n.out_ch = 2;
    p.add(n);
    const std::vector<float> x = {0.1f, 0.2f, 0.3f, -0.4f, 0.5f, -0.6f};
    REQUIRE(p.forward(x) == x);
}

TEST_CASE("softround matches direct evaluation of the defining formula") {
    // s_0.35(0.3): value derived by evaluating the formula independently
    const double want = ccodec_test::ref_softround(0.3, 0.35);
    REQUIRE(want == Approx(0.2103).margin(2e-4));  // sanity of the oracle itself
    REQUIRE(double(softround_value(0.3f, 0.35f)) == Approx(want).margin(1e-4));
    REQUIRE(double(softround_value(0.3, 0.35)) == Approx(want).margin(1e-9));

    // derivative at the basin center: (1 - tanh^2(0)) / (2 T tanh(1/(2T)))
    const double dwant = 1.0 / (2.0 * 0.35 * std::tanh(1.0 / 0.7));
    REQUIRE(dwant == Approx(1.603).margin(2e-3));
    double x = 0.5, th, dx = 0.0, dy = 1.0;
    softround_forward(&x, &x, &th, 1, 0.35);
    softround_backward(&dy, &th, &dx, 1, 0.35);
    REQUIRE(dx == Approx(dwant).margin(1e-9));
}

TEST_CASE("backward of x^2 at x=3 gives 6") {
    Pipeline p;
    LayerNode n;
    n.kind = LayerKind::Mse;
    n.name = "mse";
    n.target = {0.0f};
    p.add(n);
    auto out = p.forward({3.0f});
    REQUIRE(out[0] == Approx(9.0));
    p.backward(1.0f);
    REQUIRE(p.input_grad[0] == Approx(6.0));
}

TEST_CASE("forward is pure: identical inputs and noise draws repeat bitwise") {
    ParamTensor w("w", ParamRole::Weight, {4, 4});
    ccodec_test::fill_uniform(w.v, 7, -1.0f, 1.0f);
    Pipeline p;
    LayerNode d;
    d.kind = LayerKind::Dense;
    d.name = "d";
    d.weight = &w;
    p.add(d);
    LayerNode nz;
    nz.kind = LayerKind::AdditiveNoise;
    nz.name = "noise";
    nz.noise_std = 0.25f;
    nz.noise_stream = 42;
    p.add(nz);
    LayerNode sr;
    sr.kind = LayerKind::Softround;
    sr.name = "sr";
    sr.temp = 0.3f;
    p.add(sr);
    const std::vector<float> x = {0.3f, -0.7f, 1.9f, 0.05f};
    const auto a = p.forward(x);
    const auto b = p.forward(x);
    REQUIRE(a == b);
}

TEST_CASE("gradient of a sum of losses equals the sum of gradients") {
    ParamTensor w("w", ParamRole::Weight, {3, 3});
    ccodec_test::fill_uniform(w.v, 11, -1.0f, 1.0f);
    auto run = [&](const std::vector<float>& up) {
        Pipeline p;
        LayerNode d;
        d.kind = LayerKind::Dense;
        d.name = "d";
        d.weight = &w;
        p.add(d);
        p.forward({0.4f, -0.2f, 0.9f});
        p.backward(up);
        return p.input_grad;
    };
    const std::vector<float> ua = {0.5f, -1.0f, 2.0f};
    const std::vector<float> ub = {1.5f, 0.25f, -0.75f};
    std::vector<float> usum(3);
    for (int i = 0; i < 3; ++i) usum[i] = ua[i] + ub[i];
    const auto ga = run(ua);
    const auto gb = run(ub);
    const auto gs = run(usum);
    for (int i = 0; i < 3; ++i) REQUIRE(gs[i] == Approx(ga[i] + gb[i]).margin(1e-6));
}

// ---------------------------------------------------------------------------
// Finite-difference suite: every layer kind, 100 random instances each,
// analytic gradients vs central differences at h = 1e-4.
// ---------------------------------------------------------------------------

TEST_CASE("finite differences: dense") {
    for (int inst = 0; inst < 100; ++inst) {
        const uint64_t s = splitmix64(1000 + inst);
        const int k = 2 + int(s % 5), m = 2 + int((s >> 8) % 5);
        std::vector<double> x(k), w(size_t(m) * k), b(m), coef(m);
        ccodec_test::fill_uniform(x, s + 1, -2.0, 2.0);
        ccodec_test::fill_uniform(w, s + 2, -1.0, 1.0);
        ccodec_test::fill_uniform(b, s + 3, -1.0, 1.0);
        ccodec_test::fill_uniform(coef, s + 4, -1.0, 1.0);
        auto eval = [&]() {
            std::vector<double> wt(w.size()), y(m);
            transpose(w.data(), wt.data(), m, k);
            gemm_xwt(x.data(), wt.data(), b.data(), y.data(), 1, k, m);
            double acc = 0.0;
            for (int i = 0; i < m; ++i) acc += coef[i] * y[i];
            return acc;
        };
        std::vector<double> dx(k, 0.0), dw(w.size(), 0.0), db(m, 0.0);
        gemm_xwt(coef.data(), w.data(), nullptr, dx.data(), 1, m, k, true);
        gemm_add_dw(x.data(), coef.data(), dw.data(), db.data(), 1, k, m);
        std::vector<double*> coords;
        std::vector<double> analytic;
        for (int i = 0; i < k; ++i) { coords.push_back(&x[i]); analytic.push_back(dx[i]); }
        for (size_t i = 0; i < w.size(); ++i) { coords.push_back(&w[i]); analytic.push_back(dw[i]); }
        for (int i = 0; i < m; ++i) { coords.push_back(&b[i]); analytic.push_back(db[i]); }
        auto rep = ccodec_test::fd_check<double>(coords, eval,
                                                 [&](size_t i) { return analytic[i]; }, kFdH);
        REQUIRE(rep.max_rel < kFdTol);
    }
}

TEST_CASE("finite differences: pointwise conv") {
    for (int inst = 0; inst < 100; ++inst) {
        const uint64_t s = splitmix64(2000 + inst);
        const int cin = 1 + int(s % 3), cout = 1 + int((s >> 8) % 3), npix = 4 + int((s >> 16) % 5);
        std::vector<double> x(size_t(cin) * npix), w(size_t(cout) * cin), b(cout),
            coef(size_t(cout) * npix);
        ccodec_test::fill_uniform(x, s + 1, -2.0, 2.0);
        ccodec_test::fill_uniform(w, s + 2, -1.0, 1.0);
        ccodec_test::fill_uniform(b, s + 3, -1.0, 1.0);
        ccodec_test::fill_uniform(coef, s + 4, -1.0, 1.0);
        auto eval = [&]() {
            std::vector<double> y(size_t(cout) * npix);
            conv1x1_forward(x.data(), w.data(), b.data(), y.data(), cin, cout, size_t(npix));
            double acc = 0.0;
            for (size_t i = 0; i < y.size(); ++i) acc += coef[i] * y[i];
            return acc;
        };
        std::vector<double> dx(x.size(), 0.0), dw(w.size(), 0.0), db(b.size(), 0.0);
        conv1x1_backward(x.data(), w.data(), coef.data(), dx.data(), dw.data(), db.data(), cin,
                         cout, size_t(npix));
        std::vector<double*> coords;
        std::vector<double> analytic;
        for (size_t i = 0; i < x.size(); ++i) { coords.push_back(&x[i]); analytic.push_back(dx[i]); }
        for (size_t i = 0; i < w.size(); ++i) { coords.push_back(&w[i]); analytic.push_back(dw[i]); }
        for (size_t i = 0; i < b.size(); ++i) { coords.push_back(&b[i]); analytic.push_back(db[i]); }
        auto rep = ccodec_test::fd_check<double>(coords, eval,
                                                 [&](size_t i) { return analytic[i]; }, kFdH);
        REQUIRE(rep.max_rel < kFdTol);
    }
}

TEST_CASE("finite differences: conv3x3 with replicate padding") {
    for (int inst = 0; inst < 100; ++inst) {
        const uint64_t s = splitmix64(3000 + inst);
        const int cin = 1 + int(s % 2), cout = 1 + int((s >> 8) % 2);
        const int h = 2 + int((s >> 16) % 4), wd = 1 + int((s >> 24) % 5);
        std::vector<double> x(size_t(cin) * h * wd), w(size_t(cout) * cin * 9), b(cout),
            coef(size_t(cout) * h * wd);
        ccodec_test::fill_uniform(x, s + 1, -2.0, 2.0);
        ccodec_test::fill_uniform(w, s + 2, -1.0, 1.0);
        ccodec_test::fill_uniform(b, s + 3, -1.0, 1.0);
        ccodec_test::fill_uniform(coef, s + 4, -1.0, 1.0);
        auto eval = [&]() {
            std::vector<double> y(size_t(cout) * h * wd);
            conv3x3_forward(x.data(), w.data(), b.data(), y.data(), cin, cout, h, wd);
            double acc = 0.0;
            for (size_t i = 0; i < y.size(); ++i) acc += coef[i] * y[i];
            return acc;
        };
        std::vector<double> dx(x.size(), 0.0), dw(w.size(), 0.0), db(b.size(), 0.0);
        conv3x3_backward(x.data(), w.data(), coef.data(), dx.data(), dw.data(), db.data(), cin,
                         cout, h, wd);
        std::vector<double*> coords;
        std::vector<double> analytic;
        for (size_t i = 0; i < x.size(); ++i) { coords.push_back(&x[i]); analytic.push_back(dx[i]); }
        for (size_t i = 0; i < w.size(); ++i) { coords.push_back(&w[i]); analytic.push_back(dw[i]); }
        for (size_t i = 0; i < b.size(); ++i) { coords.push_back(&b[i]); analytic.push_back(db[i]); }
        auto rep = ccodec_test::fd_check<double>(coords, eval,
                                                 [&](size_t i) { return analytic[i]; }, kFdH);
        REQUIRE(rep.max_rel < kFdTol);
    }
}

TEST_CASE("finite differences: symmetric x2 transposed conv (rows+cols)") {
    for (int inst = 0; inst < 100; ++inst) {
        const uint64_t s = splitmix64(4000 + inst);
        const int h = 2 + int(s % 4), wd = 2 + int((s >> 8) % 4);
        const int oh = 2 * h - int((s >> 16) % 2), ow = 2 * wd - int((s >> 24) % 2);
        std::vector<double> x(size_t(h) * wd), k4(4), coef(size_t(oh) * ow);
        ccodec_test::fill_uniform(x, s + 1, -2.0, 2.0);
        ccodec_test::fill_uniform(k4, s + 2, -1.0, 1.0);
        ccodec_test::fill_uniform(coef, s + 4, -1.0, 1.0);
        auto eval = [&]() {
            std::vector<double> rowt(size_t(h) * ow), y(size_t(oh) * ow);
            tconv2x_rows_forward(x.data(), h, wd, wd, rowt.data(), ow, k4.data());
            tconv2x_cols_forward(rowt.data(), h, ow, y.data(), oh, k4.data());
            double acc = 0.0;
            for (size_t i = 0; i < y.size(); ++i) acc += coef[i] * y[i];
            return acc;
        };
        std::vector<double> rowt(size_t(h) * ow);
        tconv2x_rows_forward(x.data(), h, wd, wd, rowt.data(), ow, k4.data());
        std::vector<double> dx(x.size(), 0.0), dk(4, 0.0), drow(rowt.size(), 0.0);
        tconv2x_cols_backward(rowt.data(), coef.data(), h, ow, oh, k4.data(), drow.data(),
                              dk.data());
        tconv2x_rows_backward(x.data(), drow.data(), h, wd, wd, ow, k4.data(), dx.data(),
                              dk.data());
        std::vector<double*> coords;
        std::vector<double> analytic;
        for (size_t i = 0; i < x.size(); ++i) { coords.push_back(&x[i]); analytic.push_back(dx[i]); }
        for (int i = 0; i < 4; ++i) { coords.push_back(&k4[i]); analytic.push_back(dk[i]); }
        auto rep = ccodec_test::fd_check<double>(coords, eval,
                                                 [&](size_t i) { return analytic[i]; }, kFdH);
        REQUIRE(rep.max_rel < kFdTol);
    }
}

TEST_CASE("finite differences: symmetric 3x3 refinement") {
    for (int inst = 0; inst < 100; ++inst) {
        const uint64_t s = splitmix64(5000 + inst);
        const int h = 1 + int(s % 5), wd = 1 + int((s >> 8) % 5);
        std::vector<double> x(size_t(h) * wd), k3(3), coef(x.size());
        ccodec_test::fill_uniform(x, s + 1, -2.0, 2.0);
        ccodec_test::fill_uniform(k3, s + 2, -1.0, 1.0);
        ccodec_test::fill_uniform(coef, s + 4, -1.0, 1.0);
        auto eval = [&]() {
            std::vector<double> y(x.size());
            conv3x3_sym_forward(x.data(), h, wd, y.data(), k3[0], k3[1], k3[2]);
            double acc = 0.0;
            for (size_t i = 0; i < y.size(); ++i) acc += coef[i] * y[i];
            return acc;
        };
        std::vector<double> dx(x.size(), 0.0), dk(3, 0.0);
        conv3x3_sym_backward(x.data(), coef.data(), h, wd, k3[0], k3[1], k3[2], dx.data(),
                             dk.data());
        std::vector<double*> coords;
        std::vector<double> analytic;
        for (size_t i = 0; i < x.size(); ++i) { coords.push_back(&x[i]); analytic.push_back(dx[i]); }
        for (int i = 0; i < 3; ++i) { coords.push_back(&k3[i]); analytic.push_back(dk[i]); }
        auto rep = ccodec_test::fd_check<double>(coords, eval,
                                                 [&](size_t i) { return analytic[i]; }, kFdH);
        REQUIRE(rep.max_rel < kFdTol);
    }
}

TEST_CASE("finite differences: nearest-neighbor upsample (scatter-sum gradient)") {
    for (int inst = 0; inst < 100; ++inst) {
        const uint64_t s = splitmix64(6000 + inst);
        const int h = 1 + int(s % 3), wd = 1 + int((s >> 8) % 3);
        const int f = 1 << (1 + int((s >> 16) % 2));
        const int oh = h * f - int((s >> 24) % 2), ow = wd * f;
        std::vector<double> x(size_t(h) * wd), coef(size_t(oh) * ow);
        ccodec_test::fill_uniform(x, s + 1, -2.0, 2.0);
        ccodec_test::fill_uniform(coef, s + 4, -1.0, 1.0);
        auto eval = [&]() {
            std::vector<double> y(size_t(oh) * ow);
            nn_upsample_forward(x.data(), h, wd, y.data(), oh, ow);
            double acc = 0.0;
            for (size_t i = 0; i < y.size(); ++i) acc += coef[i] * y[i];
            return acc;
        };
        std::vector<double> dx(x.size(), 0.0);
        nn_upsample_backward(coef.data(), oh, ow, dx.data(), h, wd);
        std::vector<double*> coords;
        for (auto& v : x) coords.push_back(&v);
        auto rep =
            ccodec_test::fd_check<double>(coords, eval, [&](size_t i) { return dx[i]; }, kFdH);
        REQUIRE(rep.max_rel < kFdTol);
    }
}

TEST_CASE("finite differences: softround") {
    for (int inst = 0; inst < 100; ++inst) {
        const uint64_t s = splitmix64(7000 + inst);
        const int n = 3 + int(s % 5);
        const double temp = 0.15 + 0.5 * unit_from_bits(splitmix64(s + 9));
        std::vector<double> x(n), coef(n);
        // keep fractional parts away from the floor discontinuity
        for (int i = 0; i < n; ++i) {
            const double frac = 0.1 + 0.8 * unit_from_bits(splitmix64(s + 20 + i));
            x[i] = double(int(splitmix64(s + 40 + i) % 9)) - 4.0 + frac;
        }
        ccodec_test::fill_uniform(coef, s + 4, -1.0, 1.0);
        auto eval = [&]() {
            std::vector<double> y(n), th(n);
            softround_forward(x.data(), y.data(), th.data(), size_t(n), temp);
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += coef[i] * y[i];
            return acc;
        };
        std::vector<double> y(n), th(n), dx(n, 0.0);
        softround_forward(x.data(), y.data(), th.data(), size_t(n), temp);
        softround_backward(coef.data(), th.data(), dx.data(), size_t(n), temp);
        std::vector<double*> coords;
        for (auto& v : x) coords.push_back(&v);
        auto rep =
            ccodec_test::fd_check<double>(coords, eval, [&](size_t i) { return dx[i]; }, kFdH);
        REQUIRE(rep.max_rel < kFdTol);
    }
}

TEST_CASE("finite differences: additive noise passes gradient through") {
    for (int inst = 0; inst < 100; ++inst) {
        const uint64_t s = splitmix64(8000 + inst);
        const int n = 2 + int(s % 6);
        std::vector<double> x(n), coef(n);
        ccodec_test::fill_uniform(x, s + 1, -2.0, 2.0);
        ccodec_test::fill_uniform(coef, s + 4, -1.0, 1.0);
        auto eval = [&]() {
            std::vector<double> y(n);
            add_noise_forward(x.data(), y.data(), size_t(n), 0.37, /*stream=*/s);
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += coef[i] * y[i];
            return acc;
        };
        std::vector<double*> coords;
        for (auto& v : x) coords.push_back(&v);
        auto rep =
            ccodec_test::fd_check<double>(coords, eval, [&](size_t i) { return coef[i]; }, kFdH);
        REQUIRE(rep.max_rel < kFdTol);
    }
}

TEST_CASE("finite differences: laplace rate") {
    for (int inst = 0; inst < 100; ++inst) {
        const uint64_t s = splitmix64(9000 + inst);
        const int n = 2 + int(s % 5);
        std::vector<double> v(n), mu(n), sig(n), coef(n);
        ccodec_test::fill_uniform(v, s + 1, -3.0, 3.0);
        ccodec_test::fill_uniform(mu, s + 2, -3.0, 3.0);
        ccodec_test::fill_uniform(sig, s + 3, 0.5, 4.0);
        ccodec_test::fill_uniform(coef, s + 4, 0.1, 1.0);
        auto eval = [&]() {
            std::vector<double> bits(n);
            laplace_rate_forward(v.data(), mu.data(), sig.data(), bits.data(), size_t(n));
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += coef[i] * bits[i];
            return acc;
        };
        std::vector<double> dv(n, 0.0), dmu(n, 0.0), dsig(n, 0.0);
        laplace_rate_backward(v.data(), mu.data(), sig.data(), coef.data(), dv.data(), dmu.data(),
                              dsig.data(), size_t(n));
        std::vector<double*> coords;
        std::vector<double> analytic;
        for (int i = 0; i < n; ++i) { coords.push_back(&v[i]); analytic.push_back(dv[i]); }
        for (int i = 0; i < n; ++i) { coords.push_back(&mu[i]); analytic.push_back(dmu[i]); }
        for (int i = 0; i < n; ++i) { coords.push_back(&sig[i]); analytic.push_back(dsig[i]); }
        auto rep = ccodec_test::fd_check<double>(coords, eval,
                                                 [&](size_t i) { return analytic[i]; }, kFdH);
        REQUIRE(rep.max_rel < kFdTol);
    }
}

TEST_CASE("finite differences: mse") {
    for (int inst = 0; inst < 100; ++inst) {
        const uint64_t s = splitmix64(10000 + inst);
        const int n = 2 + int(s % 8);
        std::vector<double> a(n), b(n);
        ccodec_test::fill_uniform(a, s + 1, -1.0, 1.0);
        ccodec_test::fill_uniform(b, s + 2, -1.0, 1.0);
        auto eval = [&]() { return mse_forward(a.data(), b.data(), size_t(n)); };
        std::vector<double> da(n, 0.0);
        mse_backward(a.data(), b.data(), 1.0, da.data(), size_t(n));
        std::vector<double*> coords;
        for (auto& v : a) coords.push_back(&v);
        auto rep =
            ccodec_test::fd_check<double>(coords, eval, [&](size_t i) { return da[i]; }, kFdH);
        REQUIRE(rep.max_rel < kFdTol);
    }
}

TEST_CASE("pipeline reports shape mismatches and non-finite gradients") {
    ParamTensor w("w", ParamRole::Weight, {2, 3});
    Pipeline p;
    LayerNode n;
    n.kind = LayerKind::Dense;
    n.name = "dense";
    n.weight = &w;
    p.add(n);
    REQUIRE_THROWS_AS(p.forward({1.0f, 2.0f}), ConfigError);  // wants 3 inputs

    // a NaN parameter poisons the gradient; the backward names the layer
    Pipeline p2;
    ParamTensor w2("w2", ParamRole::Weight, {1, 1});
    w2.v = {std::numeric_limits<float>::quiet_NaN()};
    LayerNode n2;
    n2.kind = LayerKind::Dense;
    n2.name = "poisoned";
    n2.weight = &w2;
    p2.add(n2);
    p2.forward({1.0f});
    try {
        p2.backward(1.0f);
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        REQUIRE(std::string(e.what()).find("poisoned") != std::string::npos);
    }
}

TEST_CASE("fast math kernels match libm to float precision") {
    for (int i = 0; i < 2000; ++i) {
        const double x = -20.0 + 40.0 * unit_from_bits(splitmix64(i));
        REQUIRE(double(cc_exp(float(x))) == Approx(std::exp(x)).epsilon(1e-5));
        REQUIRE(double(cc_tanh(float(x))) == Approx(std::tanh(x)).margin(1e-6));
        const double p = 1e-8 + unit_from_bits(splitmix64(1000000 + i)) * 100.0;
        REQUIRE(double(cc_log(float(p))) == Approx(std::log(p)).margin(2e-6));
    }
}
