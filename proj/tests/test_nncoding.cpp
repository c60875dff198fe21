#include <catch2/catch_amalgamated.hpp>

#include "coolcodec/coolcodec.hpp"
#include "testutil.hpp"

using namespace coolcodec;
using Catch::Approx;

namespace {

std::string bits_of(const std::function<void(BitWriter&)>& f, size_t* nbits = nullptr) {
    BitWriter bw;
    f(bw);
    const size_t n = bw.bit_count();
    if (nbits) *nbits = n;
    auto bytes = bw.finish();
    std::string s;
    for (size_t i = 0; i < n; ++i) s += ((bytes[i >> 3] >> (7 - (i & 7))) & 1) ? '1' : '0';
    return s;
}

}  // namespace

TEST_CASE("exp-golomb code table at order 0 and 1") {
    REQUIRE(bits_of([](BitWriter& b) { expgolomb_encode(b, 0, 0); }) == "1");
    REQUIRE(bits_of([](BitWriter& b) { expgolomb_encode(b, 1, 0); }) == "010");
    REQUIRE(bits_of([](BitWriter& b) { expgolomb_encode(b, -1, 0); }) == "011");
    // order 1, u = 0 (v = 0): prefix "1" plus one suffix bit
    REQUIRE(bits_of([](BitWriter& b) { expgolomb_encode(b, 0, 1); }) == "10");
}

TEST_CASE("exp-golomb round trip over the full signaling range") {
    for (int k = 0; k <= 7; ++k) {
        BitWriter bw;
        for (int v = -4096; v <= 4096; ++v) expgolomb_encode(bw, v, k);
        const auto bytes = bw.finish();
        BitReader br(bytes.data(), bytes.size());
        for (int v = -4096; v <= 4096; ++v) REQUIRE(expgolomb_decode(br, k) == v);
    }
}

TEST_CASE("exp-golomb length formula matches emitted bits") {
    for (int i = 0; i < 10000; ++i) {
        const uint64_t s = splitmix64(i);
        const int k = int(s % 8);
        const int32_t v = int32_t(int64_t(s >> 8) % 100000) - 50000;
        size_t nbits = 0;
        bits_of([&](BitWriter& b) { expgolomb_encode(b, v, k); }, &nbits);
        const uint32_t u = zigzag_encode(v);
        REQUIRE(int(nbits) == expgolomb_length(u, k));
        // formula restated: 2*floor(log2(floor(u/2^k)+1)) + 1 + k
        const int want = 2 * int(std::floor(std::log2(double((u >> k) + 1)))) + 1 + k;
        REQUIRE(int(nbits) == want);
    }
}

TEST_CASE("malformed exp-golomb prefix raises a bitstream error") {
    const std::vector<uint8_t> zeros(8, 0x00);
    BitReader br(zeros.data(), zeros.size());
    REQUIRE_THROWS_AS(expgolomb_decode(br, 0), FormatError);
}

TEST_CASE("parameter quantization arithmetic") {
    // p = 0.3 at step 2^-3: q = round(2.4) = 2, dequantized 0.25
    REQUIRE(int32_t(std::lround(0.3 / nn_delta_from_index(2))) == 2);
    REQUIRE(nn_delta_from_index(2) == Approx(0.125));
    REQUIRE(2.0 * nn_delta_from_index(2) == Approx(0.25));
    // ties away from zero
    REQUIRE(int32_t(std::lround(-1.5)) == -2);
    // indices cover 2^-1 .. 2^-8, coarse first
    REQUIRE(nn_delta_from_index(0) == Approx(0.5));
    REQUIRE(nn_delta_from_index(7) == Approx(1.0 / 256.0));
}

TEST_CASE("nn payload round trip restores the exact dequantized parameters") {
    DecoderConfig cfg = DecoderConfig::hop();
    DecoderModel m = make_model(cfg, 200, 300);
    init_model(m, 9);
    NnQuantSpec spec;
    for (int s = 0; s < kSubmoduleCount; ++s) {
        spec.parts[size_t(s)][0] = {int(splitmix64(s) % 8), int(splitmix64(s + 10) % 8)};
        spec.parts[size_t(s)][1] = {int(splitmix64(s + 20) % 8), int(splitmix64(s + 30) % 8)};
    }
    const auto payload = write_nn_payload(m, spec);

    // the writer's dequantized view of the parameters
    DecoderModel want = m;
    for (int s = 0; s < kSubmoduleCount; ++s) {
        auto sp = submodule_params(want, Submodule(s));
        for (int part = 0; part < 2; ++part) {
            auto tensors = part == 1 ? sp.biases : sp.weights;
            const double delta = nn_delta_from_index(spec.parts[size_t(s)][size_t(part)].delta_idx);
            for (auto* t : tensors)
                for (auto& v : t->v) v = float(double(std::lround(double(v) / delta)) * delta);
        }
    }
    DecoderModel got = make_model(cfg, 200, 300);
    const NnQuantSpec rspec = read_nn_payload(got, payload.data(), payload.size());
    for (int s = 0; s < kSubmoduleCount; ++s)
        for (int part = 0; part < 2; ++part) {
            REQUIRE(rspec.parts[size_t(s)][size_t(part)].delta_idx ==
                    spec.parts[size_t(s)][size_t(part)].delta_idx);
            REQUIRE(rspec.parts[size_t(s)][size_t(part)].kappa ==
                    spec.parts[size_t(s)][size_t(part)].kappa);
        }
    bool same = true;
    for_each_param(want, [&](ParamTensor& t) {
        ParamTensor* other = nullptr;
        for_each_param(got, [&](ParamTensor& t2) {
            if (t2.name == t.name) other = &t2;
        });
        REQUIRE(other != nullptr);
        if (other->v != t.v) same = false;
    });
    REQUIRE(same);
}

TEST_CASE("nn payload: corrupted count raises a format error") {
    DecoderConfig cfg = DecoderConfig::lop();
    DecoderModel m = make_model(cfg, 64, 64);
    init_model(m, 3);
    NnQuantSpec spec;  // defaults
    auto payload = write_nn_payload(m, spec);
    payload[2] ^= 0xFF;  // clobber the first count field
    DecoderModel got = make_model(cfg, 64, 64);
    REQUIRE_THROWS_AS(read_nn_payload(got, payload.data(), payload.size()), FormatError);
}

TEST_CASE("greedy selection beats quantizing everything at the finest step") {
    const int H = 48, W = 48;
    DecoderConfig cfg = DecoderConfig::lop();
    DecoderModel m = make_model(cfg, H, W);
    init_model(m, 77);
    LatentSet lat = build_latents(H, W, cfg);
    for (auto& g : lat.grids)
        for (size_t i = 0; i < g.q.size(); ++i)
            g.q[i] = int32_t(splitmix64(i * 3 + g.level) % 5) - 2;
    for (auto& g : lat.grids) g.amp = measure_amplitude(g);
    const Image x = ccodec_test::make_test_image(H, W, 5);
    const auto ctx = make_context_offsets(cfg.spatial_ctx);
    const double lambda = 0.001;

    DecoderModel greedy = m;
    const NnCodingResult res = select_nn_coding(x, lat, greedy, lambda, ctx);

    DecoderModel finest = m;
    NnQuantSpec fspec;
    for (auto& sub : fspec.parts)
        for (auto& part : sub) part.delta_idx = 7;  // 2^-8 everywhere
    // apply the finest quantization and pick per-part optimal kappa
    double fine_bits = 0.0;
    for (int s = 0; s < kSubmoduleCount; ++s) {
        auto sp = submodule_params(finest, Submodule(s));
        for (int part = 0; part < 2; ++part) {
            auto tensors = part == 1 ? sp.biases : sp.weights;
            std::vector<int32_t> q;
            for (auto* t : tensors)
                for (float v : t->v) q.push_back(int32_t(std::lround(double(v) * 256.0)));
            size_t best = size_t(-1);
            for (int k = 0; k <= 7; ++k) {
                size_t bits = 0;
                for (int32_t v : q) bits += size_t(expgolomb_length(zigzag_encode(v), k));
                best = std::min(best, bits);
            }
            fine_bits += double(best) + 22.0;
            size_t i = 0;
            for (auto* t : tensors)
                for (auto& v : t->v) v = float(double(q[i++]) / 256.0);
        }
    }
    const double fine_cost =
        mse_rgb(reconstruct_image(lat, finest), x) +
        lambda * (latent_rate_estimate(lat, finest, ctx) + fine_bits) / double(H * W);
    REQUIRE(res.cost <= fine_cost);
}

TEST_CASE("zero-parameter submodule part ties toward the largest step") {
    // the upsampling submodule has no biases
    const int H = 32, W = 32;
    DecoderConfig cfg = DecoderConfig::lop();
    DecoderModel m = make_model(cfg, H, W);
    init_model(m, 11);
    LatentSet lat = build_latents(H, W, cfg);
    quantize_all(lat);
    const Image x = ccodec_test::make_test_image(H, W, 6);
    const auto ctx = make_context_offsets(cfg.spatial_ctx);
    auto sp = submodule_params(m, Submodule::Upsampling);
    REQUIRE(sp.biases.empty());
    const NnCodingResult res = select_nn_coding(x, lat, m, 0.001, ctx);
    REQUIRE(res.spec.parts[size_t(Submodule::Upsampling)][1].delta_idx == 0);
    REQUIRE(res.spec.parts[size_t(Submodule::Upsampling)][1].kappa == 0);
}
