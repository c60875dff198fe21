#pragma once

#include <chrono>
#include <cstring>
#include <vector>

#include "coolcodec/decode_core.hpp"
#include "coolcodec/encoder.hpp"
#include "coolcodec/nn_coding.hpp"
#include "coolcodec/range_coder.hpp"

namespace coolcodec {

// ---------------------------------------------------------------------------
// Container layout (little-endian):
//   magic "CC50" | version u8 | H u16 | W u16 | config id u8 |
//   per-grid amplitude bounds u8 (decode order, count derived from H, W) |
//   NN payload length u32 | latent payload length u32 | payloads
// ---------------------------------------------------------------------------

inline constexpr char kMagic[4] = {'C', 'C', '5', '0'};
inline constexpr uint8_t kVersion = 1;

struct BitstreamHeader {
    uint16_t height = 0, width = 0;
    uint8_t config_id = 0;
    std::vector<uint8_t> amps;  // decode order: hyper coarse-to-fine, then main
    uint32_t nn_bytes = 0;
    uint32_t latent_bytes = 0;

    size_t byte_size() const { return 4 + 1 + 2 + 2 + 1 + amps.size() + 4 + 4; }
};

namespace wire {
inline void put_u16(std::vector<uint8_t>& v, uint16_t x) {
    v.push_back(uint8_t(x & 0xFF));
    v.push_back(uint8_t(x >> 8));
}
inline void put_u32(std::vector<uint8_t>& v, uint32_t x) {
    for (int i = 0; i < 4; ++i) v.push_back(uint8_t(x >> (8 * i)));
}
struct Cursor {
    const uint8_t* p;
    size_t n, at = 0;
    uint8_t u8() {
        if (at + 1 > n) throw FormatError("bitstream: truncated header");
        return p[at++];
    }
    uint16_t u16() { return uint16_t(u8()) | uint16_t(u8()) << 8; }
    uint32_t u32() {
        uint32_t x = 0;
        for (int i = 0; i < 4; ++i) x |= uint32_t(u8()) << (8 * i);
        return x;
    }
};
}  // namespace wire

inline std::vector<uint8_t> write_header(const BitstreamHeader& h) {
    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    out.push_back(kVersion);
    wire::put_u16(out, h.height);
    wire::put_u16(out, h.width);
    out.push_back(h.config_id);
    out.insert(out.end(), h.amps.begin(), h.amps.end());
    wire::put_u32(out, h.nn_bytes);
    wire::put_u32(out, h.latent_bytes);
    return out;
}

inline BitstreamHeader read_header(const uint8_t* data, size_t len) {
    wire::Cursor c{data, len};
    char magic[4];
    for (auto& ch : magic) ch = char(c.u8());
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bitstream: bad magic");
    if (c.u8() != kVersion) throw FormatError("bitstream: unsupported version");
    BitstreamHeader h;
    h.height = c.u16();
    h.width = c.u16();
    h.config_id = c.u8();
    if (h.config_id > 3) throw FormatError("bitstream: unknown decoder config");
    if (h.height < 1 || h.width < 1) throw FormatError("bitstream: bad dimensions");
    const DecoderConfig cfg = DecoderConfig::from_preset(Preset(h.config_id));
    const int levels = latent_levels(h.height, h.width);
    const int ngrids = levels + (cfg.use_hyperlatents ? levels - kHyperCoarsestLevel : 0);
    h.amps.resize(size_t(ngrids));
    for (auto& a : h.amps) a = c.u8();
    h.nn_bytes = c.u32();
    h.latent_bytes = c.u32();
    if (h.byte_size() + size_t(h.nn_bytes) + size_t(h.latent_bytes) > len)
        throw FormatError("bitstream: truncated payloads");
    return h;
}

// ---------------------------------------------------------------------------
// Latent transport. Encoding and decoding walk the grids in decode order,
// strictly sequential in raster order, deriving each symbol's CDF from the
// ARM on already-decoded values only. Both sides run the same code on the
// same dequantized parameters, so the CDF sequences match exactly.
// ---------------------------------------------------------------------------

namespace latent_wire {

// f(cum, nsym, value_ref) encodes or decodes one symbol.
template <typename F>
inline void walk_symbols(LatentSet& set, DecoderModel& m, const ContextOffsets& ctx, F&& f) {
    const auto arm = make_arm_view(m, false);
    const auto ifces = make_ifce_views(m, false);
    std::vector<float> cbuf(size_t(arm.d), 0.0f);
    std::vector<uint32_t> cum;
    for (size_t gi = 0; gi < set.grids.size(); ++gi) {
        auto& g = set.grids[gi];
        const int slot = g.hyper ? -1 : m.ifce_slot(g.level);
        const int rdim = slot >= 0 ? ifces[slot].rdim : 0;
        for (int j = int(ctx.off.size()); j < arm.d; ++j) cbuf[size_t(j)] = 0.0f;
        for (int r = 0; r < g.rows; ++r) {
            for (int c = 0; c < g.cols; ++c) {
                extract_spatial_context(g.q.data(), g.rows, g.cols, r, c, ctx, cbuf.data());
                if (slot >= 0) {
                    float rvec[kMaxFanOut];
                    for (int j = 0; j < rdim; ++j) {
                        const auto& s = set.grids[size_t(j)];
                        const int sh = s.level - g.level;
                        rvec[j] = float(s.q[size_t(r >> sh) * s.cols + (c >> sh)]);
                    }
                    const auto& fv = ifces[slot];
                    for (int j = 0; j < fv.fdim; ++j) {
                        float acc = fv.b[j];
                        const float* wr = fv.w + size_t(j) * rdim;
                        for (int k = 0; k < rdim; ++k) acc += wr[k] * rvec[k];
                        cbuf[ctx.off.size() + size_t(j)] = acc;
                    }
                }
                float mu, sigma;
                arm_forward_single(arm, cbuf.data(), mu, sigma);
                quantize_cdf(mu, sigma, g.amp, cum);
                f(cum, 2 * g.amp + 1, g.q[size_t(r) * g.cols + c]);
            }
        }
    }
}

}  // namespace latent_wire

inline std::vector<uint8_t> encode_latents(LatentSet& set, DecoderModel& m,
                                           const ContextOffsets& ctx) {
    RangeEncoder enc;
    latent_wire::walk_symbols(set, m, ctx, [&](const std::vector<uint32_t>& cum, int nsym,
                                               int32_t& value) {
        const int amp = (nsym - 1) / 2;
        const int sym = int(value) + amp;
        enc.encode(cum[size_t(sym)], cum[size_t(sym) + 1] - cum[size_t(sym)]);
    });
    return enc.finish();
}

inline void decode_latents(LatentSet& set, DecoderModel& m, const ContextOffsets& ctx,
                           const uint8_t* data, size_t len) {
    RangeDecoder dec(data, len);
    latent_wire::walk_symbols(set, m, ctx, [&](const std::vector<uint32_t>& cum, int nsym,
                                               int32_t& value) {
        const int amp = (nsym - 1) / 2;
        value = int32_t(dec.decode(cum.data(), nsym)) - amp;
    });
}

// ---------------------------------------------------------------------------
// Top-level encode/decode.
// ---------------------------------------------------------------------------

struct EncodeStats {
    size_t file_bytes = 0, nn_bytes = 0, latent_bytes = 0;
    double bpp = 0.0, psnr = 0.0;
    double latent_rate_estimate_bits = 0.0;  // cross-entropy estimate
    int64_t iterations = 0;
    double seconds = 0.0;
    double macs_per_pixel = 0.0;
    int restarts = 0;
};

struct EncodeResult {
    std::vector<uint8_t> bytes;
    Image recon;  // the decoder-side reconstruction (dequantized parameters)
    EncodeStats stats;
};

inline EncodeResult encode_image(const Image& img, const EncoderConfig& enc,
                                 const DecoderConfig& dcfg) {
    const auto t0 = std::chrono::steady_clock::now();
    if (img.h > 0xFFFF || img.w > 0xFFFF) throw ConfigError("image too large for header");
    TrainResult tr = train(img, enc, dcfg);
    const ContextOffsets ctx = make_context_offsets(dcfg.spatial_ctx);

    for (auto& g : tr.latents.grids) {
        g.amp = measure_amplitude(g);
        for (auto& q : g.q) q = std::min(std::max(q, -g.amp), g.amp);
    }
    NnCodingResult nn = select_nn_coding(img, tr.latents, tr.model, enc.lambda, ctx);
    const std::vector<uint8_t> latent_payload = encode_latents(tr.latents, tr.model, ctx);

    BitstreamHeader h;
    h.height = uint16_t(img.h);
    h.width = uint16_t(img.w);
    h.config_id = uint8_t(dcfg.preset);
    for (const auto& g : tr.latents.grids) h.amps.push_back(uint8_t(g.amp));
    h.nn_bytes = uint32_t(nn.payload.size());
    h.latent_bytes = uint32_t(latent_payload.size());

    EncodeResult res;
    res.bytes = write_header(h);
    res.bytes.insert(res.bytes.end(), nn.payload.begin(), nn.payload.end());
    res.bytes.insert(res.bytes.end(), latent_payload.begin(), latent_payload.end());
    res.recon = reconstruct_image(tr.latents, tr.model);

    res.stats.file_bytes = res.bytes.size();
    res.stats.nn_bytes = nn.payload.size();
    res.stats.latent_bytes = latent_payload.size();
    res.stats.bpp = 8.0 * double(res.bytes.size()) / (double(img.h) * double(img.w));
    res.stats.psnr = psnr_rgb(img, res.recon);
    res.stats.latent_rate_estimate_bits = total_rate_bits(tr.latents, tr.model, ctx);
    res.stats.iterations = tr.stats.iterations;
    res.stats.restarts = tr.stats.restarts;
    res.stats.macs_per_pixel = count_macs_per_pixel(dcfg, img.h, img.w);
    res.stats.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

struct DecodeStats {
    size_t file_bytes = 0, nn_bytes = 0, latent_bytes = 0;
    double bpp = 0.0;
    double macs_per_pixel = 0.0;
};

struct DecodeResult {
    Image img;
    DecodeStats stats;
};

inline DecodeResult decode_image(const uint8_t* data, size_t len) {
    const BitstreamHeader h = read_header(data, len);
    const DecoderConfig cfg = DecoderConfig::from_preset(Preset(h.config_id));
    LatentSet set = build_latents(h.height, h.width, cfg);
    if (h.amps.size() != set.grids.size()) throw FormatError("bitstream: amplitude count");
    for (size_t i = 0; i < set.grids.size(); ++i) set.grids[i].amp = int(h.amps[i]);

    DecoderModel model = make_model(cfg, h.height, h.width);
    const uint8_t* nn = data + h.byte_size();
    read_nn_payload(model, nn, h.nn_bytes);

    const ContextOffsets ctx = make_context_offsets(cfg.spatial_ctx);
    decode_latents(set, model, ctx, nn + h.nn_bytes, h.latent_bytes);  // step A
    DecodeResult res;
    res.img = reconstruct_image(set, model);  // step B, hyperlatents discarded
    res.stats.file_bytes = len;
    res.stats.nn_bytes = h.nn_bytes;
    res.stats.latent_bytes = h.latent_bytes;
    res.stats.bpp = 8.0 * double(len) / (double(h.height) * double(h.width));
    res.stats.macs_per_pixel = count_macs_per_pixel(cfg, h.height, h.width);
    return res;
}

inline DecodeResult decode_image(const std::vector<uint8_t>& bytes) {
    return decode_image(bytes.data(), bytes.size());
}

}  // namespace coolcodec
