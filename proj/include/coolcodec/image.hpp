#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "coolcodec/layers.hpp"
#include "coolcodec/tensor.hpp"

namespace coolcodec {

// Planar RGB float image, values in [0,1] (8-bit samples divided by 255).
struct Image {
    int h = 0, w = 0;
    std::vector<float> pix;  // (3, h, w)

    Image() = default;
    Image(int h_, int w_) : h(h_), w(w_), pix(size_t(3) * h_ * w_, 0.0f) {}
    size_t npix() const { return size_t(h) * w; }
    float* plane(int c) { return pix.data() + size_t(c) * npix(); }
    const float* plane(int c) const { return pix.data() + size_t(c) * npix(); }
    float& at(int c, int r, int cc) { return pix[size_t(c) * npix() + size_t(r) * w + cc]; }
    float at(int c, int r, int cc) const { return pix[size_t(c) * npix() + size_t(r) * w + cc]; }
};

inline constexpr double kPsnrCap = 99.0;

inline double mse_rgb(const Image& a, const Image& b) {
    if (a.h != b.h || a.w != b.w) throw ConfigError("psnr: image shapes differ");
    return mse_forward(a.pix.data(), b.pix.data(), a.pix.size());
}

// PSNR over all RGB samples; identical images report the 99 dB cap.
inline double psnr_rgb(const Image& a, const Image& b) {
    const double m = mse_rgb(a, b);
    if (m <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, -10.0 * std::log10(m));
}

// ---------------------------------------------------------------------------
// Binary PPM (P6, 8-bit) ingest and export.
// ---------------------------------------------------------------------------

namespace detail {
inline int ppm_token(std::istream& in) {
    // skips whitespace and '#' comments, returns a non-negative integer
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    if (c == EOF || !std::isdigit(c)) throw FormatError("ppm: malformed header");
    int value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        if (value > 1 << 30) throw FormatError("ppm: header value out of range");
        c = in.get();
    }
    return value;
}
}  // namespace detail

inline Image load_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path);
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != 'P' || m1 != '6') throw FormatError("ppm: not a binary P6 file: " + path);
    const int w = detail::ppm_token(in);
    const int h = detail::ppm_token(in);
    const int maxval = detail::ppm_token(in);
    if (maxval != 255) throw FormatError("ppm: only 8-bit maxval 255 supported");
    if (w < 1 || h < 1) throw FormatError("ppm: bad dimensions");
    std::vector<uint8_t> raw(size_t(3) * w * h);
    in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    if (size_t(in.gcount()) != raw.size()) throw FormatError("ppm: truncated pixel data");
    Image img(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int ch = 0; ch < 3; ++ch)
                img.at(ch, r, c) = float(raw[(size_t(r) * w + c) * 3 + ch]) / 255.0f;
    return img;
}

inline void save_ppm(const Image& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path);
    out << "P6\n" << img.w << " " << img.h << "\n255\n";
    std::vector<uint8_t> raw(size_t(3) * img.w * img.h);
    for (int r = 0; r < img.h; ++r)
        for (int c = 0; c < img.w; ++c)
            for (int ch = 0; ch < 3; ++ch) {
                const float v = std::min(1.0f, std::max(0.0f, img.at(ch, r, c)));
                raw[(size_t(r) * img.w + c) * 3 + ch] = uint8_t(std::lround(v * 255.0f));
            }
    out.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
    if (!out) throw FormatError("short write to " + path);
}

inline Image crop(const Image& src, int r0, int c0, int h, int w) {
    if (r0 < 0 || c0 < 0 || r0 + h > src.h || c0 + w > src.w)
        throw ConfigError("crop out of bounds");
    Image out(h, w);
    for (int ch = 0; ch < 3; ++ch)
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) out.at(ch, r, c) = src.at(ch, r0 + r, c0 + c);
    return out;
}

}  // namespace coolcodec
