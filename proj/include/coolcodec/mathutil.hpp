#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>

namespace coolcodec {

// ---------------------------------------------------------------------------
// Deterministic hashing / counter-based RNG.
//
// All randomness in the codec (quantization noise, parameter init) is derived
// from hashed counters, never from stateful generators, so a forward pass is
// reproducible from (seed, iteration, tensor id, element index) alone.
// ---------------------------------------------------------------------------

inline constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ull;

inline uint64_t splitmix64(uint64_t z) {
    z += kGolden;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) {
    return splitmix64(a ^ (b + kGolden));
}

// Uniform double in [0, 1).
inline double unit_from_bits(uint64_t h) { return double(h >> 11) * 0x1.0p-53; }

// One Gaussian draw per (stream, index), Box-Muller on two 24-bit uniforms.
inline float counter_gauss(uint64_t stream, uint64_t index) {
    const uint64_t h = splitmix64(stream + index);
    const double u1 = (double(h >> 40) + 1.0) * 0x1.0p-24;  // (0, 1]
    const double u2 = double((h >> 16) & 0xffffffu) * 0x1.0p-24;
    return float(std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2));
}

inline float counter_uniform(uint64_t stream, uint64_t index, float lo, float hi) {
    return lo + (hi - lo) * float(unit_from_bits(splitmix64(stream + index)));
}

// ---------------------------------------------------------------------------
// Fast float transcendentals.
//
// Branch-free polynomial versions accurate to ~1e-7 relative; the compiler can
// vectorize loops over them, unlike libm calls. Double overloads fall back to
// libm so the same templated kernels can be instantiated in double precision
// for finite-difference oracles.
// ---------------------------------------------------------------------------

inline float cc_exp(float x) {
    constexpr float kLn2 = 0.69314718055994531f;
    constexpr float kInvLn2 = 1.44269504088896341f;
    x = std::min(88.0f, std::max(-87.0f, x));
    const float z = x * kInvLn2;
    const float nf = std::floor(z + 0.5f);
    const float t = (z - nf) * kLn2;
    float p = 0.0013888889f;
    p = 0.008333334f + t * p;
    p = 0.041666668f + t * p;
    p = 0.16666667f + t * p;
    p = 0.5f + t * p;
    p = 1.0f + t * p;
    p = 1.0f + t * p;
    const float s = std::bit_cast<float>(uint32_t(int32_t(nf) + 127) << 23);
    return p * s;
}

inline float cc_log(float x) {
    const uint32_t bits = std::bit_cast<uint32_t>(x);
    int e = int(bits >> 23) - 127;
    float m = std::bit_cast<float>((bits & 0x007fffffu) | 0x3f800000u);  // [1, 2)
    if (m > 1.41421356f) { m *= 0.5f; ++e; }
    const float s = (m - 1.0f) / (m + 1.0f);
    const float s2 = s * s;
    float p = 0.11111111f;
    p = 0.14285715f + s2 * p;
    p = 0.2f + s2 * p;
    p = 0.33333333f + s2 * p;
    p = 1.0f + s2 * p;
    return 2.0f * s * p + float(e) * 0.69314718f;
}

inline float cc_tanh(float x) {
    float ax = std::fabs(x);
    ax = std::min(ax, 9.0f);
    const float t = cc_exp(-2.0f * ax);
    const float r = (1.0f - t) / (1.0f + t);
    return x < 0.0f ? -r : r;
}

inline double cc_exp(double x) { return std::exp(x); }
inline double cc_log(double x) { return std::log(x); }
inline double cc_tanh(double x) { return std::tanh(x); }

inline constexpr double kLog2E = 1.4426950408889634;  // 1 / ln 2

template <typename T>
inline T cc_log2(T x) { return cc_log(x) * T(kLog2E); }

}  // namespace coolcodec
