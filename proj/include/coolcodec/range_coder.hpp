#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "coolcodec/layers.hpp"
#include "coolcodec/tensor.hpp"

namespace coolcodec {

// 32-bit range coder with 16-bit quantized CDFs and byte-wise renormalization.
// Carries are absorbed by a cached byte plus a pending-0xFF run; the first
// emitted byte is a dummy the decoder skips (it exists so a carry always has a
// byte to land in). The flush rounds `low` up to a multiple of 2^16 inside the
// final interval, so the tail costs 2 bytes and the decoder zero-pads any
// reads beyond the payload.

class RangeEncoder {
public:
    // cum/freq in a 16-bit total (sum of all freq == 65536), freq >= 1
    void encode(uint32_t cum, uint32_t freq) {
        const uint32_t r = range_ >> 16;
        low_ += uint64_t(r) * cum;
        range_ = r * freq;
        while (range_ < (1u << 24)) {
            shift_low();
            range_ <<= 8;
        }
    }

    std::vector<uint8_t> finish() {
        low_ = (low_ + 0xFFFFull) & ~0xFFFFull;  // stays inside [low, low+range)
        shift_low();
        shift_low();
        shift_low();  // low's 16 junk bits are zero now; this flushes the cache
        return std::move(out_);
    }

    size_t bytes_emitted() const { return out_.size(); }

private:
    void shift_low() {
        if (uint32_t(low_) < 0xFF000000u || (low_ >> 32) != 0) {
            const uint8_t carry = uint8_t(low_ >> 32);
            out_.push_back(uint8_t(cache_ + carry));  // first push is the dummy byte
            while (ff_run_) {
                out_.push_back(uint8_t(0xFF + carry));
                --ff_run_;
            }
            cache_ = uint8_t(low_ >> 24);
        } else {
            ++ff_run_;
        }
        low_ = (low_ & 0x00FFFFFFull) << 8;
    }

    std::vector<uint8_t> out_;
    uint64_t low_ = 0;
    uint32_t range_ = 0xFFFFFFFFu;
    uint8_t cache_ = 0;
    uint64_t ff_run_ = 0;
};

class RangeDecoder {
public:
    RangeDecoder(const uint8_t* data, size_t len) : data_(data), len_(len) {
        next_byte();  // dummy
        for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
    }

    // cum has nsym+1 entries, cum[0] == 0, cum[nsym] == 65536, strictly
    // increasing. Returns the decoded symbol.
    int decode(const uint32_t* cum, int nsym) {
        const uint32_t r = range_ >> 16;
        uint32_t val = code_ / r;
        if (val > 65535) val = 65535;
        int lo = 0, hi = nsym;  // find s with cum[s] <= val < cum[s+1]
        while (hi - lo > 1) {
            const int mid = (lo + hi) >> 1;
            if (cum[mid] <= val)
                lo = mid;
            else
                hi = mid;
        }
        code_ -= r * cum[lo];
        range_ = r * (cum[lo + 1] - cum[lo]);
        while (range_ < (1u << 24)) {
            code_ = (code_ << 8) | next_byte();
            range_ <<= 8;
        }
        return lo;
    }

private:
    uint8_t next_byte() {
        if (pos_ < len_) return data_[pos_++];
        if (++overread_ > 8)
            throw FormatError("latent payload truncated near byte " + std::to_string(pos_));
        return 0;  // the encoder's flush leaves a zero tail
    }

    const uint8_t* data_;
    size_t len_;
    size_t pos_ = 0;
    int overread_ = 0;
    uint32_t range_ = 0xFFFFFFFFu;
    uint32_t code_ = 0;
};

// ---------------------------------------------------------------------------
// 16-bit CDF over the alphabet [-amp, amp] from Laplace(mu, sigma): masses of
// the truncated distribution are renormalized, every symbol keeps at least
// one count, totals are repaired deterministically (encoder and decoder run
// this same code on the same inputs).
// ---------------------------------------------------------------------------

inline void quantize_cdf(float mu, float sigma, int amp, std::vector<uint32_t>& cum) {
    const int nsym = 2 * amp + 1;
    const double b = double(sigma) * kInvSqrt2;
    static thread_local std::vector<double> mass;
    mass.assign(size_t(nsym), 0.0);
    double total = 0.0;
    for (int v = -amp; v <= amp; ++v) {
        const double u = std::abs(double(v) - double(mu));
        const double e1 = std::exp(-(u + 0.5) / b);
        const double e2 = std::exp(-std::abs(u - 0.5) / b);
        const double p = u >= 0.5 ? 0.5 * (e2 - e1) : 1.0 - 0.5 * (e1 + e2);
        mass[size_t(v + amp)] = std::max(p, 1e-300);
        total += mass[size_t(v + amp)];
    }
    static thread_local std::vector<uint32_t> freq;
    freq.assign(size_t(nsym), 0);
    int64_t sum = 0;
    for (int i = 0; i < nsym; ++i) {
        uint32_t f = uint32_t(std::lround(mass[size_t(i)] / total * 65536.0));
        if (f < 1) f = 1;
        freq[size_t(i)] = f;
        sum += f;
    }
    int64_t diff = 65536 - sum;
    if (diff > 0) {
        // spread the shortfall across all bins to keep the shape
        const uint32_t per = uint32_t(diff / nsym);
        const int rem = int(diff % nsym);
        for (int i = 0; i < nsym; ++i) freq[size_t(i)] += per + (i < rem ? 1u : 0u);
        diff = 0;
    }
    while (diff < 0) {
        int big = 0;
        for (int i = 1; i < nsym; ++i)
            if (freq[size_t(i)] > freq[size_t(big)]) big = i;
        const int64_t take = std::min<int64_t>(-diff, int64_t(freq[size_t(big)]) - 1);
        freq[size_t(big)] -= uint32_t(take);
        diff += take;
        if (take == 0) throw ConfigError("cdf repair failed");  // nsym > 65536 cannot happen
    }
    cum.assign(size_t(nsym) + 1, 0);
    for (int i = 0; i < nsym; ++i) cum[size_t(i) + 1] = cum[size_t(i)] + freq[size_t(i)];
}

}  // namespace coolcodec
