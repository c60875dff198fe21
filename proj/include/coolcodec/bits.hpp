#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "coolcodec/tensor.hpp"

namespace coolcodec {

// MSB-first bit writer/reader used for the network parameter payload.

class BitWriter {
public:
    void put_bit(uint32_t b) {
        acc_ = (acc_ << 1) | (b & 1);
        if (++nacc_ == 8) {
            bytes_.push_back(uint8_t(acc_));
            acc_ = 0;
            nacc_ = 0;
        }
        ++nbits_;
    }
    void put_bits(uint64_t v, int n) {
        for (int i = n - 1; i >= 0; --i) put_bit(uint32_t(v >> i));
    }
    void align() {
        while (nacc_ != 0) put_bit(0);
    }
    size_t bit_count() const { return nbits_; }
    std::vector<uint8_t> finish() {
        align();
        return std::move(bytes_);
    }

private:
    std::vector<uint8_t> bytes_;
    uint32_t acc_ = 0;
    int nacc_ = 0;
    size_t nbits_ = 0;
};

class BitReader {
public:
    BitReader(const uint8_t* data, size_t len) : data_(data), len_(len) {}
    uint32_t get_bit() {
        const size_t byte = pos_ >> 3;
        if (byte >= len_) throw FormatError("bit reader: past end at bit " + std::to_string(pos_));
        const uint32_t b = (data_[byte] >> (7 - (pos_ & 7))) & 1;
        ++pos_;
        return b;
    }
    uint64_t get_bits(int n) {
        uint64_t v = 0;
        for (int i = 0; i < n; ++i) v = (v << 1) | get_bit();
        return v;
    }
    void align() { pos_ = (pos_ + 7) & ~size_t(7); }
    size_t bits_consumed() const { return pos_; }

private:
    const uint8_t* data_;
    size_t len_;
    size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Order-k Exp-Golomb codes over zigzagged signed integers
// (v>0 -> 2v-1, v<=0 -> -2v).
// ---------------------------------------------------------------------------

inline uint32_t zigzag_encode(int32_t v) {
    return v > 0 ? uint32_t(2 * int64_t(v) - 1) : uint32_t(-2 * int64_t(v));
}
inline int32_t zigzag_decode(uint32_t u) {
    return (u & 1) ? int32_t((u + 1) >> 1) : -int32_t(u >> 1);
}

inline int expgolomb_length(uint32_t u, int k) {
    const uint32_t m = (u >> k) + 1;
    return 2 * (std::bit_width(m) - 1) + 1 + k;
}

inline void expgolomb_encode(BitWriter& bw, int32_t v, int k) {
    const uint32_t u = zigzag_encode(v);
    const uint32_t m = (u >> k) + 1;
    const int nb = std::bit_width(m);
    for (int i = 0; i < nb - 1; ++i) bw.put_bit(0);
    bw.put_bits(m, nb);
    if (k > 0) bw.put_bits(u & ((1u << k) - 1), k);
}

inline int32_t expgolomb_decode(BitReader& br, int k) {
    int zeros = 0;
    while (br.get_bit() == 0) {
        if (++zeros > 31) throw FormatError("exp-golomb: malformed prefix");
    }
    uint32_t m = 1;
    for (int i = 0; i < zeros; ++i) m = (m << 1) | br.get_bit();
    uint32_t u = (m - 1) << k;
    if (k > 0) u |= uint32_t(br.get_bits(k));
    return zigzag_decode(u);
}

}  // namespace coolcodec
