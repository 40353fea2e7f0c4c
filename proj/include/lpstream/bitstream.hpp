#pragma once

#include "lpstream/bytes.hpp"

#include <cstdint>
#include <span>

namespace lpstream {

/// LSB-first bit packer.
class BitWriter {
public:
    void put(std::uint32_t value, int bits) {
        if (bits == 0) return;
        acc_ |= static_cast<std::uint64_t>(value & ((bits == 32) ? 0xFFFFFFFFu : ((1u << bits) - 1u))) << fill_;
        fill_ += bits;
        while (fill_ >= 8) {
            out_.push_back(static_cast<std::uint8_t>(acc_));
            acc_ >>= 8;
            fill_ -= 8;
        }
    }

    std::uint64_t bit_count() const { return out_.size() * 8u + static_cast<std::uint64_t>(fill_); }

    /// Flush the partial byte (zero padded) and hand over the buffer.
    Bytes finish() {
        if (fill_ > 0) out_.push_back(static_cast<std::uint8_t>(acc_));
        acc_ = 0;
        fill_ = 0;
        return std::move(out_);
    }

private:
    Bytes out_;
    std::uint64_t acc_ = 0;
    int fill_ = 0;
};

class BitReader {
public:
    explicit BitReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::uint32_t get(int bits) {
        if (bits == 0) return 0;
        while (fill_ < bits) {
            if (pos_ >= data_.size()) throw DecodeError("bitstream exhausted");
            acc_ |= static_cast<std::uint64_t>(data_[pos_++]) << fill_;
            fill_ += 8;
        }
        const auto v = static_cast<std::uint32_t>(acc_ & ((std::uint64_t{1} << bits) - 1u));
        acc_ >>= bits;
        fill_ -= bits;
        return v;
    }

private:
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
    std::uint64_t acc_ = 0;
    int fill_ = 0;
};

}  // namespace lpstream
