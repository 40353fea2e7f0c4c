#pragma once

// Little-endian byte serialization, LEB128 varints and zig-zag mapping.

#include "lpstream/error.hpp"

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace lpstream {

using Bytes = std::vector<std::uint8_t>;

constexpr std::uint64_t zigzag_encode(std::int64_t v) {
    return (static_cast<std::uint64_t>(v) << 1) ^ static_cast<std::uint64_t>(v >> 63);
}
constexpr std::int64_t zigzag_decode(std::uint64_t v) {
    return static_cast<std::int64_t>((v >> 1) ^ (~(v & 1) + 1));
}

constexpr std::size_t varint_size(std::uint64_t v) {
    std::size_t n = 1;
    while (v >= 0x80) {
        v >>= 7;
        ++n;
    }
    return n;
}

class ByteWriter {
public:
    void u8(std::uint8_t v) { buf().push_back(v); }
    void u16(std::uint16_t v) { put_le(v, 2); }
    void u32(std::uint32_t v) { put_le(v, 4); }
    void u64(std::uint64_t v) { put_le(v, 8); }
    void varint(std::uint64_t v) {
        while (v >= 0x80) {
            buf().push_back(static_cast<std::uint8_t>(v | 0x80));
            v >>= 7;
        }
        buf().push_back(static_cast<std::uint8_t>(v));
    }
    void svarint(std::int64_t v) { varint(zigzag_encode(v)); }
    void bytes(std::span<const std::uint8_t> b) { buf().insert(buf().end(), b.begin(), b.end()); }
    void tag(std::string_view magic) {
        for (char c : magic) buf().push_back(static_cast<std::uint8_t>(c));
    }

    /// Overwrite a previously written u32 at byte offset `pos`.
    void patch_u32(std::size_t pos, std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf()[pos + i] = static_cast<std::uint8_t>(v >> (8 * i));
    }

    std::size_t size() const { return own_.size(); }
    Bytes take() { return std::move(own_); }
    const Bytes& view() const { return own_; }

private:
    Bytes& buf() { return own_; }
    void put_le(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) buf().push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }

    Bytes own_;
};

/// Bounds-checked reader; every read past the end throws DecodeError.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(get_le(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get_le(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get_le(4)); }
    std::uint64_t u64() { return get_le(8); }
    std::uint64_t varint() {
        std::uint64_t v = 0;
        for (int shift = 0; shift < 64; shift += 7) {
            const std::uint8_t b = u8();
            v |= static_cast<std::uint64_t>(b & 0x7F) << shift;
            if ((b & 0x80) == 0) return v;
        }
        throw DecodeError("varint longer than 10 bytes");
    }
    std::int64_t svarint() { return zigzag_decode(varint()); }
    std::span<const std::uint8_t> bytes(std::size_t n) {
        need(n);
        auto s = data_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    void expect_tag(std::string_view magic) {
        auto b = bytes(magic.size());
        for (std::size_t i = 0; i < magic.size(); ++i) {
            if (b[i] != static_cast<std::uint8_t>(magic[i])) {
                throw DecodeError("bad magic, expected " + std::string(magic));
            }
        }
    }

    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }
    bool done() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw DecodeError("unexpected end of buffer");
    }
    std::uint64_t get_le(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

}  // namespace lpstream
