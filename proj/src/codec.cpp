#include "lpstream/codec.hpp"

#include "lpstream/bitstream.hpp"
#include "lpstream/entropy.hpp"
#include "lpstream/error.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <string>

namespace lpstream {

namespace {

constexpr int kWidthFieldBits = 4;
constexpr int kMaxBlockElements = kCodecBlockSize * kCodecBlockSize;

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    return static_cast<std::uint32_t>(
        ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

int bits_needed(std::uint32_t v) { return v == 0 ? 0 : 32 - std::countl_zero(v); }

// Wrapped residual mapped to an unsigned value below 2^depth.
std::uint32_t residual_code(std::uint32_t cur, std::uint32_t pred, int depth) {
    const std::uint32_t mask = (1u << depth) - 1u;
    auto r = static_cast<std::int32_t>((cur - pred) & mask);
    if (r >= (1 << (depth - 1))) r -= (1 << depth);
    return static_cast<std::uint32_t>(zigzag_encode(r));
}

std::uint32_t apply_residual(std::uint32_t code, std::uint32_t pred, int depth) {
    const std::uint32_t mask = (1u << depth) - 1u;
    const auto r = static_cast<std::int64_t>(zigzag_decode(code));
    return static_cast<std::uint32_t>(static_cast<std::int64_t>(pred) + r) & mask;
}

PlaneKind kind_for_depth(int depth) {
    if (depth == 10) return PlaneKind::Color10in16;
    if (depth == 8) return PlaneKind::VisibilityBytes;
    throw DecodeError("unsupported element width " + std::to_string(depth));
}

void validate_planes(const PlaneSet& planes) {
    if (planes.width <= 0 || planes.height <= 0 || planes.width > 0xFFFF || planes.height > 0xFFFF) {
        throw InvalidArgument("plane dimensions must be in [1, 65535]");
    }
    const std::uint32_t limit = 1u << planes.bit_depth();
    for (const auto& p : planes.planes) {
        if (p.size() != planes.element_count()) throw InvalidArgument("plane length does not match dimensions");
        for (std::uint16_t v : p) {
            if (v >= limit) throw InvalidArgument("plane element exceeds bit depth");
        }
    }
}

struct BlockRect {
    int x0, y0, w, h;
};

template <typename Fn>
void for_each_block(int width, int height, Fn&& fn) {
    for (int by = 0; by < height; by += kCodecBlockSize) {
        for (int bx = 0; bx < width; bx += kCodecBlockSize) {
            fn(BlockRect{bx, by, std::min(kCodecBlockSize, width - bx), std::min(kCodecBlockSize, height - by)});
        }
    }
}

// Intra predictor: left neighbour, else upper neighbour, else zero.
std::uint16_t intra_prediction(const std::vector<std::uint16_t>& plane, int width, int x, int y) {
    if (x > 0) return plane[static_cast<std::size_t>(y) * width + x - 1];
    if (y > 0) return plane[static_cast<std::size_t>(y - 1) * width + x];
    return 0;
}

}  // namespace

// ---------------------------------------------------------------------------

Bytes EncodedFrame::serialize() const {
    ByteWriter w;
    w.tag("LPF1");
    w.u8(header.key ? 1 : 0);
    w.u32(header.stream_id);
    w.u32(header.seq);
    w.u16(header.width);
    w.u16(header.height);
    w.u8(header.plane_count);
    w.u8(header.element_width);
    w.u32(static_cast<std::uint32_t>(payload.size()));
    w.bytes(payload);
    w.u32(crc32_of(w.view()));
    return w.take();
}

EncodedFrame EncodedFrame::parse(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.expect_tag("LPF1");
    EncodedFrame f;
    const std::uint8_t flags = r.u8();
    if (flags & ~1u) throw DecodeError("unknown frame flags");
    f.header.key = (flags & 1u) != 0;
    f.header.stream_id = r.u32();
    f.header.seq = r.u32();
    f.header.width = r.u16();
    f.header.height = r.u16();
    f.header.plane_count = r.u8();
    f.header.element_width = r.u8();
    const std::uint32_t len = r.u32();
    const auto payload = r.bytes(len);
    const std::size_t covered = r.position();
    const std::uint32_t crc = r.u32();
    if (!r.done()) throw DecodeError("trailing bytes after frame");
    if (crc != crc32_of(bytes.first(covered))) throw ChecksumError("frame checksum mismatch");
    f.payload.assign(payload.begin(), payload.end());
    return f;
}

// ---------------------------------------------------------------------------

BlockDecision block_mode_select(std::span<const std::uint16_t> current, std::span<const std::uint16_t> prediction,
                                int block_width, int bit_depth, bool allow_skip) {
    if (block_width <= 0 || current.size() != prediction.size() || current.size() % block_width != 0) {
        throw InvalidArgument("block shape mismatch");
    }
    const std::uint64_t raw_bits = current.size() * static_cast<std::uint64_t>(bit_depth);
    if (allow_skip && std::equal(current.begin(), current.end(), prediction.begin())) {
        return {BlockMode::Skip, 0};
    }
    std::uint64_t delta_bits = 0;
    for (std::size_t row = 0; row < current.size(); row += static_cast<std::size_t>(block_width)) {
        std::uint32_t max_code = 0;
        for (int x = 0; x < block_width; ++x) {
            max_code = std::max(max_code, residual_code(current[row + x], prediction[row + x], bit_depth));
        }
        delta_bits += kWidthFieldBits + static_cast<std::uint64_t>(block_width) * bits_needed(max_code);
    }
    if (delta_bits < raw_bits) return {BlockMode::Delta, delta_bits};
    return {BlockMode::Raw, raw_bits};
}

BlockMode block_mode_select(std::span<const std::uint16_t> current, std::span<const std::uint16_t> reference,
                            int block_width, int bit_depth) {
    return block_mode_select(current, reference, block_width, bit_depth, true).mode;
}

EncodedFrame ReferenceCodec::encode_frame(const PlaneSet& planes, CodecStreamState& state, bool force_key) {
    validate_planes(planes);
    const bool dims_match = state.reference && state.reference->width == planes.width &&
                            state.reference->height == planes.height && state.reference->kind == planes.kind;
    if (state.reference && !dims_match && !force_key) {
        throw InvalidArgument("plane dimensions do not match the stream state");
    }
    const bool key = force_key || !state.reference || state.gop_length <= 0 ||
                     state.frame_counter % static_cast<std::uint32_t>(state.gop_length) == 0;
    const int depth = planes.bit_depth();

    BitWriter modes;
    BitWriter data;
    std::array<std::uint16_t, kMaxBlockElements> cur{};
    std::array<std::uint16_t, kMaxBlockElements> pred{};

    for (int p = 0; p < 3; ++p) {
        const auto& plane = planes.planes[p];
        const std::vector<std::uint16_t>* ref = key ? nullptr : &state.reference->planes[p];
        for_each_block(planes.width, planes.height, [&](const BlockRect& b) {
            const std::size_t n = static_cast<std::size_t>(b.w) * b.h;
            for (int y = 0; y < b.h; ++y) {
                for (int x = 0; x < b.w; ++x) {
                    const int px = b.x0 + x, py = b.y0 + y;
                    const std::size_t src = static_cast<std::size_t>(py) * planes.width + px;
                    cur[y * b.w + x] = plane[src];
                    pred[y * b.w + x] = ref ? (*ref)[src] : intra_prediction(plane, planes.width, px, py);
                }
            }
            const std::span<const std::uint16_t> cs(cur.data(), n), ps(pred.data(), n);
            const BlockDecision d = block_mode_select(cs, ps, b.w, depth, !key);
            modes.put(static_cast<std::uint32_t>(d.mode), 2);
            if (d.mode == BlockMode::Delta) {
                std::array<std::uint32_t, kCodecBlockSize> codes{};
                for (int y = 0; y < b.h; ++y) {
                    std::uint32_t max_code = 0;
                    for (int x = 0; x < b.w; ++x) {
                        codes[x] = residual_code(cs[y * b.w + x], ps[y * b.w + x], depth);
                        max_code = std::max(max_code, codes[x]);
                    }
                    const int width = bits_needed(max_code);
                    data.put(static_cast<std::uint32_t>(width), kWidthFieldBits);
                    for (int x = 0; x < b.w; ++x) data.put(codes[x], width);
                }
            } else if (d.mode == BlockMode::Raw) {
                for (std::size_t i = 0; i < n; ++i) data.put(cs[i], depth);
            }
        });
    }

    const Bytes mode_bytes = entropy_encode(modes.finish());
    const Bytes data_bytes = entropy_encode(data.finish());
    ByteWriter payload;
    payload.varint(mode_bytes.size());
    payload.bytes(mode_bytes);
    payload.bytes(data_bytes);

    EncodedFrame frame;
    frame.header.stream_id = state.stream_id;
    frame.header.seq = state.frame_counter;
    frame.header.key = key;
    frame.header.width = static_cast<std::uint16_t>(planes.width);
    frame.header.height = static_cast<std::uint16_t>(planes.height);
    frame.header.plane_count = 3;
    frame.header.element_width = static_cast<std::uint8_t>(depth);
    frame.payload = payload.take();

    state.reference = planes;
    ++state.frame_counter;
    return frame;
}

PlaneSet ReferenceCodec::decode_frame(const EncodedFrame& frame, CodecStreamState& state) {
    const FrameHeader& h = frame.header;
    if (h.stream_id != state.stream_id) throw ProtocolError("frame belongs to a different stream");
    if (h.plane_count != 3) throw DecodeError("unsupported plane count");
    const PlaneKind kind = kind_for_depth(h.element_width);
    if (!h.key) {
        if (!state.reference) throw ProtocolError("P-frame without a reference frame");
        if (h.seq != state.frame_counter) throw ProtocolError("P-frame out of sequence");
        if (state.reference->width != h.width || state.reference->height != h.height ||
            state.reference->kind != kind) {
            throw ProtocolError("P-frame dimensions differ from reference");
        }
    }
    if (h.width == 0 || h.height == 0) throw DecodeError("empty frame dimensions");

    ByteReader r(frame.payload);
    const std::uint64_t mode_len = r.varint();
    if (mode_len > r.remaining()) throw DecodeError("mode section exceeds payload");
    const Bytes mode_bytes = entropy_decode(r.bytes(static_cast<std::size_t>(mode_len)));
    const Bytes data_bytes = entropy_decode(r.bytes(r.remaining()));
    BitReader modes(mode_bytes);
    BitReader data(data_bytes);

    PlaneSet out(kind, h.width, h.height);
    const int depth = out.bit_depth();
    for (int p = 0; p < 3; ++p) {
        auto& plane = out.planes[p];
        const std::vector<std::uint16_t>* ref = h.key ? nullptr : &state.reference->planes[p];
        for_each_block(out.width, out.height, [&](const BlockRect& b) {
            const auto mode = static_cast<BlockMode>(modes.get(2));
            if (mode == BlockMode::Skip) {
                if (!ref) throw DecodeError("SKIP block in key frame");
                for (int y = 0; y < b.h; ++y) {
                    const std::size_t row = static_cast<std::size_t>(b.y0 + y) * out.width + b.x0;
                    std::copy_n(ref->begin() + static_cast<std::ptrdiff_t>(row), b.w, plane.begin() + static_cast<std::ptrdiff_t>(row));
                }
            } else if (mode == BlockMode::Delta) {
                for (int y = 0; y < b.h; ++y) {
                    const int width = static_cast<int>(data.get(kWidthFieldBits));
                    if (width > depth) throw DecodeError("residual width exceeds bit depth");
                    for (int x = 0; x < b.w; ++x) {
                        const int px = b.x0 + x, py = b.y0 + y;
                        const std::size_t idx = static_cast<std::size_t>(py) * out.width + px;
                        const std::uint32_t pred = ref ? (*ref)[idx] : intra_prediction(plane, out.width, px, py);
                        plane[idx] = static_cast<std::uint16_t>(apply_residual(data.get(width), pred, depth));
                    }
                }
            } else if (mode == BlockMode::Raw) {
                for (int y = 0; y < b.h; ++y) {
                    for (int x = 0; x < b.w; ++x) {
                        plane[static_cast<std::size_t>(b.y0 + y) * out.width + b.x0 + x] =
                            static_cast<std::uint16_t>(data.get(depth));
                    }
                }
            } else {
                throw DecodeError("invalid block mode");
            }
        });
    }

    state.reference = out;
    state.frame_counter = h.seq + 1;
    return out;
}

std::unique_ptr<FrameCodec> make_reference_codec() { return std::make_unique<ReferenceCodec>(); }

EncodedFrame encode_frame(const PlaneSet& planes, CodecStreamState& state, bool force_key) {
    ReferenceCodec codec;
    return codec.encode_frame(planes, state, force_key);
}

PlaneSet decode_frame(const EncodedFrame& frame, CodecStreamState& state) {
    ReferenceCodec codec;
    return codec.decode_frame(frame, state);
}

}  // namespace lpstream
