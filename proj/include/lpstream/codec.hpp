#pragma once

// Lossless temporal frame codec over PlaneSets.
//
// Frames are I (key) or P; P-frames predict only from the previous
// reconstructed frame, so every frame is encodable as soon as it exists.
// Each plane is split into 16x16 blocks (edge blocks clipped) coded as
//   SKIP  - identical to the co-located reference block (P only)
//   DELTA - residual against a predictor: the reference block in P-frames,
//           the left (else upper) neighbour element in I-frames
//   RAW   - elements at the plane's bit depth
//
// EncodedFrame wire layout, little-endian:
//   "LPF1" | u8 flags (bit0 key) | u32 stream id | u32 frame seq | u16 width |
//   u16 height | u8 plane count | u8 element width | u32 payload len |
//   payload | u32 CRC-32 of everything before it
// The element width field holds the significant bits per element:
// 10 for color planes (stored in 16-bit elements), 8 for visibility bytes.

#include "lpstream/bytes.hpp"
#include "lpstream/packing.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <span>

namespace lpstream {

inline constexpr int kCodecBlockSize = 16;
inline constexpr int kDefaultGopLength = 30;

enum class BlockMode : std::uint8_t { Skip = 0, Delta = 1, Raw = 2 };

struct FrameHeader {
    std::uint32_t stream_id = 0;
    std::uint32_t seq = 0;
    bool key = false;
    std::uint16_t width = 0;
    std::uint16_t height = 0;
    std::uint8_t plane_count = 3;
    std::uint8_t element_width = 10;
    bool operator==(const FrameHeader&) const = default;
};

struct EncodedFrame {
    FrameHeader header;
    Bytes payload;

    static constexpr std::size_t kHeaderBytes = 4 + 1 + 4 + 4 + 2 + 2 + 1 + 1 + 4;
    static constexpr std::size_t kTrailerBytes = 4;

    std::size_t wire_size() const { return kHeaderBytes + payload.size() + kTrailerBytes; }
    Bytes serialize() const;
    /// Throws DecodeError on malformed input, ChecksumError on CRC mismatch.
    static EncodedFrame parse(std::span<const std::uint8_t> bytes);

    bool operator==(const EncodedFrame&) const = default;
};

enum class CodecRole : std::uint8_t { Encoder, Decoder };

struct CodecStreamState {
    std::uint32_t stream_id = 0;
    std::uint32_t frame_counter = 0;  ///< seq of the next frame
    int gop_length = kDefaultGopLength;
    CodecRole role = CodecRole::Encoder;
    std::optional<PlaneSet> reference;

    CodecStreamState() = default;
    CodecStreamState(std::uint32_t id, CodecRole r, int gop = kDefaultGopLength)
        : stream_id(id), gop_length(gop), role(r) {}

    /// Forget the reference; the next frame will be a key frame.
    void reset() {
        reference.reset();
    }
};

/// Per-block decision plus the coded size in bits of the chosen mode.
struct BlockDecision {
    BlockMode mode = BlockMode::Raw;
    std::uint64_t bits = 0;
};

/// Choose the cheapest mode for one block. `prediction` holds the predictor for
/// each element (co-located reference in P-frames). SKIP is only considered when
/// `allow_skip` is set and the block equals the prediction bit for bit.
BlockDecision block_mode_select(std::span<const std::uint16_t> current, std::span<const std::uint16_t> prediction,
                                int block_width, int bit_depth, bool allow_skip);

/// Convenience for P-frame blocks: SKIP iff identical, else DELTA if cheaper than RAW.
BlockMode block_mode_select(std::span<const std::uint16_t> current, std::span<const std::uint16_t> reference,
                            int block_width, int bit_depth);

class FrameCodec {
public:
    virtual ~FrameCodec() = default;
    virtual EncodedFrame encode_frame(const PlaneSet& planes, CodecStreamState& state, bool force_key) = 0;
    virtual PlaneSet decode_frame(const EncodedFrame& frame, CodecStreamState& state) = 0;
};

class ReferenceCodec final : public FrameCodec {
public:
    EncodedFrame encode_frame(const PlaneSet& planes, CodecStreamState& state, bool force_key) override;
    PlaneSet decode_frame(const EncodedFrame& frame, CodecStreamState& state) override;
};

std::unique_ptr<FrameCodec> make_reference_codec();

/// Free-function front ends over ReferenceCodec.
EncodedFrame encode_frame(const PlaneSet& planes, CodecStreamState& state, bool force_key = false);
PlaneSet decode_frame(const EncodedFrame& frame, CodecStreamState& state);

}  // namespace lpstream
