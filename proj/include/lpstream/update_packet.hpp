#pragma once

// Probe index buffer and the UpdatePacket wire message.
//
// Index buffer. The leading varint is (count << 2) | form.
//
// form 0, stateless:
//   per entry in slot order: varint slot delta, svarint (zig-zag) probe delta.
//   Slot delta is slot - previous slot - 1 (previous starts at -1); probe delta
//   is probe - previous probe (previous starts at 0).
//
// form 1, slots from the mirrored allocator:
//   per entry in probe order: varint (probe - previous - 1), previous from -1.
//   The decoder replays UpdateAtlasLayout::assign on its copy of the sender's
//   layout, which yields the same slots.
//
// forms 2 and 3, slots exactly 0..count-1 and implied:
//   form 2 (probes ascending): per entry varint (probe - previous - 1), previous from -1
//   form 3: per entry svarint (probe - previous), previous from 0
//
// The encoder emits whichever form is shortest. Forms 1 and 2 cost at most
// two bytes per entry while probe ids stay below 16384.

#include "lpstream/bytes.hpp"
#include "lpstream/packing.hpp"
#include "lpstream/probe_model.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace lpstream {

enum class IndexSlots : std::uint8_t {
    Explicit,   ///< the receiver knows nothing about slot assignment
    Allocator,  ///< the receiver mirrors the UpdateAtlasLayout that produced the entries
};

/// Entries must be strictly increasing in slot. With IndexSlots::Allocator they
/// must be the result of the sender's last UpdateAtlasLayout::assign.
Bytes encode_index_buffer(std::span<const IndexEntry> entries, IndexSlots slots = IndexSlots::Explicit);
/// With `layout`, the selection is replayed on it whatever the form; explicit
/// slots that disagree with the replay raise ProtocolError. Without it form 1
/// raises ProtocolError.
std::vector<IndexEntry> decode_index_buffer(std::span<const std::uint8_t> bytes, UpdateAtlasLayout* layout = nullptr);

/// Little-endian u32 per texel.
Bytes texels_to_bytes(std::span<const Texel> texels);
std::vector<Texel> bytes_to_texels(std::span<const std::uint8_t> bytes);

enum class UpdateMethod : std::uint8_t {
    Uncompressed = 0,    ///< full atlas, raw probe blocks
    Encoded = 1,         ///< full atlas through the frame codec
    Culling = 2,         ///< selected probes merged into the full client atlas, encoded
    PackingNoCache = 3,  ///< stripped cores in an update atlas, slots reassigned every update
    PackingCaching = 4,  ///< stripped cores in an update atlas with persistent slots
};

std::string_view to_string(UpdateMethod method);
UpdateMethod parse_update_method(std::string_view name);
constexpr bool is_selective(UpdateMethod m) {
    return m == UpdateMethod::PackingNoCache || m == UpdateMethod::PackingCaching;
}

/// Codec stream id for a client's stream; ids are distinct across clients and kinds.
constexpr std::uint32_t codec_stream_id(std::uint32_t client_id, TextureKind kind) {
    return (client_id << 1) | static_cast<std::uint32_t>(kind);
}

// Wire layout, little-endian:
//   "LPU1" | u32 client id | u32 epoch | u8 stream kind | u8 method | u32 update seq |
//   u16 slots per row | u32 index length | index | u32 frame length | frame
// `frame` is a serialized EncodedFrame, or raw probe blocks (u32 texels) for
// the uncompressed method.
struct UpdatePacket {
    std::uint32_t client_id = 0;
    std::uint32_t epoch = 0;
    TextureKind stream = TextureKind::Color;
    UpdateMethod method = UpdateMethod::PackingCaching;
    std::uint32_t update_seq = 0;
    std::uint16_t slots_per_row = 0;
    Bytes index;
    Bytes frame;

    static constexpr std::size_t kHeaderBytes = 4 + 4 + 4 + 1 + 1 + 4 + 2 + 4 + 4;

    Bytes serialize() const;
    static UpdatePacket parse(std::span<const std::uint8_t> bytes);

    std::size_t wire_size() const { return kHeaderBytes + index.size() + frame.size(); }
    /// Index buffer plus texture payload; excludes packet and frame headers.
    std::size_t content_bytes() const;

    bool operator==(const UpdatePacket&) const = default;
};

}  // namespace lpstream
