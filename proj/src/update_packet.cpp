#include "lpstream/update_packet.hpp"

#include "lpstream/codec.hpp"
#include "lpstream/error.hpp"

#include <algorithm>
#include <string>

namespace lpstream {

namespace {

constexpr std::uint64_t kMaxIndexCount = std::uint64_t{1} << 24;

void check_sorted(std::span<const IndexEntry> entries) {
    for (std::size_t i = 1; i < entries.size(); ++i) {
        if (entries[i].slot <= entries[i - 1].slot) throw InvalidArgument("index entries must be strictly increasing in slot");
    }
}

constexpr std::uint64_t kFormPlain = 0;
constexpr std::uint64_t kFormAllocator = 1;
constexpr std::uint64_t kFormDenseAscending = 2;
constexpr std::uint64_t kFormDense = 3;

std::uint64_t head(std::size_t count, std::uint64_t form) { return (static_cast<std::uint64_t>(count) << 2) | form; }

Bytes encode_plain(std::span<const IndexEntry> entries) {
    ByteWriter w;
    w.varint(head(entries.size(), kFormPlain));
    std::int64_t prev_slot = -1;
    std::int64_t prev_probe = 0;
    for (const IndexEntry& e : entries) {
        w.varint(static_cast<std::uint64_t>(static_cast<std::int64_t>(e.slot) - prev_slot - 1));
        w.svarint(static_cast<std::int64_t>(e.probe) - prev_probe);
        prev_slot = e.slot;
        prev_probe = e.probe;
    }
    return w.take();
}

std::optional<Bytes> encode_allocator(std::span<const IndexEntry> entries) {
    std::vector<ProbeId> probes;
    probes.reserve(entries.size());
    for (const IndexEntry& e : entries) probes.push_back(e.probe);
    std::sort(probes.begin(), probes.end());
    ByteWriter w;
    w.varint(head(entries.size(), kFormAllocator));
    std::int64_t prev = -1;
    for (ProbeId p : probes) {
        if (p == prev) return std::nullopt;
        w.varint(static_cast<std::uint64_t>(p - prev - 1));
        prev = p;
    }
    return w.take();
}

/// Slots 0..count-1 are implied; only probe ids are sent.
std::optional<Bytes> encode_dense(std::span<const IndexEntry> entries) {
    bool ascending = true;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].slot != i) return std::nullopt;
        if (i > 0) ascending = ascending && entries[i].probe > entries[i - 1].probe;
    }
    ByteWriter w;
    w.varint(head(entries.size(), ascending ? kFormDenseAscending : kFormDense));
    std::int64_t prev = ascending ? -1 : 0;
    for (const IndexEntry& e : entries) {
        const std::int64_t p = e.probe;
        if (ascending) {
            w.varint(static_cast<std::uint64_t>(p - prev - 1));
        } else {
            w.svarint(p - prev);
        }
        prev = p;
    }
    return w.take();
}

std::uint32_t checked_u32(std::int64_t v, const char* what) {
    if (v < 0 || v > 0xFFFFFFFFll) throw DecodeError(std::string("index buffer ") + what + " out of range");
    return static_cast<std::uint32_t>(v);
}

std::int64_t gap(ByteReader& r) {
    const std::uint64_t v = r.varint();
    if (v > 0xFFFFFFFFull) throw DecodeError("index buffer gap out of range");
    return static_cast<std::int64_t>(v);
}

std::int64_t signed_gap(ByteReader& r) {
    const std::int64_t v = r.svarint();
    if (v < -0xFFFFFFFFll || v > 0xFFFFFFFFll) throw DecodeError("index buffer delta out of range");
    return v;
}

}  // namespace

Bytes encode_index_buffer(std::span<const IndexEntry> entries, IndexSlots slots) {
    check_sorted(entries);
    Bytes out = encode_plain(entries);
    if (auto dense = encode_dense(entries); dense && dense->size() < out.size()) out = std::move(*dense);
    if (slots == IndexSlots::Allocator) {
        if (auto replay = encode_allocator(entries); replay && replay->size() < out.size()) out = std::move(*replay);
    }
    return out;
}

std::vector<IndexEntry> decode_index_buffer(std::span<const std::uint8_t> bytes, UpdateAtlasLayout* layout) {
    ByteReader r(bytes);
    const std::uint64_t first = r.varint();
    const std::uint64_t count = first >> 2;
    const std::uint64_t form = first & 3u;
    if (count > kMaxIndexCount) throw DecodeError("index buffer count too large");
    if (form == kFormAllocator && !layout) throw ProtocolError("index buffer needs the slot allocator state");
    std::vector<IndexEntry> entries;
    entries.reserve(static_cast<std::size_t>(count));

    if (form == kFormPlain) {
        std::int64_t prev_slot = -1;
        std::int64_t prev_probe = 0;
        for (std::uint64_t i = 0; i < count; ++i) {
            const std::int64_t slot = prev_slot + 1 + gap(r);
            const std::int64_t probe = prev_probe + signed_gap(r);
            entries.push_back({checked_u32(slot, "slot"), checked_u32(probe, "probe")});
            prev_slot = slot;
            prev_probe = probe;
        }
    } else {
        // Forms 1-3 carry probes only; form 1 gets its slots from the replay below.
        const bool ascending = form != kFormDense;
        std::int64_t prev = ascending ? -1 : 0;
        for (std::uint64_t i = 0; i < count; ++i) {
            const std::int64_t probe = ascending ? prev + 1 + gap(r) : prev + signed_gap(r);
            entries.push_back({static_cast<std::uint32_t>(i), checked_u32(probe, "probe")});
            prev = probe;
        }
    }
    if (!r.done()) throw DecodeError("trailing bytes in index buffer");
    if (layout) {
        std::vector<ProbeId> probes;
        probes.reserve(entries.size());
        for (const IndexEntry& e : entries) probes.push_back(e.probe);
        std::vector<IndexEntry> replayed;
        try {
            replayed = layout->assign(probes);
        } catch (const InvalidArgument& e) {
            throw DecodeError(std::string("index buffer rejected by the slot allocator: ") + e.what());
        }
        if (form != kFormAllocator && replayed != entries) {
            throw ProtocolError("index buffer slots disagree with the slot allocator");
        }
        return replayed;
    }
    return entries;
}

// ---------------------------------------------------------------------------

Bytes texels_to_bytes(std::span<const Texel> texels) {
    ByteWriter w;
    for (Texel t : texels) w.u32(t);
    return w.take();
}

std::vector<Texel> bytes_to_texels(std::span<const std::uint8_t> bytes) {
    if (bytes.size() % 4 != 0) throw DecodeError("texel payload is not a whole number of texels");
    ByteReader r(bytes);
    std::vector<Texel> out(bytes.size() / 4);
    for (Texel& t : out) t = r.u32();
    return out;
}

std::string_view to_string(UpdateMethod method) {
    switch (method) {
        case UpdateMethod::Uncompressed: return "uncompressed";
        case UpdateMethod::Encoded: return "encoded";
        case UpdateMethod::Culling: return "culling";
        case UpdateMethod::PackingNoCache: return "packing-no-cache";
        case UpdateMethod::PackingCaching: return "packing-caching";
    }
    return "unknown";
}

UpdateMethod parse_update_method(std::string_view name) {
    for (auto m : {UpdateMethod::Uncompressed, UpdateMethod::Encoded, UpdateMethod::Culling,
                   UpdateMethod::PackingNoCache, UpdateMethod::PackingCaching}) {
        if (to_string(m) == name) return m;
    }
    throw InvalidArgument("unknown update method: " + std::string(name));
}

Bytes UpdatePacket::serialize() const {
    ByteWriter w;
    w.tag("LPU1");
    w.u32(client_id);
    w.u32(epoch);
    w.u8(static_cast<std::uint8_t>(stream));
    w.u8(static_cast<std::uint8_t>(method));
    w.u32(update_seq);
    w.u16(slots_per_row);
    w.u32(static_cast<std::uint32_t>(index.size()));
    w.bytes(index);
    w.u32(static_cast<std::uint32_t>(frame.size()));
    w.bytes(frame);
    return w.take();
}

UpdatePacket UpdatePacket::parse(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.expect_tag("LPU1");
    UpdatePacket p;
    p.client_id = r.u32();
    p.epoch = r.u32();
    const std::uint8_t stream = r.u8();
    if (stream > 1) throw DecodeError("unknown stream kind");
    p.stream = static_cast<TextureKind>(stream);
    const std::uint8_t method = r.u8();
    if (method > static_cast<std::uint8_t>(UpdateMethod::PackingCaching)) throw DecodeError("unknown update method");
    p.method = static_cast<UpdateMethod>(method);
    p.update_seq = r.u32();
    p.slots_per_row = r.u16();
    const auto index = r.bytes(r.u32());
    p.index.assign(index.begin(), index.end());
    const auto frame = r.bytes(r.u32());
    p.frame.assign(frame.begin(), frame.end());
    if (!r.done()) throw DecodeError("trailing bytes after update packet");
    return p;
}

std::size_t UpdatePacket::content_bytes() const {
    if (method == UpdateMethod::Uncompressed) return index.size() + frame.size();
    const std::size_t framing = EncodedFrame::kHeaderBytes + EncodedFrame::kTrailerBytes;
    return index.size() + (frame.size() > framing ? frame.size() - framing : 0);
}

}  // namespace lpstream
