#include "lpstream/codec.hpp"
#include "lpstream/error.hpp"
#include "lpstream/update_packet.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

using namespace lpstream;
using lpstream::test::Rng;

namespace {

std::vector<IndexEntry> random_entries(Rng& rng, std::size_t count, std::uint32_t slot_space, ProbeId probe_space) {
    std::vector<std::uint32_t> slots(slot_space);
    std::iota(slots.begin(), slots.end(), 0u);
    std::shuffle(slots.begin(), slots.end(), rng);
    slots.resize(count);
    std::sort(slots.begin(), slots.end());
    std::vector<IndexEntry> out;
    for (auto s : slots) out.push_back({s, static_cast<ProbeId>(rng() % probe_space)});
    return out;
}

}  // namespace

TEST(IndexBuffer, Examples) {
    EXPECT_EQ(encode_index_buffer({}), Bytes{0x00});
    // Dense slots: head (2 << 2) | 2, probe gaps 5 and 9 - 5 - 1.
    const std::vector<IndexEntry> two{{0, 5}, {1, 9}};
    EXPECT_EQ(encode_index_buffer(two), (Bytes{0x0A, 0x05, 0x03}));
    EXPECT_LE(encode_index_buffer(two).size(), 9u);
    EXPECT_EQ(decode_index_buffer(Bytes{0x0A, 0x05, 0x03}), two);
    // Plain form: head 2 << 2; slot gaps 2, 0; probe deltas +5, +4 zig-zag to 10, 8.
    const std::vector<IndexEntry> sparse{{2, 5}, {3, 9}};
    EXPECT_EQ(encode_index_buffer(sparse), (Bytes{0x08, 0x02, 0x0A, 0x00, 0x08}));
    EXPECT_EQ(decode_index_buffer(Bytes{0x08, 0x02, 0x0A, 0x00, 0x08}), sparse);
    // Dense but descending: head (2 << 2) | 3, deltas +9, -4.
    const std::vector<IndexEntry> down{{0, 9}, {1, 5}};
    EXPECT_EQ(encode_index_buffer(down), (Bytes{0x0B, 0x12, 0x07}));
    EXPECT_EQ(decode_index_buffer(Bytes{0x0B, 0x12, 0x07}), down);
}

TEST(IndexBuffer, ConsecutiveProbesWellUnderOneKb) {
    std::vector<IndexEntry> e;
    for (std::uint32_t i = 0; i < 400; ++i) e.push_back({i, 1000 + i});
    const Bytes b = encode_index_buffer(e);
    EXPECT_LE(b.size(), 2 * 400 + 5u);
    EXPECT_LT(b.size(), 1024u);
    EXPECT_EQ(decode_index_buffer(b), e);
}

TEST(IndexBuffer, UnsortedRejected) {
    const std::vector<IndexEntry> bad{{3, 1}, {2, 5}};
    EXPECT_THROW(encode_index_buffer(bad), InvalidArgument);
    const std::vector<IndexEntry> dup{{3, 1}, {3, 5}};
    EXPECT_THROW(encode_index_buffer(dup), InvalidArgument);
}

TEST(IndexBuffer, PlainRoundTripRandom) {
    test::for_cases(71, 300, [](Rng& rng, int) {
        const auto e = random_entries(rng, rng() % 200, 600, 1u << 20);
        ASSERT_EQ(decode_index_buffer(encode_index_buffer(e)), e);
    });
}

TEST(IndexBuffer, AllocatorFormTracksMirroredLayout) {
    test::for_cases(72, 100, [](Rng& rng, int) {
        UpdateAtlasLayout server(128, 8), client(128, 8);
        for (int frame = 0; frame < 20; ++frame) {
            std::vector<ProbeId> sel(4096);
            std::iota(sel.begin(), sel.end(), 0u);
            std::shuffle(sel.begin(), sel.end(), rng);
            sel.resize(rng() % 129);
            const auto e = server.assign(sel);
            const Bytes b = encode_index_buffer(e, IndexSlots::Allocator);
            ASSERT_EQ(decode_index_buffer(b, &client), e);
            ASSERT_EQ(server.cached_count(), client.cached_count());
        }
    });
}

TEST(IndexBuffer, AllocatorFormExample) {
    UpdateAtlasLayout server(16, 8), client(16, 8);
    const std::vector<ProbeId> first{5, 6, 7}, second{9, 7, 6};
    decode_index_buffer(encode_index_buffer(server.assign(first), IndexSlots::Allocator), &client);
    const auto e = server.assign(second);
    ASSERT_EQ(e, (std::vector<IndexEntry>{{1, 6}, {2, 7}, {3, 9}}));
    const Bytes b = encode_index_buffer(e, IndexSlots::Allocator);
    // head (3 << 2) | 1, then probe gaps 6, 0, 1
    EXPECT_EQ(b, (Bytes{0x0D, 0x06, 0x00, 0x01}));
    EXPECT_EQ(encode_index_buffer(e).size(), 7u);
    EXPECT_THROW(decode_index_buffer(b), ProtocolError);
    UpdateAtlasLayout copy = client;
    EXPECT_EQ(decode_index_buffer(b, &client), e);
    // Explicit slots are checked against the replay.
    UpdateAtlasLayout fresh(16, 8);
    EXPECT_THROW(decode_index_buffer(encode_index_buffer(e), &fresh), ProtocolError);
    EXPECT_EQ(decode_index_buffer(encode_index_buffer(e), &copy), e);
}

namespace {

/// Probes inside one to three random boxes of a 16x16x16 grid: the shape of
/// real selections (changed probes near moving lights, seen from one camera).
std::vector<ProbeId> coherent_selection(Rng& rng, std::size_t cap) {
    const GridDims d{16, 16, 16};
    std::vector<ProbeId> out;
    const int boxes = 1 + static_cast<int>(rng() % 3);
    for (int b = 0; b < boxes; ++b) {
        int lo[3], hi[3];
        for (int a = 0; a < 3; ++a) {
            lo[a] = static_cast<int>(rng() % 16);
            hi[a] = std::min(16, lo[a] + 1 + static_cast<int>(rng() % 8));
        }
        for (int k = lo[2]; k < hi[2]; ++k)
            for (int j = lo[1]; j < hi[1]; ++j)
                for (int i = lo[0]; i < hi[0]; ++i) out.push_back(grid_to_index({i, j, k}, d));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    std::shuffle(out.begin(), out.end(), rng);
    if (out.size() > cap) out.resize(cap);
    return out;
}

}  // namespace

TEST(IndexBuffer, DenseLayoutsMeetSizeBound) {
    // A layout cleared every frame fills slots from 0, as the no-cache method does.
    test::for_cases(75, 200, [](Rng& rng, int i) {
        UpdateAtlasLayout layout(500, 8);
        std::vector<ProbeId> all(4096);
        std::iota(all.begin(), all.end(), 0u);
        std::shuffle(all.begin(), all.end(), rng);
        all.resize(i % 4 == 0 ? rng() % 16 : rng() % 501);
        const auto entries = layout.assign(all);
        const Bytes b = encode_index_buffer(entries);
        ASSERT_LE(b.size(), 2 * entries.size() + 2) << entries.size();
        ASSERT_LE(b.size(), 1024u);
        ASSERT_EQ(decode_index_buffer(b), entries);
    });
}

TEST(IndexBuffer, CachingLayoutsMeetSizeBound) {
    // Persistent layouts, with and without eviction, fed coherent or uniform selections.
    test::for_cases(73, 40, [](Rng& rng, int i) {
        const std::size_t slots = i % 2 ? 4096 : 500;
        UpdateAtlasLayout server(slots, 8), client(slots, 8);
        for (int frame = 0; frame < 40; ++frame) {
            std::vector<ProbeId> sel;
            if (i % 4 < 2) {
                sel = coherent_selection(rng, 500);
            } else {
                sel.resize(4096);
                std::iota(sel.begin(), sel.end(), 0u);
                std::shuffle(sel.begin(), sel.end(), rng);
                sel.resize(rng() % 501);
            }
            const auto entries = server.assign(sel);
            const Bytes b = encode_index_buffer(entries, IndexSlots::Allocator);
            ASSERT_LE(b.size(), 2 * entries.size() + 2) << "frame " << frame << " count " << entries.size();
            ASSERT_LE(b.size(), 1024u);
            ASSERT_EQ(decode_index_buffer(b, &client), entries);
        }
    });
}

TEST(IndexBuffer, MalformedInput) {
    EXPECT_THROW(decode_index_buffer(Bytes{}), DecodeError);
    EXPECT_THROW(decode_index_buffer(Bytes{0x08, 0x00}), DecodeError);
    EXPECT_THROW(decode_index_buffer(Bytes{0x04, 0x00, 0x01}), DecodeError);  // probe -1
    EXPECT_THROW(decode_index_buffer(Bytes{0x07, 0x01}), DecodeError);        // dense probe -1
    EXPECT_THROW(decode_index_buffer(Bytes{0x00, 0x00}), DecodeError);        // trailing byte
    EXPECT_THROW(decode_index_buffer(Bytes{0x05, 0x00}), ProtocolError);      // allocator form, no layout
    UpdateAtlasLayout one(1, 8);
    EXPECT_THROW(decode_index_buffer(Bytes{0x09, 0x00, 0x00}, &one), DecodeError);  // more probes than slots
    UpdateAtlasLayout two(2, 8);
    EXPECT_THROW(decode_index_buffer(Bytes{0x08, 0x00, 0x00, 0x00, 0x00}, &two), DecodeError);  // probe twice
}

TEST(Texels, ByteConversion) {
    const std::vector<Texel> t{0x01020304u, 0xFFFFFFFFu};
    const Bytes b = texels_to_bytes(t);
    EXPECT_EQ(b, (Bytes{4, 3, 2, 1, 255, 255, 255, 255}));
    EXPECT_EQ(bytes_to_texels(b), t);
    EXPECT_THROW(bytes_to_texels(Bytes{1, 2, 3}), DecodeError);
}

TEST(Methods, NamesRoundTrip) {
    for (auto m : {UpdateMethod::Uncompressed, UpdateMethod::Encoded, UpdateMethod::Culling,
                   UpdateMethod::PackingNoCache, UpdateMethod::PackingCaching}) {
        EXPECT_EQ(parse_update_method(to_string(m)), m);
    }
    EXPECT_THROW(parse_update_method("hevc"), InvalidArgument);
    EXPECT_TRUE(is_selective(UpdateMethod::PackingCaching));
    EXPECT_FALSE(is_selective(UpdateMethod::Culling));
    EXPECT_NE(codec_stream_id(1, TextureKind::Color), codec_stream_id(1, TextureKind::Visibility));
    EXPECT_NE(codec_stream_id(1, TextureKind::Visibility), codec_stream_id(2, TextureKind::Color));
}

TEST(Packet, WireRoundTripAndLayout) {
    UpdatePacket p;
    p.client_id = 7;
    p.epoch = 2;
    p.stream = TextureKind::Visibility;
    p.method = UpdateMethod::PackingNoCache;
    p.update_seq = 41;
    p.slots_per_row = 12;
    p.index = {1, 2, 3};
    p.frame = Bytes(40, 9);
    const Bytes w = p.serialize();
    EXPECT_EQ(w.size(), p.wire_size());
    EXPECT_EQ(w.size(), 28u + 3 + 40);
    EXPECT_EQ(std::string(w.begin(), w.begin() + 4), "LPU1");
    EXPECT_EQ(w[12], 1);
    EXPECT_EQ(w[13], 3);
    EXPECT_EQ(UpdatePacket::parse(w), p);
    // Content excludes the frame header and CRC.
    EXPECT_EQ(p.content_bytes(), 3 + 40 - (EncodedFrame::kHeaderBytes + EncodedFrame::kTrailerBytes));
    p.method = UpdateMethod::Uncompressed;
    EXPECT_EQ(p.content_bytes(), 43u);
}

TEST(Packet, MalformedRejected) {
    UpdatePacket p;
    Bytes w = p.serialize();
    Bytes longer = w;
    longer.push_back(0);
    EXPECT_THROW(UpdatePacket::parse(longer), DecodeError);
    w[12] = 5;
    EXPECT_THROW(UpdatePacket::parse(w), DecodeError);
    EXPECT_THROW(UpdatePacket::parse(Bytes{'L', 'P', 'U'}), DecodeError);
}
