#include "lpstream/client.hpp"
#include "lpstream/error.hpp"
#include "lpstream/scenario.hpp"
#include "lpstream/server.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

using namespace lpstream;
using lpstream::test::Rng;

namespace {

ProbeFrame blank_frame(const ProbeVolume& v, std::uint64_t index = 1) {
    return ProbeFrame{index, ProbeAtlas(TextureKind::Color, v.probe_count()),
                      ProbeAtlas(TextureKind::Visibility, v.probe_count()), SceneGeometry{}};
}

void set_probe(ProbeFrame& f, ProbeId p, Rng& rng) {
    f.color.insert_block(p, test::random_block(TextureKind::Color, rng));
    f.visibility.insert_block(p, test::random_block(TextureKind::Visibility, rng));
}

ServerConfig no_pvs(UpdateMethod m) {
    ServerConfig c;
    c.method = m;
    c.use_pvs = false;
    return c;
}

/// Sends every update straight to the client and checks the master invariant.
void deliver(const std::vector<OutgoingUpdate>& ups, ClientState& client, const ClientSession& session) {
    for (const auto& u : ups) {
        const UpdatePacket wire = UpdatePacket::parse(u.packet.serialize());
        apply_update(wire, client);
    }
    for (TextureKind k : {TextureKind::Color, TextureKind::Visibility}) {
        ASSERT_EQ(client.textures(k), session.permanent(k));
    }
}

}  // namespace

TEST(StreamClock, ThirtyAndTenTicksPerSecond) {
    const ProbeVolume v({2, 2, 2});
    ClientSession s(1, v, ServerConfig{});
    int color = 0, vis = 0;
    for (int ms = 0; ms < 1000; ++ms) {
        for (TextureKind k : schedule_due(s, ms / 1000.0)) (k == TextureKind::Color ? color : vis)++;
    }
    EXPECT_EQ(color, 30);
    EXPECT_EQ(vis, 10);
}

TEST(StreamClock, ZeroRateNeverDue) {
    StreamClock c(0.0);
    for (int i = 0; i < 100; ++i) EXPECT_FALSE(c.poll(i * 0.1));
}

TEST(StreamClock, CollapsesMissedTicks) {
    StreamClock c(10.0);
    EXPECT_TRUE(c.poll(0.0));
    EXPECT_FALSE(c.poll(0.05));
    EXPECT_TRUE(c.poll(0.55));  // ticks 1..5 collapse
    EXPECT_FALSE(c.poll(0.59));
    EXPECT_TRUE(c.poll(0.6));
    c.reset();
    EXPECT_TRUE(c.poll(0.6));
}

TEST(StreamClock, JitteredPollsWithinOneTickPerWindow) {
    test::for_cases(81, 50, [](Rng& rng, int) {
        const double rate = test::uniform_real(rng, 1.0, 30.0);
        const double poll_hz = 120.0;
        StreamClock ideal(rate), jittered(rate);
        std::vector<int> a(10, 0), b(10, 0);
        for (int i = 0; i < 1200; ++i) {
            const double t = i / poll_hz;
            const double tj = std::max(0.0, t + test::uniform_real(rng, -0.4, 0.4) / poll_hz);
            if (ideal.poll(t)) ++a[static_cast<int>(t)];
            if (jittered.poll(tj)) ++b[std::min(9, static_cast<int>(tj))];
        }
        for (int w = 0; w < 10; ++w) ASSERT_LE(std::abs(a[w] - b[w]), 1) << "window " << w << " rate " << rate;
    });
}

TEST(Server, UnchangedFrameEmitsNothing) {
    const ProbeVolume v({3, 3, 3});
    for (UpdateMethod m : {UpdateMethod::Culling, UpdateMethod::PackingNoCache, UpdateMethod::PackingCaching}) {
        Server server(v, no_pvs(m));
        server.add_client(1);
        Rng rng(82);
        ProbeFrame f = blank_frame(v);
        // All-zero content matches the zero-initialised mirror.
        EXPECT_TRUE(server.on_tick(0.0, f).empty()) << to_string(m);
        set_probe(f, 4, rng);
        EXPECT_EQ(server.on_tick(0.1, f).size(), 2u) << to_string(m);
        EXPECT_TRUE(server.on_tick(0.2, f).empty()) << to_string(m);  // idempotent commit
    }
}

TEST(Server, FullMethodsAlwaysSend) {
    const ProbeVolume v({2, 2, 2});
    for (UpdateMethod m : {UpdateMethod::Uncompressed, UpdateMethod::Encoded}) {
        Server server(v, no_pvs(m));
        server.add_client(1);
        const ProbeFrame f = blank_frame(v);
        EXPECT_EQ(server.on_tick(0.0, f).size(), 2u);
        EXPECT_EQ(server.on_tick(0.1, f).size(), 2u);
    }
}

TEST(Server, OneChangedProbeEndToEnd) {
    const ProbeVolume v({4, 4, 4});
    for (UpdateMethod m : {UpdateMethod::Uncompressed, UpdateMethod::Encoded, UpdateMethod::Culling,
                           UpdateMethod::PackingNoCache, UpdateMethod::PackingCaching}) {
        Server server(v, no_pvs(m));
        ClientSession& session = server.add_client(1);
        ClientState client(1, v);
        Rng rng(83);
        ProbeFrame f = blank_frame(v);
        set_probe(f, 7, rng);
        const auto ups = server.on_tick(0.0, f);
        ASSERT_EQ(ups.size(), 2u);
        for (const auto& u : ups) {
            EXPECT_EQ(u.changed, 1u);
            if (is_selective(m)) {
                EXPECT_EQ(u.selected, 1u);
                EXPECT_EQ(decode_index_buffer(u.packet.index).size(), 1u);
            }
        }
        deliver(ups, client, session);
        EXPECT_EQ(client.textures(TextureKind::Color).extract_block(7), f.color.extract_block(7)) << to_string(m);
        EXPECT_EQ(client.textures(TextureKind::Color), f.color);
        EXPECT_EQ(client.textures(TextureKind::Visibility), f.visibility);
    }
}

TEST(Server, RandomScheduleKeepsMirrorSound) {
    test::for_cases(84, 12, [](Rng& rng, int i) {
        ProbeVolume v({4, 3, 4});
        for (ProbeId p = 0; p < v.probe_count(); ++p) v.set_active(p, rng() % 4 != 0);
        const UpdateMethod m = static_cast<UpdateMethod>(i % 5);
        ServerConfig cfg = no_pvs(m);
        cfg.budget = i % 3 == 0 ? 5 : kUnlimitedBudget;
        cfg.gop_length = 1 + static_cast<int>(rng() % 8);
        Server server(v, cfg);
        ClientSession& session = server.add_client(3);
        ClientState client(3, v);
        ProbeFrame f = blank_frame(v);
        for (int tick = 0; tick < 40; ++tick) {
            for (int k = static_cast<int>(rng() % 6); k > 0; --k) set_probe(f, rng() % v.probe_count(), rng);
            f.index = static_cast<std::uint64_t>(tick + 1);
            const auto ups = server.on_tick(tick / 30.0, f);
            for (const auto& u : ups) ASSERT_LE(u.selected, is_selective(m) ? cfg.budget : v.probe_count());
            deliver(ups, client, session);
        }
    });
}

TEST(Server, BudgetTruncatesAndCatchesUp) {
    const ProbeVolume v({4, 4, 2});
    ServerConfig cfg = no_pvs(UpdateMethod::PackingCaching);
    cfg.budget = 3;
    cfg.visibility_rate_hz = 30.0;
    Server server(v, cfg);
    ClientSession& session = server.add_client(1);
    ClientState client(1, v);
    Rng rng(85);
    ProbeFrame f = blank_frame(v);
    for (ProbeId p = 0; p < v.probe_count(); ++p) set_probe(f, p, rng);
    int ticks = 0;
    for (; ticks < 100; ++ticks) {
        const auto ups = server.on_tick(ticks / 30.0, f);
        if (ups.empty()) break;
        for (const auto& u : ups) {
            EXPECT_LE(u.selected, 3u);
            EXPECT_GT(u.candidates, 0u);
        }
        deliver(ups, client, session);
    }
    // 32 probes, 3 per tick: 11 ticks to drain.
    EXPECT_EQ(ticks, 11);
    EXPECT_EQ(client.textures(TextureKind::Color), f.color);
}

TEST(Server, TwoClientsShareRenderDifferentSelections) {
    ScenarioConfig sc;
    sc.regime = Regime::Street;
    sc.dims = {8, 4, 8};
    sc.frames = 30;
    const Scenario scenario(sc);
    ServerConfig cfg;
    cfg.method = UpdateMethod::PackingCaching;
    cfg.selection.sphere_rays = 64;
    cfg.selection.raster_width = cfg.selection.raster_height = 16;
    Server server(scenario.volume(), cfg);
    ClientSession& a = server.add_client(1);
    ClientSession& b = server.add_client(2);
    ClientState ca(1, scenario.volume()), cb(2, scenario.volume());
    bool differ = false;
    std::uint64_t raw = 0, content = 0;
    for (std::uint64_t i = 0; i < sc.frames; ++i) {
        const ProbeFrame f = scenario.generate_frame(i);
        const double t = i / 30.0;
        a.set_pose(orbit_pose(scenario.volume(), t, 1));
        b.set_pose(orbit_pose(scenario.volume(), t, 2));
        const auto ups = server.on_tick(t, f);
        std::vector<OutgoingUpdate> ua, ub;
        for (const auto& u : ups) {
            (u.client_id == 1 ? ua : ub).push_back(u);
            raw += u.raw_bits;
            content += u.packet.content_bytes() * 8;
        }
        for (TextureKind k : {TextureKind::Color, TextureKind::Visibility}) {
            if (a.stream(k).last_selection.selected != b.stream(k).last_selection.selected) differ = true;
        }
        deliver(ua, ca, a);
        deliver(ub, cb, b);
    }
    EXPECT_TRUE(differ);
    EXPECT_LT(content, raw);
}

TEST(Server, WorkersMatchInlineProcessing) {
    ScenarioConfig sc;
    sc.regime = Regime::Collapse;
    sc.dims = {6, 3, 6};
    sc.frames = 12;
    const Scenario scenario(sc);
    std::vector<Bytes> wire[2];
    for (int w : {1, 4}) {
        ServerConfig cfg;
        cfg.workers = w;
        cfg.selection.sphere_rays = 32;
        cfg.selection.raster_width = cfg.selection.raster_height = 8;
        Server server(scenario.volume(), cfg);
        for (std::uint32_t id = 1; id <= 5; ++id) server.add_client(id);
        for (std::uint64_t i = 0; i < sc.frames; ++i) {
            for (std::uint32_t id = 1; id <= 5; ++id) server.session(id).set_pose(orbit_pose(scenario.volume(), i / 30.0, id));
            for (const auto& u : server.on_tick(i / 30.0, scenario.generate_frame(i))) {
                wire[w == 4].push_back(u.packet.serialize());
            }
        }
    }
    EXPECT_FALSE(wire[0].empty());
    EXPECT_EQ(wire[0], wire[1]);
}

TEST(Server, ResetForcesKeyFrameAndFullResend) {
    const ProbeVolume v({3, 3, 3});
    Server server(v, no_pvs(UpdateMethod::PackingCaching));
    ClientSession& session = server.add_client(1);
    ClientState client(1, v);
    Rng rng(86);
    ProbeFrame f = blank_frame(v);
    for (ProbeId p = 0; p < v.probe_count(); ++p) set_probe(f, p, rng);
    deliver(server.on_tick(0.0, f), client, session);
    session.reset();
    EXPECT_EQ(session.epoch(), 1u);
    const auto ups = server.on_tick(0.1, f);
    ASSERT_EQ(ups.size(), 2u);
    for (const auto& u : ups) {
        EXPECT_TRUE(u.key_frame);
        EXPECT_EQ(u.packet.update_seq, 1u);
        EXPECT_EQ(u.packet.epoch, 1u);
        EXPECT_EQ(u.selected, v.active_count());
    }
    deliver(ups, client, session);
}

TEST(Server, Errors) {
    const ProbeVolume v({2, 2, 2});
    Server server(v, ServerConfig{});
    server.add_client(1);
    EXPECT_THROW(server.add_client(1), InvalidArgument);
    EXPECT_THROW(server.session(9), InvalidArgument);
    ProbeFrame wrong{0, ProbeAtlas(TextureKind::Color, 4), ProbeAtlas(TextureKind::Visibility, 4), {}};
    EXPECT_THROW(server.on_tick(0.0, wrong), InvalidArgument);
    ServerConfig bad;
    bad.workers = 0;
    EXPECT_THROW(Server(v, bad), InvalidArgument);
    bad = ServerConfig{};
    bad.color_rate_hz = -1;
    EXPECT_THROW(Server(v, bad), InvalidArgument);
    bad = ServerConfig{};
    bad.slot_count = 3;
    EXPECT_THROW(Server(v, bad), InvalidArgument);
    server.remove_client(1);
    EXPECT_FALSE(server.has_client(1));
}
