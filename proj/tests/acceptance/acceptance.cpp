// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "lpstream/client.hpp"
#include "lpstream/codec.hpp"
#include "lpstream/harness.hpp"
#include "lpstream/packing.hpp"
#include "lpstream/probe_model.hpp"
#include "lpstream/scenario.hpp"
#include "lpstream/selection.hpp"
#include "lpstream/server.hpp"
#include "lpstream/transport.hpp"
#include "lpstream/update_packet.hpp"
#include "support.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <string>

using namespace lpstream;
using lpstream::test::Rng;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

constexpr Regime kRegimes[] = {Regime::Collapse, Regime::DayCycle, Regime::Street};

bool within_rel(double value, double expected, double rel) { return std::abs(value - expected) <= rel * std::abs(expected); }

SelectionParams fast_selection() {
    SelectionParams s;
    s.sphere_rays = 64;
    s.raster_width = s.raster_height = 16;
    return s;
}

// Throughput of the uncompressed textures at 10 Hz for 2048 probes.
Outcome ac1() {
    const double color = to_mbps(throughput(10, 2048, TextureKind::Color));
    const double vis = to_mbps(throughput(10, 2048, TextureKind::Visibility));
    // Oracle: rate x probes x texels x 32 bits, 2^20 bits per Mb.
    const double color_oracle = 10.0 * 2048 * 10 * 10 * 32 / 1048576.0;
    const double vis_oracle = 10.0 * 2048 * 18 * 18 * 32 / 1048576.0;
    const bool pass = color == 62.5 && vis == 202.5 && color == color_oracle && vis == vis_oracle &&
                      within_rel(color + vis, 265.0, 0.001);
    return {pass, fmt::format("color {} Mbps, visibility {} Mbps, sum {} Mbps", color, vis, color + vis)};
}

// Measured uncompressed stream bandwidth through the whole harness.
Outcome ac2() {
    ExperimentConfig c;
    c.scenario.dims = {16, 8, 16};
    c.scenario.frames = 30;
    c.methods = {UpdateMethod::Uncompressed};
    c.server.color_rate_hz = 10;
    c.server.visibility_rate_hz = 10;
    const MetricsReport rep = run_experiment(c);
    const MethodSummary& m = rep.methods[0];
    const bool pass = within_rel(m.total_mbps, 62.5 + 202.5, 0.01) && m.mirrors_match;
    return {pass, fmt::format("measured {:.4f} Mbps (color {:.4f}, visibility {:.4f}); framing {} B, transport {} B reported "
                              "separately",
                              m.total_mbps, m.color_mbps, m.visibility_mbps, m.packet_overhead_bytes,
                              m.transport_overhead_bytes)};
}

// Guard-band stripping and inactive-probe removal, measured on real blocks.
Outcome ac3() {
    ProbeVolume v({16, 8, 16});
    for (ProbeId p = 0; p < v.probe_count(); ++p) v.set_active(p, p % 4 != 0);
    Rng rng(3);
    std::vector<ProbeId> active;
    for (ProbeId p = 0; p < v.probe_count(); ++p) {
        if (v.is_active(p)) active.push_back(p);
    }
    double reduction[2];
    double strip[2];
    double sent_bits = 0, full_bits = 0;
    for (TextureKind kind : {TextureKind::Color, TextureKind::Visibility}) {
        ProbeAtlas atlas(kind, v.probe_count());
        for (ProbeId p = 0; p < v.probe_count(); ++p) atlas.insert_block(p, test::random_block(kind, rng));
        const std::size_t block = atlas.extract_block(0).size();
        const std::size_t core = strip_guard_band(atlas.extract_block(0), atlas.probe_side()).size();
        strip[static_cast<int>(kind)] = 1.0 - static_cast<double>(core) / static_cast<double>(block);

        UpdateAtlasLayout layout(active.size(), atlas.core_side());
        TexelImage update = make_update_texture(layout);
        const auto entries = build_update_atlas(active, layout, atlas, update);
        const double sent = static_cast<double>(entries.size() * core);
        const double full = static_cast<double>(atlas.probe_count() * block);
        reduction[static_cast<int>(kind)] = 1.0 - sent / full;
        sent_bits += sent * 32;
        full_bits += full * 32;
    }
    const bool pass = std::abs(strip[0] - 0.36) < 1e-12 && std::abs(strip[1] - (1.0 - 256.0 / 324.0)) < 1e-12 &&
                      std::abs(reduction[0] - 0.520) < 0.0005 && std::abs(reduction[1] - 0.407) < 0.0005;
    return {pass, fmt::format("strip color {:.2f}%, visibility {:.2f}%; with 75% active: color {:.2f}%, visibility {:.2f}%, "
                              "both textures by bits {:.2f}%",
                              100 * strip[0], 100 * strip[1], 100 * reduction[0], 100 * reduction[1],
                              100 * (1.0 - sent_bits / full_bits))};
}

// Client textures equal the server mirrors at the end of lossy runs.
Outcome ac4() {
    int runs = 0, ok = 0;
    std::string failures;
    for (Regime regime : kRegimes) {
        for (double loss : {0.0, 0.05, 0.2}) {
            ExperimentConfig c;
            c.scenario.regime = regime;
            c.scenario.frames = 100;
            c.scenario.seed = 41 + static_cast<std::uint64_t>(runs);
            c.server.selection = fast_selection();
            c.downlink.loss = loss;
            c.uplink.loss = loss;
            const MetricsReport rep = run_experiment(c);
            ++runs;
            bool all = true;
            for (const MethodSummary& m : rep.methods) all = all && m.mirrors_match && m.drained;
            if (all) {
                ++ok;
            } else {
                failures += fmt::format(" {}@{}", to_string(regime), loss);
            }
        }
    }
    return {ok == runs, fmt::format("{}/{} runs bit-identical across all 5 methods{}", ok, runs, failures)};
}

// Plane packing on 10^4 random blocks per texture, special floats included.
Outcome ac5() {
    Rng rng(5);
    constexpr std::size_t kBlocks = 10000;
    bool color_ok = true, vis_ok = true, range_ok = true;
    {
        ProbeAtlas atlas(TextureKind::Color, kBlocks);
        test::fill_random(atlas, rng);
        const PlaneSet planes = pack_planes(TextureKind::Color, atlas.image());
        for (const auto& plane : planes.planes)
            for (auto e : plane) range_ok = range_ok && e < 1024;
        color_ok = unpack_planes(planes) == atlas.image();
    }
    {
        ProbeAtlas atlas(TextureKind::Visibility, kBlocks);
        test::fill_random(atlas, rng);
        const std::uint16_t specials[] = {0x7C01, 0x7E00, 0xFFFF, 0xFC00, 0x7C00, 0x8000, 0x0001};
        for (Texel& t : atlas.image().texels) {
            if (rng() % 8 == 0) t = pack_rg16(specials[rng() % 7], specials[rng() % 7]);
        }
        vis_ok = unpack_planes(pack_planes(TextureKind::Visibility, atlas.image())) == atlas.image();
    }
    int width_errors = 0;
    for (int x = 0; x <= 10000; ++x) {
        if (widened_width(x) != (4 * x + 2) / 3) ++width_errors;
    }
    return {color_ok && vis_ok && range_ok && width_errors == 0,
            fmt::format("color {}, visibility {}, color range {}, width rule errors {}", color_ok ? "exact" : "MISMATCH",
                        vis_ok ? "exact" : "MISMATCH", range_ok ? "ok" : "VIOLATED", width_errors)};
}

PlaneSet random_planes(Rng& rng, PlaneKind kind, int w, int h) {
    PlaneSet p(kind, w, h);
    const std::uint32_t hi = kind == PlaneKind::Color10in16 ? 1023 : 255;
    for (auto& plane : p.planes)
        for (auto& e : plane) e = static_cast<std::uint16_t>(test::uniform_u32(rng, 0, hi));
    return p;
}

// Codec losslessness, static ratios, regime ordering and noise expansion.
Outcome ac6() {
    Rng rng(6);
    // (a)
    int mismatches = 0;
    {
        CodecStreamState enc(1, CodecRole::Encoder), dec(1, CodecRole::Decoder);
        PlaneSet cur = random_planes(rng, PlaneKind::Color10in16, 48, 40);
        for (int i = 0; i < 1000; ++i) {
            const int what = static_cast<int>(rng() % 3);
            if (what == 1) {
                for (int k = 0; k < 30; ++k) cur.planes[rng() % 3][rng() % cur.element_count()] = rng() % 1024;
            } else if (what == 2) {
                cur = random_planes(rng, PlaneKind::Color10in16, 48, 40);
            }
            if (decode_frame(EncodedFrame::parse(encode_frame(cur, enc).serialize()), dec) != cur) ++mismatches;
        }
    }
    // (b) a static frame of real probe content
    ScenarioConfig still;
    still.regime = Regime::Street;
    still.hotspots = 0;
    const ProbeFrame frame = Scenario(still).generate_frame(0);
    const PlaneSet planes = pack_planes(TextureKind::Color, frame.color.image());
    const double raw = static_cast<double>(frame.color.image().texels.size()) * 32;
    CodecStreamState enc(2, CodecRole::Encoder);
    double all_bits = 0, p_bits = 0;
    for (int i = 0; i < 30; ++i) {
        const double bits = static_cast<double>(encode_frame(planes, enc).wire_size()) * 8;
        all_bits += bits;
        if (i > 0) p_bits += bits;
    }
    const double mean_ratio = 30 * raw / all_bits, p_ratio = 29 * raw / p_bits;
    // (c)
    std::map<Regime, double> ratio;
    for (Regime regime : kRegimes) {
        ExperimentConfig c;
        c.scenario.regime = regime;
        c.scenario.frames = 60;
        c.methods = {UpdateMethod::Encoded};
        ratio[regime] = run_experiment(c).methods[0].color_ratio.mean;
    }
    const bool ordered = ratio[Regime::Street] > ratio[Regime::DayCycle] && ratio[Regime::DayCycle] > ratio[Regime::Collapse];
    // (d)
    double worst = 0;
    for (PlaneKind kind : {PlaneKind::Color10in16, PlaneKind::VisibilityBytes}) {
        for (int i = 0; i < 4; ++i) {
            const PlaneSet p = random_planes(rng, kind, 96 + 16 * i, 64);
            CodecStreamState e(3, CodecRole::Encoder);
            const double packed = static_cast<double>(p.element_count()) * 3 * p.bit_depth();
            worst = std::max(worst, encode_frame(p, e).wire_size() * 8.0 / packed - 1.0);
        }
    }
    const bool pass = mismatches == 0 && mean_ratio >= 20 && p_ratio >= 100 && ordered && worst <= 0.05;
    return {pass, fmt::format("(a) {} mismatches in 1000 frames; (b) static mean {:.1f}:1, P-frames {:.1f}:1; "
                              "(c) street {:.2f} > daycycle {:.2f} > collapse {:.2f} {}; (d) worst expansion {:.2f}%",
                              mismatches, mean_ratio, p_ratio, ratio[Regime::Street], ratio[Regime::DayCycle],
                              ratio[Regime::Collapse], ordered ? "holds" : "VIOLATED", 100 * worst)};
}

CameraPose random_pose(const ProbeVolume& v, Rng& rng) {
    CameraPose p;
    const Vec3 lo = v.bounds_min(), hi = v.bounds_max();
    p.position = {test::uniform_real(rng, lo.x, hi.x), test::uniform_real(rng, lo.y, hi.y),
                  test::uniform_real(rng, lo.z, hi.z)};
    do {
        p.forward = {test::uniform_real(rng, -1, 1), test::uniform_real(rng, -0.5, 0.5), test::uniform_real(rng, -1, 1)};
    } while (length(p.forward) < 0.1);
    return p;
}

void apply_all(const std::vector<OutgoingUpdate>& ups, ClientState& client) {
    for (const auto& u : ups) apply_update(UpdatePacket::parse(u.packet.serialize()), client);
}

// Shading from PVS-synced textures equals shading from fully synced ones.
Outcome ac7() {
    std::size_t samples = 0, differing = 0, nesting_violations = 0, frames = 0, stale = 0;
    for (Regime regime : kRegimes) {
        ScenarioConfig sc;
        sc.regime = regime;
        sc.seed = 17;
        const Scenario scenario(sc);
        const ProbeVolume& v = scenario.volume();
        ServerConfig cfg;
        cfg.selection = fast_selection();
        cfg.visibility_rate_hz = 30;
        ServerConfig full_cfg = cfg;
        full_cfg.use_pvs = false;
        Server pvs_server(v, cfg), full_server(v, full_cfg);
        pvs_server.add_client(1);
        full_server.add_client(1);
        ClientState pvs_client(1, v), full_client(1, v);
        Rng rng(70 + static_cast<int>(regime));
        ProbeFrame previous = scenario.generate_frame(0);
        for (std::uint64_t f = 0; f < 20; ++f) {
            const CameraPose pose = random_pose(v, rng);
            const ProbeFrame frame = scenario.generate_frame(f * 3 + 1);
            const ProbeSet changed = detect_changed(frame.color, previous.color, v);
            const std::size_t primary =
                set_intersection(changed, primary_view_probes(pose, frame.scene, v, cfg.selection)).size();
            const std::size_t pvs = set_intersection(changed, pvs_probes(pose, frame.scene, v, cfg.selection)).size();
            if (!(primary <= pvs && pvs <= changed.size())) ++nesting_violations;
            ++frames;
            previous = frame;

            pvs_server.session(1).set_pose(pose);
            full_server.session(1).set_pose(pose);
            apply_all(pvs_server.on_tick(f / 30.0, frame), pvs_client);
            apply_all(full_server.on_tick(f / 30.0, frame), full_client);
            stale += detect_changed(frame.color, pvs_client.textures(TextureKind::Color), v).size();
            for (const Ray& ray : frustum_rays(pose, cfg.selection)) {
                const auto hit = frame.scene.intersect(ray);
                if (!hit) continue;
                ++samples;
                if (shade_sample(hit->point, hit->normal, pvs_client) != shade_sample(hit->point, hit->normal, full_client)) {
                    ++differing;
                }
            }
        }
    }
    const bool pass = differing == 0 && nesting_violations == 0 && samples > 0 && stale > 0;
    return {pass, fmt::format("{} shading samples over 60 poses, {} differ; {} stale probe-frames on the culled client; "
                              "nesting violated on {}/{} frames",
                              samples, differing, stale, nesting_violations, frames)};
}

// Index buffer size bounds, on server output and on random selections.
Outcome ac8() {
    std::size_t buffers = 0, over_bound = 0, over_kb = 0;
    double worst_excess = -1e9;
    const auto check = [&](std::size_t bytes, std::size_t count, bool under_500) {
        ++buffers;
        if (bytes > 2 * count + 5) ++over_bound;
        if (under_500 && bytes > 1024) ++over_kb;
        worst_excess = std::max(worst_excess, static_cast<double>(bytes) - 2.0 * static_cast<double>(count));
    };
    for (Regime regime : kRegimes) {
        for (std::size_t slots : {std::size_t{0}, std::size_t{96}}) {
            ExperimentConfig c;
            c.scenario.regime = regime;
            c.scenario.dims = {16, 16, 16};
            c.scenario.frames = 30;
            c.methods = {UpdateMethod::PackingNoCache, UpdateMethod::PackingCaching};
            c.server.selection = fast_selection();
            c.server.budget = slots ? 96 : kUnlimitedBudget;
            c.server.slot_count = slots;
            for (const UpdateRecord& r : run_experiment(c).updates) check(r.index_bytes, r.selected, r.selected <= 500);
        }
    }
    Rng rng(8);
    for (std::size_t slots : {std::size_t{500}, std::size_t{4096}}) {
        UpdateAtlasLayout server(slots, 8), client(slots, 8);
        for (int frame = 0; frame < 400; ++frame) {
            std::vector<ProbeId> sel(4096);
            std::iota(sel.begin(), sel.end(), 0u);
            std::shuffle(sel.begin(), sel.end(), rng);
            sel.resize(rng() % 501);
            const auto entries = server.assign(sel);
            const Bytes b = encode_index_buffer(entries, IndexSlots::Allocator);
            if (decode_index_buffer(b, &client) != entries) return {false, "allocator replay diverged"};
            check(b.size(), entries.size(), true);
            UpdateAtlasLayout fresh(500, 8);
            const auto dense = fresh.assign(sel);
            check(encode_index_buffer(dense).size(), dense.size(), true);
        }
    }
    return {over_bound == 0 && over_kb == 0,
            fmt::format("{} index buffers, {} over 2n+5, {} over 1 kB with <= 500 probes; worst size - 2n = {:+.0f} B",
                        buffers, over_bound, over_kb, worst_excess)};
}

struct LinkRun {
    bool exact = false;
    std::vector<double> delivery_times;
};

LinkRun run_link(double loss, int count) {
    NetworkConfig ab, ba;
    ab.latency_ms = ba.latency_ms = 15;
    ab.jitter_ms = ba.jitter_ms = 25;
    ab.loss = ba.loss = loss;
    ab.seed = 900 + static_cast<std::uint64_t>(loss * 100);
    ba.seed = ab.seed + 1;
    SimulatedLink link(9, ab, ba);
    Rng rng(ab.seed);
    std::map<Channel, std::vector<Bytes>> sent, got;
    LinkRun run;
    const auto drain = [&] {
        while (auto m = link.b().next_message()) {
            run.delivery_times.push_back(m->delivered_at);
            got[m->channel].push_back(std::move(m->bytes));
        }
    };
    for (int k = 0; k < count; ++k) {
        const Channel c = static_cast<Channel>(rng() % kChannelCount);
        Bytes b(1 + rng() % 1500);
        for (auto& x : b) x = static_cast<std::uint8_t>(rng());
        link.a().send_message(c, b);
        sent[c].push_back(std::move(b));
        link.step(0.001);
        drain();
    }
    for (double t = 0; t < 600 && !link.idle(); t += 0.002) {
        link.step(0.002);
        drain();
    }
    drain();
    run.exact = link.idle() && got == sent;
    return run;
}

// Reliable delivery under heavy loss with reordering, and replay from seed.
Outcome ac9() {
    std::size_t messages = 0, wrong = 0, replay_diffs = 0;
    for (auto [loss, count] : {std::pair{0.1, 3000}, std::pair{0.3, 3000}, std::pair{0.5, 4000}}) {
        const LinkRun first = run_link(loss, count);
        const LinkRun again = run_link(loss, count);
        messages += static_cast<std::size_t>(count);
        if (!first.exact) ++wrong;
        if (first.delivery_times != again.delivery_times) ++replay_diffs;
    }
    return {wrong == 0 && replay_diffs == 0 && messages >= 10000,
            fmt::format("{} messages at loss 10/30/50% with 25 ms jitter: {} runs not exactly-once in order; "
                        "{} runs differ on replay",
                        messages, wrong, replay_diffs)};
}

// End-to-end virtual latency under 500 ms on every regime and method.
Outcome ac10() {
    double worst = 0;
    std::string detail;
    for (Regime regime : kRegimes) {
        ExperimentConfig c;
        c.scenario.regime = regime;
        c.scenario.dims = {16, 8, 16};
        c.scenario.frames = 30;
        c.server.selection = fast_selection();
        const MetricsReport rep = run_experiment(c);
        const MethodSummary& pc = rep.summary(UpdateMethod::PackingCaching);
        for (const MethodSummary& m : rep.methods) worst = std::max(worst, m.latency_total_ms.max);
        detail += fmt::format(" {}: input {:.1f} + encode {:.2f} + transport {:.1f} + decode {:.2f} + apply {:.2f} = {:.1f} ms "
                              "(packing-caching mean);",
                              to_string(regime), pc.latency_input_ms.mean, pc.latency_encode_ms.mean,
                              pc.latency_transport_ms.mean, pc.latency_decode_ms.mean, pc.latency_apply_ms.mean,
                              pc.latency_total_ms.mean);
    }
    return {worst < 500.0, fmt::format("worst total {:.1f} ms;{}", worst, detail)};
}

// Block interleaving is invertible; encoded sizes per arrangement are reported.
Outcome ac11() {
    Rng rng(11);
    bool invertible = true;
    for (TextureKind kind : {TextureKind::Color, TextureKind::Visibility}) {
        for (int k : {1, 2, 4}) {
            ProbeAtlas atlas(kind, 256);
            test::fill_random(atlas, rng);
            const TexelImage mixed = interleave_layout(atlas.image(), atlas.probe_side(), k);
            invertible = invertible && deinterleave_layout(mixed, atlas.probe_side(), k) == atlas.image();
        }
    }
    ScenarioConfig sc;
    sc.regime = Regime::DayCycle;
    std::string sizes;
    for (const LayoutResult& r : atlas_arrangement_experiment(sc, 30)) {
        invertible = invertible && r.round_trip;
        sizes += fmt::format(" {}x{}: color {:.1f} kB, visibility {:.1f} kB;", r.k, r.k, r.color_bytes / 1024.0,
                             r.visibility_bytes / 1024.0);
    }
    return {invertible, fmt::format("round trip {};{}", invertible ? "exact" : "BROKEN", sizes)};
}

}  // namespace

int main() {
    const std::pair<const char*, std::function<Outcome()>> criteria[] = {
        {"AC1", ac1}, {"AC2", ac2}, {"AC3", ac3}, {"AC4", ac4},   {"AC5", ac5},   {"AC6", ac6},
        {"AC7", ac7}, {"AC8", ac8}, {"AC9", ac9}, {"AC10", ac10}, {"AC11", ac11},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        fmt::print("{} {} ({:.1f} s) {}\n", name, o.pass ? "PASS" : "FAIL", secs, o.detail);
        std::fflush(stdout);
        if (!o.pass) ++failed;
    }
    return failed == 0 ? 0 : 1;
}
