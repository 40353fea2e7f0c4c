#include "lpstream/harness.hpp"

#include "lpstream/error.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <map>
#include <memory>

namespace lpstream {

SeriesStats series_stats(const std::vector<double>& values) {
    SeriesStats s;
    s.count = values.size();
    if (values.empty()) return s;
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(sq / static_cast<double>(values.size()));
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    s.min = *lo;
    s.max = *hi;
    return s;
}

const MethodSummary& MetricsReport::summary(UpdateMethod method) const {
    for (const MethodSummary& m : methods) {
        if (m.method == to_string(method)) return m;
    }
    throw InvalidArgument("method not part of this report: " + std::string(to_string(method)));
}

bool MetricsReport::all_mirrors_match() const {
    return std::all_of(methods.begin(), methods.end(), [](const MethodSummary& m) { return m.mirrors_match; });
}

Bytes encode_pose(const CameraPose& pose, double sent_at) {
    ByteWriter w;
    w.tag("LPP1");
    for (double v : {sent_at, pose.position.x, pose.position.y, pose.position.z, pose.forward.x, pose.forward.y,
                     pose.forward.z, pose.up.x, pose.up.y, pose.up.z, pose.vertical_fov_deg, pose.aspect}) {
        w.u64(std::bit_cast<std::uint64_t>(v));
    }
    return w.take();
}

std::pair<CameraPose, double> decode_pose(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.expect_tag("LPP1");
    double v[12];
    for (double& x : v) x = std::bit_cast<double>(r.u64());
    if (!r.done()) throw DecodeError("trailing bytes after pose");
    CameraPose pose;
    pose.position = {v[1], v[2], v[3]};
    pose.forward = {v[4], v[5], v[6]};
    pose.up = {v[7], v[8], v[9]};
    pose.vertical_fov_deg = v[10];
    pose.aspect = v[11];
    return {pose, v[0]};
}

namespace {

constexpr double kMs = 1000.0;

Channel channel_for(TextureKind kind) { return kind == TextureKind::Color ? Channel::Color : Channel::Visibility; }

struct InFlight {
    std::size_t record = 0;
    double submitted_at = 0.0;
};

struct ClientContext {
    std::uint32_t id = 0;
    std::unique_ptr<SimulatedLink> link;
    std::unique_ptr<ClientState> state;
    double input_ms = 0.0;
    std::map<std::pair<int, std::uint32_t>, InFlight> in_flight;  // (channel, seq)
};

class FrameSource {
public:
    FrameSource(const Scenario& scenario) : scenario_(scenario) {
        const std::size_t n = scenario.volume().probe_count();
        const std::uint64_t bytes_per_frame =
            n * (probe_block_bits(TextureKind::Color) + probe_block_bits(TextureKind::Visibility)) / 8;
        cache_ = bytes_per_frame * scenario.config().frames <= (std::uint64_t{1} << 30);
    }

    const ProbeFrame& get(std::uint64_t f) {
        if (cache_) {
            while (frames_.size() <= f) frames_.push_back(scenario_.generate_frame(frames_.size()));
            return frames_[f];
        }
        if (!current_ || current_->index != f) current_ = scenario_.generate_frame(f);
        return *current_;
    }

private:
    const Scenario& scenario_;
    bool cache_ = false;
    std::vector<ProbeFrame> frames_;
    std::optional<ProbeFrame> current_;
};

double wall_ms_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

MethodSummary run_method(const ExperimentConfig& cfg, UpdateMethod method, std::size_t method_index,
                         const Scenario& scenario, FrameSource& frames, MetricsReport& report,
                         const DeliveryObserver& observer) {
    const ProbeVolume& volume = scenario.volume();
    ServerConfig sc = cfg.server;
    sc.method = method;
    Server server(volume, sc);
    const std::string method_name(to_string(method));

    std::vector<ClientContext> clients(static_cast<std::size_t>(cfg.clients));
    for (int c = 0; c < cfg.clients; ++c) {
        ClientContext& ctx = clients[c];
        ctx.id = static_cast<std::uint32_t>(c + 1);
        NetworkConfig down = cfg.downlink;
        NetworkConfig up = cfg.uplink;
        down.seed = cfg.downlink.seed * 1000003u + method_index * 101u + ctx.id;
        up.seed = cfg.uplink.seed * 1000003u + method_index * 101u + ctx.id + 50u;
        ctx.link = std::make_unique<SimulatedLink>(ctx.id, down, up, cfg.transport);
        ctx.state = std::make_unique<ClientState>(ctx.id, volume);
        ctx.input_ms = cfg.uplink.latency_ms;
        server.add_client(ctx.id).set_pose(orbit_pose(volume, 0.0, ctx.id));
    }

    MethodSummary summary;
    summary.method = method_name;
    const std::uint64_t frame_count = cfg.scenario.frames;
    summary.duration_s = static_cast<double>(frame_count) / cfg.render_rate_hz;
    const std::size_t first_record = report.updates.size();
    std::map<std::pair<std::uint32_t, int>, std::uint64_t> seen_builds;
    double wall_encode = 0.0, wall_apply = 0.0;
    std::uint64_t step_index = 0;

    const auto pump = [&](std::uint64_t target_step) {
        while (step_index < target_step) {
            ++step_index;
            for (ClientContext& ctx : clients) {
                ctx.link->step(cfg.step_s);
                while (auto m = ctx.link->a().next_message()) {
                    if (m->channel != Channel::Input) continue;
                    const auto [pose, sent_at] = decode_pose(m->bytes);
                    server.session(ctx.id).set_pose(pose);
                    ctx.input_ms = (m->delivered_at - sent_at) * kMs;
                }
                while (auto m = ctx.link->b().next_message()) {
                    if (m->channel != Channel::Color && m->channel != Channel::Visibility) continue;
                    const auto key = std::make_pair(static_cast<int>(m->channel), m->seq);
                    const auto it = ctx.in_flight.find(key);
                    if (observer) observer(method_name, ctx.id, m->delivered_at, m->bytes);
                    const UpdatePacket packet = UpdatePacket::parse(m->bytes);
                    const auto t0 = std::chrono::steady_clock::now();
                    try {
                        apply_update(packet, *ctx.state);
                    } catch (const ProtocolError&) {
                        // Only stale-epoch packets overtaken by a reconnect may be refused.
                        if (packet.epoch >= server.session(ctx.id).epoch()) throw;
                    }
                    if (cfg.wall_clock) wall_apply += wall_ms_since(t0);
                    if (it == ctx.in_flight.end()) continue;
                    UpdateRecord& r = report.updates[it->second.record];
                    r.delivered = true;
                    r.transport_ms = (m->delivered_at - it->second.submitted_at) * kMs;
                    const double mtexels = static_cast<double>(r.raw_bits) / 32.0 / 1e6;
                    r.decode_ms = r.coded ? cfg.costs.decode_fixed_ms + cfg.costs.decode_ms_per_mtexel * mtexels : 0.0;
                    r.apply_ms = cfg.costs.apply_fixed_ms + cfg.costs.apply_ms_per_probe * static_cast<double>(r.selected);
                    r.total_ms = r.input_ms + r.encode_ms + r.transport_ms + r.decode_ms + r.apply_ms;
                    ctx.in_flight.erase(it);
                }
            }
        }
    };
    const auto step_at = [&](double t) { return static_cast<std::uint64_t>(std::llround(t / cfg.step_s)); };

    for (std::uint64_t f = 0; f < frame_count; ++f) {
        const double t = static_cast<double>(f) / cfg.render_rate_hz;
        pump(step_at(t));
        for (ClientContext& ctx : clients) {
            const CameraPose pose = orbit_pose(volume, t, ctx.id);
            ctx.state->pose = pose;
            ctx.link->b().send_message(Channel::Input, encode_pose(pose, t));
            if (cfg.reconnect_at_frame >= 0 && f == static_cast<std::uint64_t>(cfg.reconnect_at_frame)) {
                server.session(ctx.id).reset();
            }
        }
        const ProbeFrame& frame = frames.get(f);
        const auto t0 = std::chrono::steady_clock::now();
        auto updates = server.on_tick(t, frame);
        if (cfg.wall_clock) wall_encode += wall_ms_since(t0);

        for (OutgoingUpdate& u : updates) {
            ClientContext& ctx = clients[u.client_id - 1];
            UpdateRecord r;
            r.method = method_name;
            r.frame = f;
            r.client = u.client_id;
            r.stream = std::string(to_string(u.packet.stream));
            r.seq = u.packet.update_seq;
            r.key_frame = u.key_frame;
            r.coded = u.coded;
            r.raw_bits = u.raw_bits;
            r.content_bytes = u.packet.content_bytes();
            r.index_bytes = u.packet.index.size();
            r.packet_bytes = u.packet.wire_size();
            r.selected = u.selected;
            const std::uint64_t payload = r.content_bytes - r.index_bytes;
            r.ratio = (u.coded && payload) ? static_cast<double>(r.raw_bits) / (8.0 * static_cast<double>(payload)) : 0.0;
            r.input_ms = ctx.input_ms;
            const double mtexels = static_cast<double>(r.raw_bits) / 32.0 / 1e6;
            r.encode_ms = u.coded ? cfg.costs.encode_fixed_ms + cfg.costs.encode_ms_per_mtexel * mtexels : 0.0;

            const Channel ch = channel_for(u.packet.stream);
            const std::uint32_t seq = ctx.link->a().send_message(ch, u.packet.serialize());
            ctx.in_flight[{static_cast<int>(ch), seq}] = {report.updates.size(), t};
            report.updates.push_back(std::move(r));
        }

        for (ClientContext& ctx : clients) {
            const ClientSession& session = server.session(ctx.id);
            for (TextureKind k : {TextureKind::Color, TextureKind::Visibility}) {
                const SelectionRecord& sel = session.stream(k).last_selection;
                auto& seen = seen_builds[{ctx.id, static_cast<int>(k)}];
                if (sel.builds == seen) continue;
                seen = sel.builds;
                report.probes.push_back({method_name, f, ctx.id, std::string(to_string(k)), volume.active_count(),
                                         sel.changed, sel.candidates, sel.selected});
            }
        }
        pump(step_at(static_cast<double>(f + 1) / cfg.render_rate_hz));
    }

    // Drain: no new frames, keep the network running until everything is acknowledged.
    const std::uint64_t drain_end = step_index + step_at(cfg.drain_limit_s);
    const auto all_idle = [&] {
        return std::all_of(clients.begin(), clients.end(), [](const ClientContext& c) { return c.link->idle(); });
    };
    while (!all_idle() && step_index < drain_end) pump(step_index + 1);
    summary.drained = all_idle();

    summary.mirrors_match = true;
    for (ClientContext& ctx : clients) {
        for (TextureKind k : {TextureKind::Color, TextureKind::Visibility}) {
            if (!(ctx.state->textures(k) == server.session(ctx.id).permanent(k))) summary.mirrors_match = false;
        }
        summary.retransmissions += ctx.link->a().stats().retransmissions;
    }

    std::uint64_t color_bytes = 0, vis_bytes = 0, packet_bytes = 0;
    std::vector<double> color_ratio, vis_ratio, index_bytes, total, enc, trans, dec, app, inp;
    for (std::size_t i = first_record; i < report.updates.size(); ++i) {
        const UpdateRecord& r = report.updates[i];
        (r.stream == "color" ? color_bytes : vis_bytes) += r.content_bytes;
        packet_bytes += r.packet_bytes;
        ++summary.packets;
        if (r.key_frame) ++summary.key_frames;
        if (r.coded) (r.stream == "color" ? color_ratio : vis_ratio).push_back(r.ratio);
        if (is_selective(method)) index_bytes.push_back(static_cast<double>(r.index_bytes));
        if (r.delivered) {
            total.push_back(r.total_ms);
            enc.push_back(r.encode_ms);
            trans.push_back(r.transport_ms);
            dec.push_back(r.decode_ms);
            app.push_back(r.apply_ms);
            inp.push_back(r.input_ms);
        }
    }
    summary.content_bytes = color_bytes + vis_bytes;
    summary.packet_overhead_bytes = packet_bytes - summary.content_bytes;
    std::uint64_t sent = 0;
    for (ClientContext& ctx : clients) sent += ctx.link->a().stats().bytes_sent;
    summary.transport_overhead_bytes = sent > packet_bytes ? sent - packet_bytes : 0;
    if (summary.duration_s > 0.0) {
        summary.color_mbps = to_mbps(static_cast<double>(color_bytes) * 8.0 / summary.duration_s);
        summary.visibility_mbps = to_mbps(static_cast<double>(vis_bytes) * 8.0 / summary.duration_s);
        summary.total_mbps = summary.color_mbps + summary.visibility_mbps;
    }
    summary.color_ratio = series_stats(color_ratio);
    summary.visibility_ratio = series_stats(vis_ratio);
    summary.index_bytes = series_stats(index_bytes);
    summary.latency_total_ms = series_stats(total);
    summary.latency_encode_ms = series_stats(enc);
    summary.latency_transport_ms = series_stats(trans);
    summary.latency_decode_ms = series_stats(dec);
    summary.latency_apply_ms = series_stats(app);
    summary.latency_input_ms = series_stats(inp);
    summary.wall_encode_ms = wall_encode;
    summary.wall_apply_ms = wall_apply;
    return summary;
}

void validate(const ExperimentConfig& cfg) {
    if (cfg.clients < 1) throw InvalidArgument("at least one client is required");
    if (!(cfg.render_rate_hz > 0.0)) throw InvalidArgument("render rate must be positive");
    if (!(cfg.step_s > 0.0)) throw InvalidArgument("network step must be positive");
    if (cfg.drain_limit_s < 0.0) throw InvalidArgument("drain limit must be non-negative");
    if (cfg.methods.empty()) throw InvalidArgument("no update method selected");
    if (cfg.server.color_rate_hz < 0.0 || cfg.server.visibility_rate_hz < 0.0) {
        throw InvalidArgument("stream rates must be non-negative");
    }
}

}  // namespace

MetricsReport run_experiment(const ExperimentConfig& config, const DeliveryObserver& observer) {
    validate(config);
    MetricsReport report;
    report.config = config;
    const Scenario scenario(config.scenario);
    FrameSource frames(scenario);
    for (std::size_t i = 0; i < config.methods.size(); ++i) {
        report.methods.push_back(run_method(config, config.methods[i], i, scenario, frames, report, observer));
    }
    return report;
}

// ---------------------------------------------------------------------------

namespace {

/// Copy the atlas into a block grid whose width and height are multiples of 4.
TexelImage arrange_for_interleave(const ProbeAtlas& atlas) {
    const int side = atlas.probe_side();
    const int per_row = (atlas.probes_per_row() + 3) / 4 * 4;
    const int rows = static_cast<int>((atlas.probe_count() + per_row - 1) / per_row + 3) / 4 * 4;
    TexelImage out(per_row * side, rows * side);
    for (ProbeId p = 0; p < atlas.probe_count(); ++p) {
        const auto block = atlas.extract_block(p);
        const int ox = static_cast<int>(p % per_row) * side;
        const int oy = static_cast<int>(p / per_row) * side;
        for (int y = 0; y < side; ++y) {
            for (int x = 0; x < side; ++x) out.at(ox + x, oy + y) = block[static_cast<std::size_t>(y) * side + x];
        }
    }
    return out;
}

}  // namespace

std::vector<LayoutResult> atlas_arrangement_experiment(const ScenarioConfig& scenario_config, std::uint64_t frames,
                                                       int gop_length) {
    ScenarioConfig sc = scenario_config;
    sc.frames = std::max<std::uint64_t>(sc.frames, frames);
    const Scenario scenario(sc);
    std::vector<LayoutResult> results;
    for (int k : {1, 2, 4}) {
        LayoutResult r;
        r.k = k;
        r.round_trip = true;
        CodecStreamState enc_color(1, CodecRole::Encoder, gop_length), dec_color(1, CodecRole::Decoder, gop_length);
        CodecStreamState enc_vis(2, CodecRole::Encoder, gop_length), dec_vis(2, CodecRole::Decoder, gop_length);
        for (std::uint64_t f = 0; f < frames; ++f) {
            const ProbeFrame frame = scenario.generate_frame(f);
            for (TextureKind kind : {TextureKind::Color, TextureKind::Visibility}) {
                const int side = probe_side(kind);
                const TexelImage arranged = arrange_for_interleave(frame.atlas(kind));
                const TexelImage interleaved = interleave_layout(arranged, side, k);
                auto& enc = kind == TextureKind::Color ? enc_color : enc_vis;
                auto& dec = kind == TextureKind::Color ? dec_color : dec_vis;
                const EncodedFrame ef = encode_frame(pack_planes(kind, interleaved), enc);
                (kind == TextureKind::Color ? r.color_bytes : r.visibility_bytes) += ef.wire_size();
                const TexelImage back = deinterleave_layout(unpack_planes(decode_frame(ef, dec)), side, k);
                if (!(back == arranged)) r.round_trip = false;
            }
        }
        results.push_back(r);
    }
    return results;
}

}  // namespace lpstream
