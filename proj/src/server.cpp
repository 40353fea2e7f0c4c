#include "lpstream/server.hpp"

#include "lpstream/error.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

namespace lpstream {

bool StreamClock::poll(double now) {
    if (rate_hz_ <= 0.0 || now < 0.0) return false;
    // Small slack so that ideal tick times computed as k / rate are not missed by rounding.
    const double ticks = std::floor(now * rate_hz_ + 1e-9);
    if (ticks < static_cast<double>(next_tick_)) return false;
    next_tick_ = static_cast<std::uint64_t>(ticks) + 1;
    return true;
}

namespace {

/// Slots fill whole rows of the update texture, so the client can size its
/// allocator mirror from the decoded texture alone.
UpdateAtlasLayout make_layout(TextureKind kind, const ProbeVolume& volume, const ServerConfig& config) {
    const std::size_t n = config.slot_count ? config.slot_count : std::max<std::size_t>(volume.active_count(), 1);
    const UpdateAtlasLayout natural(n, core_side(kind));
    const auto per_row = static_cast<std::size_t>(natural.slots_per_row());
    return UpdateAtlasLayout((n + per_row - 1) / per_row * per_row, core_side(kind), natural.slots_per_row());
}

}  // namespace

ClientSession::Stream::Stream(TextureKind k, std::uint32_t client_id, const ProbeVolume& volume,
                              const ServerConfig& config)
    : kind(k),
      mirror(k, volume.probe_count()),
      last_sent_frame(volume.probe_count(), 0),
      layout(make_layout(k, volume, config)),
      update_texture(make_update_texture(layout)),
      codec(codec_stream_id(client_id, k), CodecRole::Encoder, config.gop_length),
      clock(k == TextureKind::Color ? config.color_rate_hz : config.visibility_rate_hz) {
    if (layout.slots_per_row() > 0xFFFF) throw InvalidArgument("update atlas too wide");
}

ClientSession::ClientSession(std::uint32_t id, const ProbeVolume& volume, const ServerConfig& config)
    : id_(id),
      streams_{Stream(TextureKind::Color, id, volume, config), Stream(TextureKind::Visibility, id, volume, config)} {}

void ClientSession::reset() {
    ++epoch_;
    for (Stream& s : streams_) {
        std::fill(s.mirror.image().texels.begin(), s.mirror.image().texels.end(), Texel{0});
        std::fill(s.last_sent_frame.begin(), s.last_sent_frame.end(), 0);
        s.layout.clear();
        std::fill(s.update_texture.texels.begin(), s.update_texture.texels.end(), Texel{0});
        s.codec.reset();
        s.codec.frame_counter = 0;
        s.next_seq = 1;
    }
}

std::vector<TextureKind> schedule_due(ClientSession& session, double now) {
    std::vector<TextureKind> due;
    for (TextureKind k : {TextureKind::Color, TextureKind::Visibility}) {
        if (session.stream(k).clock.poll(now)) due.push_back(k);
    }
    return due;
}

namespace {

std::vector<ProbeId> choose_probes(ClientSession& session, ClientSession::Stream& s, const ProbeAtlas& rendered,
                                   const ProbeFrame& frame, const ProbeVolume& volume, const ServerConfig& config,
                                   OutgoingUpdate& out) {
    const ProbeSet changed = detect_changed(rendered, s.mirror, volume, config.selection.change_threshold);
    out.changed = changed.size();
    ProbeSet pool = changed;
    if (config.use_pvs && !changed.empty()) {
        pool = set_intersection(changed, pvs_probes(session.pose(), frame.scene, volume, config.selection));
    }
    out.candidates = pool.size();
    std::vector<std::uint64_t> staleness(volume.probe_count());
    for (ProbeId p = 0; p < staleness.size(); ++p) {
        staleness[p] = frame.index >= s.last_sent_frame[p] ? frame.index - s.last_sent_frame[p] : 0;
    }
    return select_for_client(pool, pool, volume, staleness, config.budget);
}

void stamp(ClientSession::Stream& s, std::span<const ProbeId> probes, std::uint64_t frame_index) {
    for (ProbeId p : probes) s.last_sent_frame[p] = frame_index;
}

}  // namespace

std::optional<OutgoingUpdate> build_update(ClientSession& session, TextureKind kind, const ProbeFrame& frame,
                                           const ProbeVolume& volume, const ServerConfig& config) {
    ClientSession::Stream& s = session.stream(kind);
    const ProbeAtlas& rendered = frame.atlas(kind);
    if (rendered.probe_count() != volume.probe_count() || rendered.probes_per_row() != s.mirror.probes_per_row()) {
        throw InvalidArgument("rendered atlas does not match the probe volume");
    }

    OutgoingUpdate out;
    out.client_id = session.id();
    out.frame_index = frame.index;
    UpdatePacket& pkt = out.packet;
    pkt.client_id = session.id();
    pkt.epoch = session.epoch();
    pkt.stream = kind;
    pkt.method = config.method;

    switch (config.method) {
        case UpdateMethod::Uncompressed: {
            pkt.frame = texels_to_bytes(rendered.probe_payload());
            out.raw_bits = pkt.frame.size() * 8;
            out.changed = out.candidates =
                detect_changed(rendered, s.mirror, volume, config.selection.change_threshold).size();
            s.mirror = rendered;
            out.selected = volume.active_count();
            std::vector<ProbeId> all;
            for (ProbeId p = 0; p < volume.probe_count(); ++p) all.push_back(p);
            stamp(s, all, frame.index);
            break;
        }
        case UpdateMethod::Encoded: {
            const EncodedFrame ef = encode_frame(pack_planes(kind, rendered.image()), s.codec);
            out.key_frame = ef.header.key;
            out.raw_bits = rendered.image().texels.size() * 32;
            pkt.frame = ef.serialize();
            out.changed = out.candidates =
                detect_changed(rendered, s.mirror, volume, config.selection.change_threshold).size();
            s.mirror = rendered;
            out.selected = volume.active_count();
            std::vector<ProbeId> all;
            for (ProbeId p = 0; p < volume.probe_count(); ++p) all.push_back(p);
            stamp(s, all, frame.index);
            break;
        }
        case UpdateMethod::Culling: {
            const auto selected = choose_probes(session, s, rendered, frame, volume, config, out);
            if (selected.empty()) {
                s.last_selection = {s.last_selection.builds + 1, frame.index, out.changed, out.candidates, 0};
                return std::nullopt;
            }
            for (ProbeId p : selected) s.mirror.insert_block(p, rendered.extract_block(p));
            const EncodedFrame ef = encode_frame(pack_planes(kind, s.mirror.image()), s.codec);
            out.key_frame = ef.header.key;
            out.raw_bits = s.mirror.image().texels.size() * 32;
            pkt.frame = ef.serialize();
            out.selected = selected.size();
            stamp(s, selected, frame.index);
            break;
        }
        case UpdateMethod::PackingNoCache:
        case UpdateMethod::PackingCaching: {
            const auto selected = choose_probes(session, s, rendered, frame, volume, config, out);
            s.last_selection = {s.last_selection.builds + 1, frame.index, out.changed, out.candidates, selected.size()};
            if (selected.empty()) return std::nullopt;
            if (config.method == UpdateMethod::PackingNoCache) {
                s.layout.clear();
                std::fill(s.update_texture.texels.begin(), s.update_texture.texels.end(), Texel{0});
            }
            const auto entries = build_update_atlas(selected, s.layout, rendered, s.update_texture);
            pkt.index = encode_index_buffer(entries, config.method == UpdateMethod::PackingCaching ? IndexSlots::Allocator
                                                                                             : IndexSlots::Explicit);
            pkt.slots_per_row = static_cast<std::uint16_t>(s.layout.slots_per_row());
            const EncodedFrame ef = encode_frame(pack_planes(kind, s.update_texture), s.codec);
            out.key_frame = ef.header.key;
            out.raw_bits = s.update_texture.texels.size() * 32;
            pkt.frame = ef.serialize();
            // Commit exactly what the client will reconstruct.
            const int side = rendered.probe_side();
            for (const IndexEntry& e : entries) {
                const auto core = strip_guard_band(rendered.extract_block(e.probe), side);
                s.mirror.insert_block(e.probe, reconstruct_guard_band(core, side - 2));
            }
            out.selected = selected.size();
            stamp(s, selected, frame.index);
            break;
        }
    }

    out.coded = config.method != UpdateMethod::Uncompressed;
    if (!is_selective(config.method)) {
        s.last_selection = {s.last_selection.builds + 1, frame.index, out.changed, out.candidates, out.selected};
    }
    pkt.update_seq = s.next_seq++;
    ++s.stats.packets;
    s.stats.content_bytes += pkt.content_bytes();
    s.stats.wire_bytes += pkt.wire_size();
    s.stats.probes_sent += out.selected;
    if (out.key_frame) ++s.stats.key_frames;
    return out;
}

Server::Server(ProbeVolume volume, ServerConfig config) : volume_(std::move(volume)), config_(config) {
    if (config_.color_rate_hz < 0.0 || config_.visibility_rate_hz < 0.0) throw InvalidArgument("negative stream rate");
    if (config_.workers < 1) throw InvalidArgument("worker count must be >= 1");
    if (config_.slot_count && config_.slot_count < std::min(config_.budget, volume_.active_count())) {
        throw InvalidArgument("slot count smaller than the largest possible selection");
    }
}

ClientSession& Server::add_client(std::uint32_t id) {
    if (sessions_.count(id)) throw InvalidArgument("client id already connected");
    auto& slot = sessions_[id];
    slot = std::make_unique<ClientSession>(id, volume_, config_);
    return *slot;
}

ClientSession& Server::session(std::uint32_t id) {
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw InvalidArgument("unknown client id");
    return *it->second;
}

const ClientSession& Server::session(std::uint32_t id) const {
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw InvalidArgument("unknown client id");
    return *it->second;
}

void Server::remove_client(std::uint32_t id) { sessions_.erase(id); }

std::vector<std::uint32_t> Server::client_ids() const {
    std::vector<std::uint32_t> ids;
    for (const auto& [id, _] : sessions_) ids.push_back(id);
    return ids;
}

std::vector<OutgoingUpdate> Server::on_tick(double now, const ProbeFrame& frame) {
    std::vector<ClientSession*> order;
    for (auto& [_, s] : sessions_) order.push_back(s.get());
    std::vector<std::vector<OutgoingUpdate>> per_session(order.size());

    const auto process = [&](std::size_t i) {
        for (TextureKind k : schedule_due(*order[i], now)) {
            if (auto u = build_update(*order[i], k, frame, volume_, config_)) per_session[i].push_back(std::move(*u));
        }
    };

    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(config_.workers), order.size());
    if (workers <= 1) {
        for (std::size_t i = 0; i < order.size(); ++i) process(i);
    } else {
        std::vector<std::exception_ptr> errors(workers);
        std::vector<std::thread> threads;
        for (std::size_t w = 0; w < workers; ++w) {
            threads.emplace_back([&, w] {
                try {
                    for (std::size_t i = w; i < order.size(); i += workers) process(i);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : threads) t.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }

    std::vector<OutgoingUpdate> out;
    for (auto& v : per_session) {
        for (auto& u : v) out.push_back(std::move(u));
    }
    return out;
}

}  // namespace lpstream
