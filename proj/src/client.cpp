#include "lpstream/client.hpp"

#include "lpstream/error.hpp"
#include "lpstream/half.hpp"
#include "lpstream/packing.hpp"

#include <algorithm>
#include <cmath>

namespace lpstream {

ClientStream::ClientStream(TextureKind k, std::uint32_t client_id, std::size_t probe_count)
    : kind(k), textures(k, probe_count), codec(codec_stream_id(client_id, k), CodecRole::Decoder) {}

void ClientStream::reset(std::uint32_t new_epoch) {
    std::fill(textures.image().texels.begin(), textures.image().texels.end(), Texel{0});
    codec.reset();
    codec.frame_counter = 0;
    layout.reset();
    epoch = new_epoch;
    applied_seq = 0;
    needs_resync = false;
}

ClientState::ClientState(std::uint32_t id, ProbeVolume vol)
    : client_id(id),
      volume(std::move(vol)),
      streams{ClientStream(TextureKind::Color, id, volume.probe_count()),
              ClientStream(TextureKind::Visibility, id, volume.probe_count())} {}

std::vector<ProbeId> apply_update(const UpdatePacket& packet, ClientStream& stream, std::uint32_t client_id,
                                  const ProbeVolume& volume) {
    if (packet.client_id != client_id) throw ProtocolError("update addressed to another client");
    if (packet.stream != stream.kind) throw ProtocolError("update for the other stream");
    const bool new_epoch = packet.epoch > stream.epoch && packet.update_seq == 1;
    if (!new_epoch) {
        if (stream.needs_resync) throw ProtocolError("stream awaiting resync");
        if (packet.epoch != stream.epoch) throw ProtocolError("update from a stale epoch");
        if (packet.update_seq != stream.applied_seq + 1) throw ProtocolError("update out of sequence");
    }

    // Work on copies of the small stateful pieces; commit only after everything validated.
    CodecStreamState codec = new_epoch ? CodecStreamState(stream.codec.stream_id, CodecRole::Decoder) : stream.codec;
    std::optional<UpdateAtlasLayout> layout = new_epoch ? std::nullopt : stream.layout;
    const ProbeAtlas& atlas = stream.textures;
    std::vector<ProbeId> written;

    const auto commit = [&](auto&& write) {
        if (new_epoch) stream.reset(packet.epoch);
        write();
        stream.codec = std::move(codec);
        stream.layout = std::move(layout);
        stream.applied_seq = packet.update_seq;
    };

    switch (packet.method) {
        case UpdateMethod::Uncompressed: {
            if (!packet.index.empty()) throw DecodeError("uncompressed update carries an index buffer");
            const auto payload = bytes_to_texels(packet.frame);
            const std::size_t expected =
                atlas.probe_count() * static_cast<std::size_t>(atlas.probe_side()) * atlas.probe_side();
            if (payload.size() != expected) throw DecodeError("uncompressed payload size mismatch");
            commit([&] { stream.textures.load_probe_payload(payload); });
            for (ProbeId p = 0; p < volume.probe_count(); ++p) written.push_back(p);
            break;
        }
        case UpdateMethod::Encoded:
        case UpdateMethod::Culling: {
            if (!packet.index.empty()) throw DecodeError("full-atlas update carries an index buffer");
            const EncodedFrame frame = EncodedFrame::parse(packet.frame);
            TexelImage image = unpack_planes(decode_frame(frame, codec));
            if (image.width != atlas.image().width || image.height != atlas.image().height) {
                throw DecodeError("decoded atlas has the wrong dimensions");
            }
            commit([&] { stream.textures.image() = std::move(image); });
            for (ProbeId p = 0; p < volume.probe_count(); ++p) written.push_back(p);
            break;
        }
        case UpdateMethod::PackingNoCache:
        case UpdateMethod::PackingCaching: {
            const EncodedFrame frame = EncodedFrame::parse(packet.frame);
            const TexelImage update = unpack_planes(decode_frame(frame, codec));
            const int core = atlas.core_side();
            if (packet.method == UpdateMethod::PackingCaching && !layout) {
                if (packet.slots_per_row == 0 || update.width != packet.slots_per_row * core || update.height % core != 0 ||
                    update.height == 0) {
                    throw DecodeError("update texture does not form a slot grid");
                }
                const auto rows = static_cast<std::size_t>(update.height / core);
                layout.emplace(rows * packet.slots_per_row, core, packet.slots_per_row);
            }
            const auto entries =
                decode_index_buffer(packet.index, packet.method == UpdateMethod::PackingCaching ? &*layout : nullptr);
            for (const IndexEntry& e : entries) {
                if (e.probe >= volume.probe_count()) throw DecodeError("index buffer names an unknown probe");
            }
            if (packet.slots_per_row == 0 && !entries.empty()) throw DecodeError("update atlas has zero slots per row");
            std::vector<std::vector<Texel>> blocks;
            blocks.reserve(entries.size());
            for (const IndexEntry& e : entries) {
                const auto slot_core = read_slot_core(update, core, packet.slots_per_row, e.slot);
                blocks.push_back(reconstruct_guard_band(slot_core, core));
            }
            commit([&] {
                for (std::size_t i = 0; i < entries.size(); ++i) stream.textures.insert_block(entries[i].probe, blocks[i]);
            });
            for (const IndexEntry& e : entries) written.push_back(e.probe);
            break;
        }
    }
    return written;
}

std::vector<ProbeId> apply_update(const UpdatePacket& packet, ClientState& state) {
    return apply_update(packet, state.stream(packet.stream), state.client_id, state.volume);
}

// ---------------------------------------------------------------------------

namespace {

double chebyshev_weight(const ProbeAtlas& visibility, ProbeId probe, const Vec3& to_point) {
    const double d = length(to_point);
    if (d < 1e-12) return 1.0;
    const int core = visibility.core_side();
    const auto [tx, ty] = direction_to_texel(to_point / d, core);
    const auto [ox, oy] = visibility.block_origin(probe);
    const Texel t = visibility.image().at(ox + 1 + tx, oy + 1 + ty);
    const double mean = half_to_float(texel_lo16(t));
    const double mean_sq = half_to_float(texel_hi16(t));
    if (!std::isfinite(mean) || !std::isfinite(mean_sq)) return kShadeWeightFloor;
    if (d <= mean) return 1.0;
    const double variance = std::max(0.0, mean_sq - mean * mean);
    const double excess = d - mean;
    return std::max(kShadeWeightFloor, variance / (variance + excess * excess));
}

}  // namespace

std::vector<ShadeWeight> shade_weights(const Vec3& point, const ProbeAtlas& visibility, const ProbeVolume& volume) {
    if (visibility.kind() != TextureKind::Visibility || visibility.probe_count() != volume.probe_count()) {
        throw InvalidArgument("visibility atlas does not match the volume");
    }
    const CellCage cage = cell_cage(point, volume);
    std::vector<ShadeWeight> weights;
    double total = 0.0;
    for (int c = 0; c < 8; ++c) {
        const ProbeId p = cage.corners[c];
        if (!volume.is_active(p)) continue;
        const double tx = (c & 1) ? cage.fraction.x : 1.0 - cage.fraction.x;
        const double ty = (c & 2) ? cage.fraction.y : 1.0 - cage.fraction.y;
        const double tz = (c & 4) ? cage.fraction.z : 1.0 - cage.fraction.z;
        const double trilinear = tx * ty * tz;
        if (trilinear <= 0.0) continue;
        const double w = trilinear * chebyshev_weight(visibility, p, point - volume.probe_position(p));
        const auto it = std::find_if(weights.begin(), weights.end(), [&](const ShadeWeight& s) { return s.probe == p; });
        if (it != weights.end()) {
            it->weight += w;
        } else {
            weights.push_back({p, w});
        }
        total += w;
    }
    if (total > 0.0) {
        for (ShadeWeight& s : weights) s.weight /= total;
    }
    return weights;
}

Vec3 shade_sample(const Vec3& point, const Vec3& normal, const ProbeAtlas& color, const ProbeAtlas& visibility,
                  const ProbeVolume& volume) {
    const double n_len = length(normal);
    if (!(n_len > 1e-12) || !std::isfinite(n_len)) throw InvalidArgument("degenerate shading normal");
    if (color.kind() != TextureKind::Color || color.probe_count() != volume.probe_count()) {
        throw InvalidArgument("color atlas does not match the volume");
    }
    const auto [tx, ty] = direction_to_texel(normal / n_len, color.core_side());
    Vec3 sum;
    for (const ShadeWeight& w : shade_weights(point, visibility, volume)) {
        const auto [ox, oy] = color.block_origin(w.probe);
        const Texel t = color.image().at(ox + 1 + tx, oy + 1 + ty);
        sum = sum + Vec3{texel_r(t) / 1023.0, texel_g(t) / 1023.0, texel_b(t) / 1023.0} * w.weight;
    }
    return sum;
}

Vec3 shade_sample(const Vec3& point, const Vec3& normal, const ClientState& state) {
    return shade_sample(point, normal, state.textures(TextureKind::Color), state.textures(TextureKind::Visibility),
                        state.volume);
}

// ---------------------------------------------------------------------------

DecodePipeline::DecodePipeline(ClientState initial, std::size_t queue_bound)
    : state_(std::move(initial)), bound_(queue_bound) {
    if (bound_ == 0) throw InvalidArgument("queue bound must be >= 1");
    auto v = std::make_shared<TextureVersion>();
    v->color = std::make_shared<const ProbeAtlas>(state_.textures(TextureKind::Color));
    v->visibility = std::make_shared<const ProbeAtlas>(state_.textures(TextureKind::Visibility));
    v->applied_seq = {state_.streams[0].applied_seq, state_.streams[1].applied_seq};
    current_ = std::move(v);
    for (int i = 0; i < 2; ++i) lanes_[i].worker = std::thread([this, i] { run(i); });
}

DecodePipeline::~DecodePipeline() { stop(); }

void DecodePipeline::stop() {
    for (Lane& lane : lanes_) {
        std::lock_guard lock(lane.mutex);
        stopping_ = true;
        lane.changed.notify_all();
    }
    for (Lane& lane : lanes_) {
        if (lane.worker.joinable()) lane.worker.join();
    }
}

void DecodePipeline::submit(UpdatePacket packet) {
    Lane& lane = lanes_[static_cast<int>(packet.stream)];
    std::unique_lock lock(lane.mutex);
    lane.changed.wait(lock, [&] { return stopping_ || lane.queue.size() < bound_; });
    if (stopping_) throw ConnectionClosed("decode pipeline stopped");
    lane.queue.push_back(std::move(packet));
    lane.max_depth = std::max(lane.max_depth, lane.queue.size());
    lane.changed.notify_all();
}

bool DecodePipeline::try_submit(UpdatePacket packet) {
    Lane& lane = lanes_[static_cast<int>(packet.stream)];
    std::lock_guard lock(lane.mutex);
    if (stopping_) throw ConnectionClosed("decode pipeline stopped");
    if (lane.queue.size() >= bound_) return false;
    lane.queue.push_back(std::move(packet));
    lane.max_depth = std::max(lane.max_depth, lane.queue.size());
    lane.changed.notify_all();
    return true;
}

std::shared_ptr<const TextureVersion> DecodePipeline::snapshot() const {
    std::lock_guard lock(publish_mutex_);
    return current_;
}

void DecodePipeline::flush() {
    for (Lane& lane : lanes_) {
        std::unique_lock lock(lane.mutex);
        lane.changed.wait(lock, [&] { return stopping_ || (lane.queue.empty() && !lane.busy); });
    }
}

void DecodePipeline::set_error_handler(ErrorHandler handler) {
    std::lock_guard lock(hooks_mutex_);
    on_error_ = std::move(handler);
}

std::uint64_t DecodePipeline::rejected() const {
    std::lock_guard lock(hooks_mutex_);
    return rejected_;
}

std::size_t DecodePipeline::max_queue_depth() const {
    std::size_t depth = 0;
    for (const Lane& lane : lanes_) {
        std::lock_guard lock(const_cast<std::mutex&>(lane.mutex));
        depth = std::max(depth, lane.max_depth);
    }
    return depth;
}

void DecodePipeline::set_decode_delay(std::function<void()> delay) {
    std::lock_guard lock(hooks_mutex_);
    delay_ = std::move(delay);
}

void DecodePipeline::publish(TextureKind kind, std::shared_ptr<const ProbeAtlas> atlas, std::uint32_t seq) {
    std::lock_guard lock(publish_mutex_);
    auto next = std::make_shared<TextureVersion>(*current_);
    if (kind == TextureKind::Color) {
        next->color = std::move(atlas);
    } else {
        next->visibility = std::move(atlas);
    }
    next->applied_seq[static_cast<int>(kind)] = seq;
    ++next->version;
    current_ = std::move(next);
}

void DecodePipeline::run(int index) {
    Lane& lane = lanes_[index];
    ClientStream& stream = state_.streams[index];
    for (;;) {
        UpdatePacket packet;
        {
            std::unique_lock lock(lane.mutex);
            lane.changed.wait(lock, [&] { return stopping_ || !lane.queue.empty(); });
            if (stopping_) return;
            packet = std::move(lane.queue.front());
            lane.queue.pop_front();
            lane.busy = true;
            lane.changed.notify_all();
        }
        std::function<void()> delay;
        {
            std::lock_guard lock(hooks_mutex_);
            delay = delay_;
        }
        if (delay) delay();
        try {
            apply_update(packet, stream, state_.client_id, state_.volume);
            publish(stream.kind, std::make_shared<const ProbeAtlas>(stream.textures), stream.applied_seq);
        } catch (const Error& e) {
            stream.needs_resync = true;
            ErrorHandler handler;
            {
                std::lock_guard lock(hooks_mutex_);
                ++rejected_;
                handler = on_error_;
            }
            if (handler) handler(stream.kind, e);
        }
        {
            std::lock_guard lock(lane.mutex);
            lane.busy = false;
            lane.changed.notify_all();
        }
    }
}

}  // namespace lpstream
