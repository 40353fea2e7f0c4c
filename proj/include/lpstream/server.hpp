#pragma once

// Per-client selective probe streaming: session mirrors, stream scheduling,
// selection, update-atlas construction and encoding.

#include "lpstream/codec.hpp"
#include "lpstream/packing.hpp"
#include "lpstream/probe_model.hpp"
#include "lpstream/scene.hpp"
#include "lpstream/selection.hpp"
#include "lpstream/update_packet.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <vector>

namespace lpstream {

/// One server-rendered frame of probe textures plus the scene it was rendered from.
struct ProbeFrame {
    std::uint64_t index = 0;
    ProbeAtlas color;
    ProbeAtlas visibility;
    SceneGeometry scene;

    const ProbeAtlas& atlas(TextureKind kind) const { return kind == TextureKind::Color ? color : visibility; }
};

struct ServerConfig {
    UpdateMethod method = UpdateMethod::PackingCaching;
    double color_rate_hz = 30.0;
    double visibility_rate_hz = 10.0;
    std::size_t budget = kUnlimitedBudget;
    int gop_length = kDefaultGopLength;
    /// Cull by the client's potentially visible set; otherwise every changed probe is a candidate.
    bool use_pvs = true;
    SelectionParams selection;
    /// Update-atlas slots per stream; 0 means one per active probe.
    std::size_t slot_count = 0;
    /// Worker threads used to process sessions in parallel; 1 processes inline.
    int workers = 1;
};

/// Fixed-rate tick source. Ticks fall at k / rate seconds (k = 0, 1, ...);
/// a poll is due when a tick not yet emitted lies at or before `now`. Ticks
/// missed between polls collapse into one.
class StreamClock {
public:
    explicit StreamClock(double rate_hz = 0.0) : rate_hz_(rate_hz) {}
    bool poll(double now);
    double rate_hz() const { return rate_hz_; }
    void reset() { next_tick_ = 0; }

private:
    double rate_hz_;
    std::uint64_t next_tick_ = 0;
};

struct StreamStats {
    std::uint64_t packets = 0;
    std::uint64_t content_bytes = 0;
    std::uint64_t wire_bytes = 0;
    std::uint64_t probes_sent = 0;
    std::uint64_t key_frames = 0;
};

/// Counts from the most recent selection of a stream, kept even when nothing was sent.
struct SelectionRecord {
    std::uint64_t builds = 0;
    std::uint64_t frame_index = 0;
    std::size_t changed = 0;
    std::size_t candidates = 0;
    std::size_t selected = 0;
};

/// Server-side mirror of one client.
class ClientSession {
public:
    struct Stream {
        TextureKind kind;
        /// The client's textures as of the last commit. With commit-at-send this is
        /// also the last-transmitted state used for change detection.
        ProbeAtlas mirror;
        std::vector<std::uint64_t> last_sent_frame;
        UpdateAtlasLayout layout;
        TexelImage update_texture;
        CodecStreamState codec;
        StreamClock clock;
        std::uint32_t next_seq = 1;
        StreamStats stats;
        SelectionRecord last_selection;

        Stream(TextureKind k, std::uint32_t client_id, const ProbeVolume& volume, const ServerConfig& config);
    };

    ClientSession(std::uint32_t id, const ProbeVolume& volume, const ServerConfig& config);

    std::uint32_t id() const { return id_; }
    std::uint32_t epoch() const { return epoch_; }
    const CameraPose& pose() const { return pose_; }
    void set_pose(const CameraPose& pose) { pose_ = pose; }

    Stream& stream(TextureKind kind) { return streams_[static_cast<int>(kind)]; }
    const Stream& stream(TextureKind kind) const { return streams_[static_cast<int>(kind)]; }
    const ProbeAtlas& permanent(TextureKind kind) const { return stream(kind).mirror; }
    const ProbeAtlas& last_transmitted(TextureKind kind) const { return stream(kind).mirror; }

    /// Client reconnected: forget everything it held. The next update of each
    /// stream is a key frame carrying every active visible probe.
    void reset();

private:
    std::uint32_t id_;
    std::uint32_t epoch_ = 0;
    CameraPose pose_;
    std::array<Stream, 2> streams_;
};

/// Streams that are due at `now`, color first.
std::vector<TextureKind> schedule_due(ClientSession& session, double now);

struct OutgoingUpdate {
    std::uint32_t client_id = 0;
    UpdatePacket packet;
    std::uint64_t frame_index = 0;
    std::size_t selected = 0;    ///< probes carried
    std::size_t changed = 0;     ///< active probes differing from the client mirror
    std::size_t candidates = 0;  ///< changed and visible (when culling) before the budget
    bool key_frame = false;
    bool coded = false;          ///< payload went through the frame codec
    std::uint64_t raw_bits = 0;  ///< uncompressed size of the texture that was sent
};

/// Build, and commit to the session mirror, the update for one stream. Returns
/// nothing when a selective method has no probe to send.
std::optional<OutgoingUpdate> build_update(ClientSession& session, TextureKind kind, const ProbeFrame& frame,
                                           const ProbeVolume& volume, const ServerConfig& config);

class Server {
public:
    Server(ProbeVolume volume, ServerConfig config);

    const ProbeVolume& volume() const { return volume_; }
    const ServerConfig& config() const { return config_; }

    ClientSession& add_client(std::uint32_t id);
    ClientSession& session(std::uint32_t id);
    const ClientSession& session(std::uint32_t id) const;
    bool has_client(std::uint32_t id) const { return sessions_.count(id) != 0; }
    void remove_client(std::uint32_t id);
    std::vector<std::uint32_t> client_ids() const;

    /// Runs selection, encoding and commit for every due stream of every session.
    std::vector<OutgoingUpdate> on_tick(double now, const ProbeFrame& frame);

private:
    ProbeVolume volume_;
    ServerConfig config_;
    std::map<std::uint32_t, std::unique_ptr<ClientSession>> sessions_;
};

}  // namespace lpstream
