#pragma once

// Thin-client side: apply update packets to the permanent probe textures,
// evaluate shading from them, and run decoding off the render thread.

#include "lpstream/codec.hpp"
#include "lpstream/probe_model.hpp"
#include "lpstream/selection.hpp"
#include "lpstream/update_packet.hpp"

#include <array>
#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace lpstream {

/// One texture stream held by the client.
struct ClientStream {
    TextureKind kind;
    ProbeAtlas textures;
    CodecStreamState codec;
    /// Mirror of the server's slot allocator, created by the first cached update of an epoch.
    std::optional<UpdateAtlasLayout> layout;
    std::uint32_t epoch = 0;
    std::uint32_t applied_seq = 0;
    /// Set after a rejected packet; only a newer epoch starting at seq 1 clears it.
    bool needs_resync = false;

    ClientStream(TextureKind k, std::uint32_t client_id, std::size_t probe_count);
    /// Back to the state of a freshly connected client.
    void reset(std::uint32_t new_epoch);
};

struct ClientState {
    std::uint32_t client_id;
    ProbeVolume volume;
    std::array<ClientStream, 2> streams;
    CameraPose pose;

    ClientState(std::uint32_t id, ProbeVolume vol);

    ClientStream& stream(TextureKind kind) { return streams[static_cast<int>(kind)]; }
    const ClientStream& stream(TextureKind kind) const { return streams[static_cast<int>(kind)]; }
    const ProbeAtlas& textures(TextureKind kind) const { return stream(kind).textures; }
};

/// Apply one update to its stream. Either the whole packet applies or the
/// stream is left untouched and an exception is thrown: ProtocolError for
/// wrong client/seq/epoch, DecodeError (or ChecksumError) for malformed data.
/// A packet from a newer epoch with seq 1 resets the stream first.
/// Returns the probes written (all probes for full-atlas methods).
std::vector<ProbeId> apply_update(const UpdatePacket& packet, ClientStream& stream, std::uint32_t client_id,
                                  const ProbeVolume& volume);
std::vector<ProbeId> apply_update(const UpdatePacket& packet, ClientState& state);

inline constexpr double kShadeWeightFloor = 1e-4;

struct ShadeWeight {
    ProbeId probe = 0;
    double weight = 0.0;  ///< normalized
};

/// Normalized blend weights of the active cage probes around `point`:
/// trilinear weight times the Chebyshev visibility weight.
std::vector<ShadeWeight> shade_weights(const Vec3& point, const ProbeAtlas& visibility, const ProbeVolume& volume);

/// Irradiance at a surface point: blend of each cage probe's color in the
/// direction of the normal, in [0,1] per channel. Throws on a zero normal.
Vec3 shade_sample(const Vec3& point, const Vec3& normal, const ProbeAtlas& color, const ProbeAtlas& visibility,
                  const ProbeVolume& volume);
Vec3 shade_sample(const Vec3& point, const Vec3& normal, const ClientState& state);

/// Immutable snapshot of both client textures.
struct TextureVersion {
    std::shared_ptr<const ProbeAtlas> color;
    std::shared_ptr<const ProbeAtlas> visibility;
    std::array<std::uint32_t, 2> applied_seq{};
    std::uint64_t version = 0;

    const ProbeAtlas& textures(TextureKind kind) const { return kind == TextureKind::Color ? *color : *visibility; }
};

/// Receive -> decode -> apply on one worker per stream. Readers take
/// snapshots that never change underneath them.
class DecodePipeline {
public:
    using ErrorHandler = std::function<void(TextureKind, const std::exception&)>;

    DecodePipeline(ClientState initial, std::size_t queue_bound = 8);
    ~DecodePipeline();
    DecodePipeline(const DecodePipeline&) = delete;
    DecodePipeline& operator=(const DecodePipeline&) = delete;

    /// Blocks while the stream's queue is full.
    void submit(UpdatePacket packet);
    /// Returns false instead of blocking when the queue is full.
    bool try_submit(UpdatePacket packet);

    std::shared_ptr<const TextureVersion> snapshot() const;
    /// Wait until every submitted packet has been applied or rejected.
    void flush();
    void stop();

    /// Called on the worker thread when a packet is rejected. The stream then
    /// rejects everything until a newer epoch starts at seq 1.
    void set_error_handler(ErrorHandler handler);
    std::uint64_t rejected() const;
    std::size_t max_queue_depth() const;
    /// Test hook: extra work per packet on the worker.
    void set_decode_delay(std::function<void()> delay);

private:
    struct Lane {
        std::mutex mutex;
        std::condition_variable changed;
        std::deque<UpdatePacket> queue;
        bool busy = false;
        std::size_t max_depth = 0;
        std::thread worker;
    };

    void run(int lane);
    void publish(TextureKind kind, std::shared_ptr<const ProbeAtlas> atlas, std::uint32_t seq);

    ClientState state_;
    std::size_t bound_;
    std::array<Lane, 2> lanes_;
    std::atomic<bool> stopping_{false};

    mutable std::mutex publish_mutex_;
    std::shared_ptr<const TextureVersion> current_;

    mutable std::mutex hooks_mutex_;
    ErrorHandler on_error_;
    std::function<void()> delay_;
    std::uint64_t rejected_ = 0;
};

}  // namespace lpstream
