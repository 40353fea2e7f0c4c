#pragma once

// Reliable, ordered, channelized messages over a simulated lossy datagram network.
//
// Datagram header, little-endian (20 bytes, 24 with FRAG):
//   u32 connection id | u8 channel | u32 seq | u32 ack | u32 ack bits | u8 flags |
//   [u16 fragment index | u16 fragment count] | u16 payload length
// `ack` is cumulative: every message with seq <= ack was received. Bit i of
// `ack bits` reports message ack + 2 + i (ack + 1 is by definition missing).
// Data datagrams have seq >= 1; seq 0 marks a pure acknowledgement.

#include "lpstream/bytes.hpp"

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace lpstream {

enum class Channel : std::uint8_t { Control = 0, Color = 1, Visibility = 2, Input = 3 };
inline constexpr int kChannelCount = 4;

inline constexpr std::uint8_t kFlagSyn = 0x01;
inline constexpr std::uint8_t kFlagFin = 0x02;
inline constexpr std::uint8_t kFlagFrag = 0x04;
inline constexpr std::uint8_t kFlagAck = 0x08;

inline constexpr int kDefaultMtu = 1200;

struct DatagramHeader {
    std::uint32_t connection = 0;
    std::uint8_t channel = 0;
    std::uint32_t seq = 0;
    std::uint32_t ack = 0;
    std::uint32_t ack_bits = 0;
    std::uint8_t flags = 0;
    std::uint16_t fragment_index = 0;
    std::uint16_t fragment_count = 0;
    std::uint16_t payload_length = 0;

    static constexpr std::size_t kBaseBytes = 20;
    static constexpr std::size_t kFragBytes = 24;

    std::size_t size() const { return (flags & kFlagFrag) ? kFragBytes : kBaseBytes; }
    bool operator==(const DatagramHeader&) const = default;
};

Bytes encode_datagram(const DatagramHeader& header, std::span<const std::uint8_t> payload);
/// Throws DecodeError when the header is truncated or the length disagrees.
std::pair<DatagramHeader, Bytes> decode_datagram(std::span<const std::uint8_t> bytes);

/// Fragments needed for a message of `bytes` bytes at the given MTU.
std::size_t fragment_count(std::size_t bytes, int mtu = kDefaultMtu);

// ---------------------------------------------------------------------------

struct NetworkConfig {
    double latency_ms = 0.0;
    double jitter_ms = 0.0;       ///< uniform extra delay in [0, jitter)
    double loss = 0.0;            ///< per-datagram drop probability
    double bandwidth_bps = 0.0;   ///< 0 means unlimited
    int mtu = kDefaultMtu;
    std::uint64_t seed = 1;
};

/// JSON object with keys latency_ms, jitter_ms, loss, bandwidth_bps, mtu, seed (all optional).
NetworkConfig parse_network_config(const std::string& json_text);
std::string network_config_to_json(const NetworkConfig& config);

struct Datagram {
    std::uint32_t from = 0;
    std::uint32_t to = 0;
    Bytes bytes;
    double sent_at = 0.0;
    double deliver_at = 0.0;
};

struct NetworkStats {
    std::uint64_t sent = 0;
    std::uint64_t dropped = 0;
    std::uint64_t delivered = 0;
    std::uint64_t bytes_delivered = 0;
};

/// One-way datagram network. Time is in seconds and advances only through step().
class NetworkModel {
public:
    explicit NetworkModel(NetworkConfig config = {});

    const NetworkConfig& config() const { return config_; }
    double now() const { return now_; }
    const NetworkStats& stats() const { return stats_; }
    std::size_t in_flight() const { return queue_.size(); }
    std::optional<double> next_delivery() const;

    /// Enqueue at now(); returns false when the datagram is lost. Throws if it exceeds the MTU.
    bool send(std::uint32_t from, std::uint32_t to, Bytes bytes);
    /// Advance by dt and return datagrams due by then, ordered by delivery time then send order.
    std::vector<Datagram> step(double dt);

private:
    struct Pending {
        Datagram datagram;
        std::uint64_t order;
    };
    struct Later {
        bool operator()(const Pending& a, const Pending& b) const {
            if (a.datagram.deliver_at != b.datagram.deliver_at) return a.datagram.deliver_at > b.datagram.deliver_at;
            return a.order > b.order;
        }
    };

    double uniform();

    NetworkConfig config_;
    double now_ = 0.0;
    std::mt19937_64 rng_;
    std::uint64_t order_ = 0;
    std::map<std::pair<std::uint32_t, std::uint32_t>, double> link_free_at_;
    std::priority_queue<Pending, std::vector<Pending>, Later> queue_;
    NetworkStats stats_;
};

std::vector<Datagram> net_step(NetworkModel& model, double dt);

// ---------------------------------------------------------------------------

/// Retransmission timeout from smoothed RTT samples (seconds).
class RtoEstimator {
public:
    static constexpr double kInitial = 0.2;
    static constexpr double kMin = 0.030;
    static constexpr double kMax = 2.0;
    static constexpr double kVarianceFloor = 0.010;

    double update(double rtt);
    double backoff();
    double rto() const { return rto_; }
    double srtt() const { return srtt_; }
    double rttvar() const { return rttvar_; }
    bool has_sample() const { return has_sample_; }

private:
    double srtt_ = 0.0;
    double rttvar_ = 0.0;
    double rto_ = kInitial;
    bool has_sample_ = false;
};

struct TransportConfig {
    int mtu = kDefaultMtu;
    std::uint32_t window = 32;  ///< messages in flight per channel
};

struct Message {
    Channel channel = Channel::Control;
    std::uint32_t seq = 0;
    Bytes bytes;
    double delivered_at = 0.0;
};

struct TransportStats {
    std::uint64_t datagrams_sent = 0;
    std::uint64_t bytes_sent = 0;
    std::uint64_t header_bytes_sent = 0;
    std::uint64_t messages_sent = 0;
    std::uint64_t messages_delivered = 0;
    std::uint64_t retransmissions = 0;  ///< message-level timeouts
    std::uint64_t duplicates = 0;
    std::uint64_t rejected = 0;         ///< malformed or foreign datagrams
};

class ReliableEndpoint {
public:
    explicit ReliableEndpoint(std::uint32_t connection, TransportConfig config = {});

    std::uint32_t connection() const { return connection_; }

    /// Queue a message; returns its per-channel seq. Throws ConnectionClosed after close().
    std::uint32_t send_message(Channel channel, Bytes bytes);
    /// Stop accepting messages; a FIN follows once everything queued is acknowledged.
    void close();
    bool closed() const { return closed_; }
    bool peer_closed() const { return peer_closed_; }

    /// Datagrams to put on the wire at `now`: new fragments within the window,
    /// timed-out retransmissions and pending acknowledgements.
    std::vector<Bytes> poll(double now);
    void receive_datagram(double now, std::span<const std::uint8_t> bytes);
    /// Next message delivered in order on any channel.
    std::optional<Message> next_message();

    /// Nothing queued, in flight or waiting to be acknowledged, and any FIN sent.
    bool idle() const;
    std::size_t unacked(Channel channel) const;
    const RtoEstimator& rto() const { return rto_; }
    const TransportStats& stats() const { return stats_; }

private:
    struct Outgoing {
        Bytes bytes;
        double first_sent = 0.0;
        double deadline = 0.0;
        bool sent = false;
        bool retransmitted = false;
    };
    struct Partial {
        std::vector<std::optional<Bytes>> fragments;
        std::size_t received = 0;
    };
    struct ChannelState {
        std::uint32_t next_seq = 1;
        std::deque<Bytes> pending;
        std::map<std::uint32_t, Outgoing> in_flight;
        std::uint32_t delivered_upto = 0;
        std::map<std::uint32_t, Bytes> complete;
        std::map<std::uint32_t, Partial> partial;
        bool ack_pending = false;
    };

    bool queues_empty() const;
    DatagramHeader header_for(int channel, std::uint32_t seq, std::uint8_t flags) const;
    void emit(std::vector<Bytes>& out, const DatagramHeader& header, std::span<const std::uint8_t> payload);
    void transmit(std::vector<Bytes>& out, int channel, std::uint32_t seq, const Bytes& bytes);
    void handle_ack(double now, int channel, std::uint32_t ack, std::uint32_t bits);
    void handle_data(double now, const DatagramHeader& header, Bytes payload);

    std::uint32_t connection_;
    TransportConfig config_;
    std::array<ChannelState, kChannelCount> channels_;
    std::deque<Message> inbox_;
    RtoEstimator rto_;
    TransportStats stats_;
    bool closed_ = false;
    bool fin_sent_ = false;
    bool peer_closed_ = false;
    bool heard_from_peer_ = false;
};

/// Two endpoints joined by one network per direction (a -> b and b -> a).
class SimulatedLink {
public:
    SimulatedLink(std::uint32_t connection, NetworkConfig a_to_b, NetworkConfig b_to_a, TransportConfig config = {});

    ReliableEndpoint& a() { return a_; }
    ReliableEndpoint& b() { return b_; }
    NetworkModel& a_to_b() { return ab_; }
    NetworkModel& b_to_a() { return ba_; }
    double now() const { return ab_.now(); }

    /// Poll both endpoints, then advance both networks by dt and hand over arrivals.
    void step(double dt);
    bool idle() const;

private:
    ReliableEndpoint a_;
    ReliableEndpoint b_;
    NetworkModel ab_;
    NetworkModel ba_;
};

}  // namespace lpstream
