#include "lpstream/transport.hpp"

#include "lpstream/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace lpstream {

Bytes encode_datagram(const DatagramHeader& header, std::span<const std::uint8_t> payload) {
    if (payload.size() != header.payload_length) throw InvalidArgument("payload length does not match header");
    ByteWriter w;
    w.u32(header.connection);
    w.u8(header.channel);
    w.u32(header.seq);
    w.u32(header.ack);
    w.u32(header.ack_bits);
    w.u8(header.flags);
    if (header.flags & kFlagFrag) {
        w.u16(header.fragment_index);
        w.u16(header.fragment_count);
    }
    w.u16(header.payload_length);
    w.bytes(payload);
    return w.take();
}

std::pair<DatagramHeader, Bytes> decode_datagram(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    DatagramHeader h;
    h.connection = r.u32();
    h.channel = r.u8();
    h.seq = r.u32();
    h.ack = r.u32();
    h.ack_bits = r.u32();
    h.flags = r.u8();
    if (h.flags & kFlagFrag) {
        h.fragment_index = r.u16();
        h.fragment_count = r.u16();
        if (h.fragment_count == 0 || h.fragment_index >= h.fragment_count) throw DecodeError("bad fragment numbering");
    }
    h.payload_length = r.u16();
    if (r.remaining() != h.payload_length) throw DecodeError("datagram length disagrees with header");
    const auto payload = r.bytes(h.payload_length);
    return {h, Bytes(payload.begin(), payload.end())};
}

namespace {

std::size_t fragment_payload(int mtu) {
    if (mtu <= static_cast<int>(DatagramHeader::kFragBytes)) throw InvalidArgument("MTU too small");
    return static_cast<std::size_t>(mtu) - DatagramHeader::kFragBytes;
}

bool fits_unfragmented(std::size_t bytes, int mtu) {
    return bytes + DatagramHeader::kBaseBytes <= static_cast<std::size_t>(mtu);
}

}  // namespace

std::size_t fragment_count(std::size_t bytes, int mtu) {
    if (fits_unfragmented(bytes, mtu)) return 1;
    const std::size_t chunk = fragment_payload(mtu);
    return (bytes + chunk - 1) / chunk;
}

// ---------------------------------------------------------------------------

NetworkConfig parse_network_config(const std::string& json_text) {
    NetworkConfig c;
    try {
        const auto j = nlohmann::json::parse(json_text);
        if (!j.is_object()) throw InvalidArgument("network config must be a JSON object");
        for (const auto& [key, _] : j.items()) {
            if (key != "latency_ms" && key != "jitter_ms" && key != "loss" && key != "bandwidth_bps" && key != "mtu" &&
                key != "seed") {
                throw InvalidArgument("unknown network config key: " + key);
            }
        }
        c.latency_ms = j.value("latency_ms", c.latency_ms);
        c.jitter_ms = j.value("jitter_ms", c.jitter_ms);
        c.loss = j.value("loss", c.loss);
        c.bandwidth_bps = j.value("bandwidth_bps", c.bandwidth_bps);
        c.mtu = j.value("mtu", c.mtu);
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("invalid network config: ") + e.what());
    }
    if (c.latency_ms < 0 || c.jitter_ms < 0 || c.bandwidth_bps < 0) throw InvalidArgument("negative network parameter");
    if (c.loss < 0 || c.loss > 1) throw InvalidArgument("loss must lie in [0, 1]");
    fragment_payload(c.mtu);
    return c;
}

std::string network_config_to_json(const NetworkConfig& c) {
    nlohmann::ordered_json j;
    j["latency_ms"] = c.latency_ms;
    j["jitter_ms"] = c.jitter_ms;
    j["loss"] = c.loss;
    j["bandwidth_bps"] = c.bandwidth_bps;
    j["mtu"] = c.mtu;
    j["seed"] = c.seed;
    return j.dump(2);
}

NetworkModel::NetworkModel(NetworkConfig config) : config_(config), rng_(config.seed) {
    if (config_.loss < 0 || config_.loss > 1) throw InvalidArgument("loss must lie in [0, 1]");
    if (config_.latency_ms < 0 || config_.jitter_ms < 0 || config_.bandwidth_bps < 0) {
        throw InvalidArgument("negative network parameter");
    }
}

double NetworkModel::uniform() { return static_cast<double>(rng_() >> 11) * 0x1p-53; }

std::optional<double> NetworkModel::next_delivery() const {
    if (queue_.empty()) return std::nullopt;
    return queue_.top().datagram.deliver_at;
}

bool NetworkModel::send(std::uint32_t from, std::uint32_t to, Bytes bytes) {
    if (bytes.size() > static_cast<std::size_t>(config_.mtu)) throw InvalidArgument("datagram exceeds MTU");
    ++stats_.sent;
    // Draw both values for every datagram so the random stream does not depend on outcomes.
    const double loss_draw = uniform();
    const double jitter_draw = uniform();
    if (loss_draw < config_.loss) {
        ++stats_.dropped;
        return false;
    }
    double depart = now_;
    if (config_.bandwidth_bps > 0.0) {
        double& free_at = link_free_at_[{from, to}];
        depart = std::max(now_, free_at);
        free_at = depart + static_cast<double>(bytes.size()) * 8.0 / config_.bandwidth_bps;
        depart = free_at;
    }
    Datagram d;
    d.from = from;
    d.to = to;
    d.sent_at = now_;
    d.deliver_at = depart + (config_.latency_ms + jitter_draw * config_.jitter_ms) / 1000.0;
    d.bytes = std::move(bytes);
    queue_.push({std::move(d), order_++});
    return true;
}

std::vector<Datagram> NetworkModel::step(double dt) {
    if (!(dt > 0.0)) throw InvalidArgument("step must be positive");
    now_ += dt;
    std::vector<Datagram> out;
    while (!queue_.empty() && queue_.top().datagram.deliver_at <= now_) {
        out.push_back(std::move(const_cast<Pending&>(queue_.top()).datagram));
        queue_.pop();
        ++stats_.delivered;
        stats_.bytes_delivered += out.back().bytes.size();
    }
    return out;
}

std::vector<Datagram> net_step(NetworkModel& model, double dt) { return model.step(dt); }

// ---------------------------------------------------------------------------

double RtoEstimator::update(double rtt) {
    if (rtt < 0.0) throw InvalidArgument("negative RTT sample");
    if (!has_sample_) {
        srtt_ = rtt;
        rttvar_ = rtt / 2.0;
        has_sample_ = true;
    } else {
        rttvar_ = 0.75 * rttvar_ + 0.25 * std::abs(srtt_ - rtt);
        srtt_ = 0.875 * srtt_ + 0.125 * rtt;
    }
    rto_ = std::clamp(srtt_ + std::max(kVarianceFloor, 4.0 * rttvar_), kMin, kMax);
    return rto_;
}

double RtoEstimator::backoff() {
    rto_ = std::min(kMax, rto_ * 2.0);
    return rto_;
}

// ---------------------------------------------------------------------------

ReliableEndpoint::ReliableEndpoint(std::uint32_t connection, TransportConfig config)
    : connection_(connection), config_(config) {
    fragment_payload(config_.mtu);
    if (config_.window == 0 || config_.window > 32) throw InvalidArgument("window must lie in [1, 32]");
}

std::uint32_t ReliableEndpoint::send_message(Channel channel, Bytes bytes) {
    if (closed_) throw ConnectionClosed("connection closed");
    const int c = static_cast<int>(channel);
    if (c >= kChannelCount) throw InvalidArgument("unknown channel");
    if (fragment_count(bytes.size(), config_.mtu) > 0xFFFF) throw InvalidArgument("message too large");
    ChannelState& ch = channels_[c];
    ch.pending.push_back(std::move(bytes));
    ++stats_.messages_sent;
    // Seqs are assigned in queue order when messages enter the window.
    return ch.next_seq + static_cast<std::uint32_t>(ch.pending.size()) - 1;
}

void ReliableEndpoint::close() { closed_ = true; }

DatagramHeader ReliableEndpoint::header_for(int channel, std::uint32_t seq, std::uint8_t flags) const {
    const ChannelState& ch = channels_[channel];
    DatagramHeader h;
    h.connection = connection_;
    h.channel = static_cast<std::uint8_t>(channel);
    h.seq = seq;
    h.ack = ch.delivered_upto;
    for (const auto& [s, _] : ch.complete) {
        const std::uint64_t bit = static_cast<std::uint64_t>(s) - ch.delivered_upto - 2;
        if (bit < 32) h.ack_bits |= 1u << bit;
    }
    h.flags = static_cast<std::uint8_t>(flags | kFlagAck | (heard_from_peer_ ? 0 : kFlagSyn));
    return h;
}

void ReliableEndpoint::emit(std::vector<Bytes>& out, const DatagramHeader& header,
                            std::span<const std::uint8_t> payload) {
    out.push_back(encode_datagram(header, payload));
    ++stats_.datagrams_sent;
    stats_.bytes_sent += out.back().size();
    stats_.header_bytes_sent += header.size();
}

void ReliableEndpoint::transmit(std::vector<Bytes>& out, int channel, std::uint32_t seq, const Bytes& bytes) {
    channels_[channel].ack_pending = false;
    if (fits_unfragmented(bytes.size(), config_.mtu)) {
        DatagramHeader h = header_for(channel, seq, 0);
        h.payload_length = static_cast<std::uint16_t>(bytes.size());
        emit(out, h, bytes);
        return;
    }
    const std::size_t chunk = fragment_payload(config_.mtu);
    const std::size_t count = fragment_count(bytes.size(), config_.mtu);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t begin = i * chunk;
        const std::size_t len = std::min(chunk, bytes.size() - begin);
        DatagramHeader h = header_for(channel, seq, kFlagFrag);
        h.fragment_index = static_cast<std::uint16_t>(i);
        h.fragment_count = static_cast<std::uint16_t>(count);
        h.payload_length = static_cast<std::uint16_t>(len);
        emit(out, h, std::span<const std::uint8_t>(bytes).subspan(begin, len));
    }
}

std::vector<Bytes> ReliableEndpoint::poll(double now) {
    std::vector<Bytes> out;
    for (int c = 0; c < kChannelCount; ++c) {
        ChannelState& ch = channels_[c];
        const std::uint32_t base = ch.in_flight.empty() ? ch.next_seq : ch.in_flight.begin()->first;
        while (!ch.pending.empty() && ch.next_seq < base + config_.window) {
            ch.in_flight.emplace(ch.next_seq++, Outgoing{std::move(ch.pending.front())});
            ch.pending.pop_front();
        }
        bool timed_out = false;
        for (auto& [seq, msg] : ch.in_flight) {
            if (msg.sent && now < msg.deadline) continue;
            if (msg.sent) {
                msg.retransmitted = true;
                ++stats_.retransmissions;
                timed_out = true;
            } else {
                msg.first_sent = now;
                msg.sent = true;
            }
            transmit(out, c, seq, msg.bytes);
            msg.deadline = now + rto_.rto();
        }
        if (timed_out) rto_.backoff();
        if (ch.ack_pending) {
            emit(out, header_for(c, 0, 0), {});
            ch.ack_pending = false;
        }
    }
    if (closed_ && !fin_sent_ && queues_empty()) {
        emit(out, header_for(static_cast<int>(Channel::Control), 0, kFlagFin), {});
        fin_sent_ = true;
    }
    return out;
}

void ReliableEndpoint::handle_ack(double now, int channel, std::uint32_t ack, std::uint32_t bits) {
    ChannelState& ch = channels_[channel];
    for (auto it = ch.in_flight.begin(); it != ch.in_flight.end();) {
        const std::uint32_t seq = it->first;
        bool acked = seq <= ack;
        if (!acked && seq >= ack + 2) {
            const std::uint64_t bit = static_cast<std::uint64_t>(seq) - ack - 2;
            acked = bit < 32 && ((bits >> bit) & 1u);
        }
        if (acked && it->second.sent) {
            // Karn: retransmitted messages give no RTT sample.
            if (!it->second.retransmitted) rto_.update(now - it->second.first_sent);
            it = ch.in_flight.erase(it);
        } else {
            ++it;
        }
    }
}

void ReliableEndpoint::handle_data(double now, const DatagramHeader& h, Bytes payload) {
    ChannelState& ch = channels_[h.channel];
    ch.ack_pending = true;
    if (h.seq <= ch.delivered_upto || ch.complete.count(h.seq) ||
        h.seq > ch.delivered_upto + 2 + 32) {  // duplicate or outside anything the sender may have in flight
        ++stats_.duplicates;
        return;
    }
    if (!(h.flags & kFlagFrag)) {
        ch.complete.emplace(h.seq, std::move(payload));
    } else {
        Partial& part = ch.partial[h.seq];
        if (part.fragments.empty()) part.fragments.resize(h.fragment_count);
        if (part.fragments.size() != h.fragment_count) {
            ++stats_.rejected;
            return;
        }
        auto& slot = part.fragments[h.fragment_index];
        if (slot) {
            ++stats_.duplicates;
            return;
        }
        slot = std::move(payload);
        if (++part.received == part.fragments.size()) {
            Bytes whole;
            for (auto& f : part.fragments) whole.insert(whole.end(), f->begin(), f->end());
            ch.partial.erase(h.seq);
            ch.complete.emplace(h.seq, std::move(whole));
        }
    }
    while (!ch.complete.empty() && ch.complete.begin()->first == ch.delivered_upto + 1) {
        auto node = ch.complete.extract(ch.complete.begin());
        ++ch.delivered_upto;
        inbox_.push_back({static_cast<Channel>(h.channel), node.key(), std::move(node.mapped()), now});
        ++stats_.messages_delivered;
    }
}

void ReliableEndpoint::receive_datagram(double now, std::span<const std::uint8_t> bytes) {
    std::pair<DatagramHeader, Bytes> decoded;
    try {
        decoded = decode_datagram(bytes);
    } catch (const DecodeError&) {
        ++stats_.rejected;
        return;
    }
    auto& [h, payload] = decoded;
    if (h.connection != connection_ || h.channel >= kChannelCount) {
        ++stats_.rejected;
        return;
    }
    heard_from_peer_ = true;
    if (h.flags & kFlagFin) peer_closed_ = true;
    if (h.flags & kFlagAck) handle_ack(now, h.channel, h.ack, h.ack_bits);
    if (h.seq != 0) handle_data(now, h, std::move(payload));
}

std::optional<Message> ReliableEndpoint::next_message() {
    if (inbox_.empty()) return std::nullopt;
    Message m = std::move(inbox_.front());
    inbox_.pop_front();
    return m;
}

bool ReliableEndpoint::idle() const {
    return queues_empty() && (!closed_ || fin_sent_);
}

bool ReliableEndpoint::queues_empty() const {
    for (const ChannelState& ch : channels_) {
        if (!ch.pending.empty() || !ch.in_flight.empty() || ch.ack_pending) return false;
    }
    return true;
}

std::size_t ReliableEndpoint::unacked(Channel channel) const {
    const ChannelState& ch = channels_[static_cast<int>(channel)];
    return ch.pending.size() + ch.in_flight.size();
}

// ---------------------------------------------------------------------------

SimulatedLink::SimulatedLink(std::uint32_t connection, NetworkConfig a_to_b, NetworkConfig b_to_a,
                             TransportConfig config)
    : a_(connection, config), b_(connection, config), ab_(a_to_b), ba_(b_to_a) {}

void SimulatedLink::step(double dt) {
    const double t = now();
    for (Bytes& d : a_.poll(t)) ab_.send(1, 2, std::move(d));
    for (Bytes& d : b_.poll(t)) ba_.send(2, 1, std::move(d));
    for (Datagram& d : ab_.step(dt)) b_.receive_datagram(d.deliver_at, d.bytes);
    for (Datagram& d : ba_.step(dt)) a_.receive_datagram(d.deliver_at, d.bytes);
}

bool SimulatedLink::idle() const {
    return a_.idle() && b_.idle() && ab_.in_flight() == 0 && ba_.in_flight() == 0;
}

}  // namespace lpstream
