#include "lpstream/error.hpp"
#include "lpstream/transport.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

using namespace lpstream;
using lpstream::test::Rng;

namespace {

Bytes message_bytes(Rng& rng, std::size_t n) {
    Bytes b(n);
    for (auto& x : b) x = static_cast<std::uint8_t>(rng());
    return b;
}

/// Steps the link until both ends are idle, collecting what b receives.
std::vector<Message> run_until_idle(SimulatedLink& link, double dt = 0.001, double limit = 120.0) {
    std::vector<Message> got;
    const double start = link.now();
    while (link.now() - start < limit) {
        link.step(dt);
        while (auto m = link.b().next_message()) got.push_back(std::move(*m));
        if (link.idle()) break;
    }
    return got;
}

NetworkConfig net(double latency_ms, double loss, std::uint64_t seed, double jitter_ms = 0.0) {
    NetworkConfig c;
    c.latency_ms = latency_ms;
    c.loss = loss;
    c.seed = seed;
    c.jitter_ms = jitter_ms;
    return c;
}

}  // namespace

TEST(Datagram, HeaderLayoutIsLittleEndian) {
    DatagramHeader h;
    h.connection = 0x04030201;
    h.channel = 2;
    h.seq = 0x0A0B0C0D;
    h.ack = 7;
    h.ack_bits = 0x80000001;
    h.flags = kFlagFrag | kFlagAck;
    h.fragment_index = 3;
    h.fragment_count = 9;
    const Bytes payload{0xAA, 0xBB};
    h.payload_length = 2;
    const Bytes w = encode_datagram(h, payload);
    const Bytes expect{0x01, 0x02, 0x03, 0x04, 0x02, 0x0D, 0x0C, 0x0B, 0x0A, 0x07, 0x00, 0x00, 0x00,
                       0x01, 0x00, 0x00, 0x80, 0x0C, 0x03, 0x00, 0x09, 0x00, 0x02, 0x00, 0xAA, 0xBB};
    EXPECT_EQ(w, expect);
    EXPECT_EQ(w.size(), DatagramHeader::kFragBytes + 2);
    const auto [back, body] = decode_datagram(w);
    EXPECT_EQ(back, h);
    EXPECT_EQ(body, payload);

    DatagramHeader plain;
    plain.seq = 1;
    EXPECT_EQ(encode_datagram(plain, {}).size(), DatagramHeader::kBaseBytes);
}

TEST(Datagram, MalformedRejected) {
    DatagramHeader h;
    h.payload_length = 3;
    Bytes w = encode_datagram(h, Bytes{1, 2, 3});
    w.pop_back();
    EXPECT_THROW(decode_datagram(w), DecodeError);
    EXPECT_THROW(decode_datagram(Bytes(10, 0)), DecodeError);
    DatagramHeader f;
    f.flags = kFlagFrag;
    f.fragment_index = 2;
    f.fragment_count = 2;
    EXPECT_THROW(decode_datagram(encode_datagram(f, {})), DecodeError);
}

TEST(Fragmentation, TenKilobytesIsNineFragments) {
    // 1200-byte MTU minus the 24-byte fragment header leaves 1176 payload bytes.
    EXPECT_EQ(fragment_count(10 * 1024), 9u);
    EXPECT_EQ(fragment_count(10000), 9u);
    EXPECT_EQ(fragment_count(1180), 1u);
    EXPECT_EQ(fragment_count(1181), 2u);
    EXPECT_EQ(fragment_count(0), 1u);

    SimulatedLink link(5, net(10, 0, 1), net(10, 0, 2));
    Rng rng(101);
    const Bytes msg = message_bytes(rng, 10 * 1024);
    link.a().send_message(Channel::Color, msg);
    const auto got = run_until_idle(link);
    ASSERT_EQ(got.size(), 1u);
    EXPECT_EQ(got[0].bytes, msg);
    EXPECT_EQ(got[0].channel, Channel::Color);
    EXPECT_EQ(link.a().stats().datagrams_sent - link.a().stats().retransmissions, 9u);
}

TEST(Reliable, NoLossNoRetransmissions) {
    SimulatedLink link(1, net(30, 0, 3), net(30, 0, 4));
    Rng rng(102);
    std::vector<Bytes> sent;
    for (int i = 0; i < 200; ++i) {
        sent.push_back(message_bytes(rng, rng() % 3000));
        link.a().send_message(Channel::Visibility, sent.back());
        if (i % 10 == 0) link.step(0.001);
    }
    const auto got = run_until_idle(link);
    ASSERT_EQ(got.size(), sent.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_EQ(got[i].bytes, sent[i]);
    EXPECT_EQ(link.a().stats().retransmissions, 0u);
    EXPECT_EQ(link.b().stats().duplicates, 0u);
}

TEST(Reliable, FivePercentLossThousandMessages) {
    SimulatedLink link(2, net(20, 0.05, 5, 5), net(20, 0.05, 6, 5));
    Rng rng(103);
    std::vector<Bytes> sent;
    for (int i = 0; i < 1000; ++i) {
        sent.push_back(message_bytes(rng, 1 + rng() % 2500));
        link.a().send_message(Channel::Color, sent.back());
        link.step(0.001);
        while (auto m = link.b().next_message()) ASSERT_EQ(m->bytes, sent[m->seq - 1]);
    }
    const auto got = run_until_idle(link);
    EXPECT_EQ(link.b().stats().messages_delivered, 1000u);
    EXPECT_GT(link.a().stats().retransmissions, 0u);
    for (const auto& m : got) EXPECT_EQ(m.bytes, sent[m.seq - 1]);
}

TEST(Reliable, ExactlyOnceInOrderUnderHeavyLossAndReordering) {
    test::for_cases(104, 8, [](Rng& rng, int i) {
        const double loss = 0.1 + 0.05 * i;  // up to 45%
        SimulatedLink link(3, net(15, loss, rng(), 20), net(15, loss, rng(), 20));
        std::map<Channel, std::vector<Bytes>> sent;
        std::map<Channel, std::vector<Bytes>> got;
        for (int k = 0; k < 120; ++k) {
            const Channel c = static_cast<Channel>(rng() % kChannelCount);
            sent[c].push_back(message_bytes(rng, rng() % 4000));
            link.a().send_message(c, sent[c].back());
            if (k % 4 == 0) link.step(0.002);
        }
        for (double t = 0; t < 300 && !link.idle(); t += 0.002) {
            link.step(0.002);
            while (auto m = link.b().next_message()) got[m->channel].push_back(std::move(m->bytes));
        }
        while (auto m = link.b().next_message()) got[m->channel].push_back(std::move(m->bytes));
        ASSERT_TRUE(link.idle()) << "loss " << loss;
        ASSERT_EQ(got, sent) << "loss " << loss;
    });
}

TEST(Reliable, ChannelsProgressIndependently) {
    // Every datagram of the visibility message is lost for a while; color keeps flowing.
    SimulatedLink link(4, net(10, 0, 7), net(10, 0, 8));
    Rng rng(105);
    link.a().send_message(Channel::Visibility, message_bytes(rng, 5000));
    for (Bytes& d : link.a().poll(0.0)) (void)d;  // first transmission vanishes
    std::vector<Message> color;
    for (int i = 0; i < 5; ++i) link.a().send_message(Channel::Color, message_bytes(rng, 100));
    for (int s = 0; s < 40; ++s) {
        link.step(0.001);
        while (auto m = link.b().next_message()) {
            ASSERT_EQ(m->channel, Channel::Color);
            color.push_back(std::move(*m));
        }
    }
    EXPECT_EQ(color.size(), 5u);  // delivered before the visibility retransmission
    const auto rest = run_until_idle(link);
    ASSERT_EQ(rest.size(), 1u);
    EXPECT_EQ(rest[0].channel, Channel::Visibility);
}

TEST(Reliable, CloseAndErrors) {
    SimulatedLink link(6, net(5, 0, 9), net(5, 0, 10));
    link.a().send_message(Channel::Control, Bytes{1});
    link.a().close();
    EXPECT_THROW(link.a().send_message(Channel::Control, Bytes{2}), ConnectionClosed);
    run_until_idle(link);
    EXPECT_TRUE(link.b().peer_closed());
    EXPECT_THROW(ReliableEndpoint(1, TransportConfig{kDefaultMtu, 0}), InvalidArgument);
    EXPECT_THROW(ReliableEndpoint(1, TransportConfig{kDefaultMtu, 33}), InvalidArgument);
    ReliableEndpoint e(1);
    e.receive_datagram(0.0, Bytes{1, 2, 3});  // garbage is counted, not fatal
    EXPECT_EQ(e.stats().rejected, 1u);
    DatagramHeader foreign;
    foreign.connection = 99;
    foreign.seq = 1;
    e.receive_datagram(0.0, encode_datagram(foreign, {}));
    EXPECT_EQ(e.stats().rejected, 2u);
}

TEST(Rto, EwmaOracle) {
    RtoEstimator r;
    EXPECT_DOUBLE_EQ(r.rto(), 0.2);
    r.update(0.1);
    EXPECT_DOUBLE_EQ(r.srtt(), 0.1);  // first sample taken directly
    EXPECT_DOUBLE_EQ(r.rttvar(), 0.05);
    EXPECT_DOUBLE_EQ(r.rto(), 0.3);
    Rng rng(106);
    double srtt = 0.1, var = 0.05;
    for (int i = 0; i < 200; ++i) {
        const double s = test::uniform_real(rng, 0.0, 0.5);
        var = 0.75 * var + 0.25 * std::abs(srtt - s);
        srtt = 0.875 * srtt + 0.125 * s;
        const double expect = std::min(2.0, std::max(0.03, srtt + std::max(0.01, 4 * var)));
        ASSERT_NEAR(r.update(s), expect, 1e-12);
    }
    EXPECT_THROW(r.update(-1), InvalidArgument);
}

TEST(Rto, ConstantSamplesConverge) {
    RtoEstimator r;
    for (int i = 0; i < 300; ++i) r.update(0.040);
    EXPECT_NEAR(r.srtt(), 0.040, 1e-9);
    EXPECT_NEAR(r.rto(), 0.040 + RtoEstimator::kVarianceFloor, 1e-6);
    RtoEstimator tiny;
    for (int i = 0; i < 300; ++i) tiny.update(0.001);
    EXPECT_DOUBLE_EQ(tiny.rto(), RtoEstimator::kMin);
}

TEST(Rto, BackoffDoublesToCap) {
    RtoEstimator r;
    EXPECT_DOUBLE_EQ(r.backoff(), 0.4);
    EXPECT_DOUBLE_EQ(r.backoff(), 0.8);
    EXPECT_DOUBLE_EQ(r.backoff(), 1.6);
    EXPECT_DOUBLE_EQ(r.backoff(), 2.0);
    EXPECT_DOUBLE_EQ(r.backoff(), 2.0);
}

TEST(Network, FixedLatency) {
    NetworkModel m(net(100, 0, 1));
    net_step(m, 0.25);
    ASSERT_TRUE(m.send(1, 2, Bytes(50, 1)));
    EXPECT_TRUE(net_step(m, 0.0999).empty());
    const auto d = net_step(m, 0.0002);
    ASSERT_EQ(d.size(), 1u);
    EXPECT_NEAR(d[0].deliver_at, 0.35, 1e-12);
    EXPECT_NEAR(d[0].sent_at, 0.25, 1e-12);
    EXPECT_THROW(m.send(1, 2, Bytes(kDefaultMtu + 1)), InvalidArgument);
    EXPECT_THROW(net_step(m, 0.0), InvalidArgument);
}

TEST(Network, BandwidthCapBoundsDelivery) {
    NetworkConfig c;
    c.bandwidth_bps = 50e6;
    NetworkModel m(c);
    const double dt = 1200 * 8 / 100e6;  // offered 100 Mbit/s
    double bits = 0;
    while (m.now() < 1.0) {
        m.send(1, 2, Bytes(1200, 0));
        for (const auto& d : net_step(m, dt)) {
            if (d.deliver_at <= 1.0) bits += d.bytes.size() * 8.0;
        }
    }
    EXPECT_LE(bits, 50e6 + 1200 * 8);
    EXPECT_GE(bits, 50e6 * 0.99);
}

TEST(Network, LossRateAndDeterminism) {
    const auto trace = [](std::uint64_t seed) {
        NetworkModel m(net(10, 0.2, seed, 30));
        std::vector<std::pair<double, std::size_t>> out;
        for (int i = 0; i < 5000; ++i) {
            m.send(1, 2, Bytes(1 + i % 100, 0));
            for (const auto& d : net_step(m, 0.001)) out.emplace_back(d.deliver_at, d.bytes.size());
        }
        return std::make_pair(out, m.stats());
    };
    const auto [a, sa] = trace(7);
    const auto [b, sb] = trace(7);
    const auto [c, sc] = trace(8);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
    EXPECT_NEAR(static_cast<double>(sa.dropped) / sa.sent, 0.2, 0.02);
    // Jitter of 30 ms against 1 ms spacing reorders deliveries relative to send order.
    bool reordered = false;
    for (std::size_t i = 1; i < a.size(); ++i) reordered = reordered || a[i].second < a[i - 1].second;
    EXPECT_TRUE(reordered);
}

TEST(Network, ConfigJson) {
    const NetworkConfig c = parse_network_config(R"({"latency_ms": 12.5, "loss": 0.1, "mtu": 1400})");
    EXPECT_DOUBLE_EQ(c.latency_ms, 12.5);
    EXPECT_DOUBLE_EQ(c.loss, 0.1);
    EXPECT_EQ(c.mtu, 1400);
    const NetworkConfig back = parse_network_config(network_config_to_json(c));
    EXPECT_DOUBLE_EQ(back.latency_ms, 12.5);
    EXPECT_EQ(back.mtu, 1400);
    EXPECT_THROW(parse_network_config(R"({"latency": 1})"), InvalidArgument);
    EXPECT_THROW(parse_network_config(R"({"loss": 1.5})"), InvalidArgument);
    EXPECT_THROW(parse_network_config("{"), InvalidArgument);
}
