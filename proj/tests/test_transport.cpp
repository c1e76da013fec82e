#include <random>
#include <thread>

#include <gtest/gtest.h>

#include "rapid/error.hpp"
#include "rapid/transport.hpp"

using namespace rapid;
using namespace std::chrono_literals;

namespace {

std::vector<std::uint8_t> bytes(std::string_view s) { return {s.begin(), s.end()}; }

MessageEnvelope expect_message(Subscriber& sub, Duration timeout = 2s) {
    auto ev = sub.next(timeout);
    if (!ev) throw std::runtime_error("timed out waiting for a frame");
    if (std::holds_alternative<Disconnected>(*ev)) {
        throw std::runtime_error("disconnected: " + std::get<Disconnected>(*ev).reason);
    }
    return std::get<MessageEnvelope>(*ev);
}

}  // namespace

TEST(Frame, LayoutIsLittleEndian) {
    MessageEnvelope env{"/a", 0x0102030405060708ull, 0x1112131415161718ll, {0xAA, 0xBB}};
    auto f = encode_frame(env);
    const std::vector<std::uint8_t> expected = {
        'R', 'M', 'S', 'G', 1,    2,    0,    '/',  'a',  0x08, 0x07, 0x06, 0x05, 0x04, 0x03,
        0x02, 0x01, 0x18, 0x17, 0x16, 0x15, 0x14, 0x13, 0x12, 0x11, 2,    0,    0,    0,    0xAA, 0xBB};
    EXPECT_EQ(f, expected);
}

TEST(Frame, DecoderHandlesSplitsAndGarbage) {
    std::mt19937 rng(1);
    std::vector<std::uint8_t> stream;
    std::vector<MessageEnvelope> sent;
    for (int i = 0; i < 50; ++i) {
        MessageEnvelope env{"/t" + std::to_string(i % 3), static_cast<std::uint64_t>(i), i * 1000,
                            std::vector<std::uint8_t>(rng() % 300, static_cast<std::uint8_t>(i))};
        auto f = encode_frame(env);
        stream.insert(stream.end(), f.begin(), f.end());
        sent.push_back(env);
        if (i % 10 == 5) {
            for (int g = 0; g < 7; ++g) stream.push_back(static_cast<std::uint8_t>(rng()));
        }
    }
    FrameDecoder dec;
    std::vector<MessageEnvelope> got;
    for (std::size_t pos = 0; pos < stream.size();) {
        std::size_t n = std::min<std::size_t>(1 + rng() % 97, stream.size() - pos);
        dec.feed(std::span(stream).subspan(pos, n));
        pos += n;
        while (auto m = dec.next()) got.push_back(*m);
    }
    EXPECT_EQ(got, sent);
}

TEST(Frame, CorruptFrameSkipped) {
    auto a = encode_frame({"/a", 1, 1, bytes("one")});
    auto b = encode_frame({"/b", 2, 2, bytes("two")});
    a[4] = 9;  // unknown version
    std::vector<std::uint8_t> s(a);
    s.insert(s.end(), b.begin(), b.end());
    FrameDecoder dec;
    dec.feed(s);
    auto m = dec.next();
    ASSERT_TRUE(m);
    EXPECT_EQ(m->topic, "/b");
    EXPECT_EQ(dec.corrupt_frames(), 1u);
}

TEST(Frame, OversizePayloadRejected) {
    MessageEnvelope env{"/big", 0, 0, std::vector<std::uint8_t>(kMaxPayload + 1)};
    EXPECT_THROW(encode_frame(env), Error);
}

TEST(PubSub, HundredFramesInOrder) {
    Publisher pub;
    Subscriber sub(pub.endpoint(), {"/rapid/tactile/left"});
    ASSERT_TRUE(pub.wait_for_subscribers(1, 2s));
    for (int i = 0; i < 100; ++i) {
        auto seq = pub.publish("/rapid/tactile/left", i, bytes("frame" + std::to_string(i)));
        EXPECT_EQ(seq, static_cast<std::uint64_t>(i) + 1);
    }
    for (int i = 0; i < 100; ++i) {
        auto m = expect_message(sub);
        EXPECT_EQ(m.seq, static_cast<std::uint64_t>(i) + 1);
        EXPECT_EQ(m.timestamp_ns, i);
        EXPECT_EQ(m.payload, bytes("frame" + std::to_string(i)));
    }
}

TEST(PubSub, TopicFiltering) {
    Publisher pub;
    Subscriber a(pub.endpoint(), {"/a"});
    Subscriber b(pub.endpoint(), {"/b"});
    Subscriber all(pub.endpoint(), {});
    ASSERT_TRUE(pub.wait_for_subscribers(3, 2s));
    for (int i = 0; i < 20; ++i) pub.publish(i % 2 ? "/b" : "/a", i, bytes("x"));
    for (int i = 0; i < 10; ++i) {
        auto ma = expect_message(a);
        EXPECT_EQ(ma.topic, "/a");
        EXPECT_EQ(ma.seq, static_cast<std::uint64_t>(i) + 1);
        auto mb = expect_message(b);
        EXPECT_EQ(mb.topic, "/b");
        EXPECT_EQ(mb.seq, static_cast<std::uint64_t>(i) + 1);
    }
    for (int i = 0; i < 20; ++i) EXPECT_EQ(expect_message(all).timestamp_ns, i);
    EXPECT_FALSE(a.next(50ms).has_value());
}

TEST(PubSub, LateJoinerReceivesLiveFrames) {
    Publisher pub;
    std::atomic<bool> stop{false};
    std::thread producer([&] {
        int i = 0;
        while (!stop) {
            pub.publish("/rapid/tactile/left", i++, bytes("live"));
            std::this_thread::sleep_for(2ms);
        }
    });
    std::this_thread::sleep_for(30ms);
    Subscriber sub(pub.endpoint(), {"/rapid/tactile/left"});
    auto m = expect_message(sub);
    EXPECT_EQ(m.topic, "/rapid/tactile/left");
    EXPECT_GT(m.seq, 0u);
    stop = true;
    producer.join();
}

TEST(PubSub, PublisherGoneIsReported) {
    auto pub = std::make_unique<Publisher>();
    Subscriber sub(pub->endpoint(), {});
    ASSERT_TRUE(pub->wait_for_subscribers(1, 2s));
    pub->publish("/x", 1, bytes("last"));
    pub->flush(1s);
    const auto t0 = std::chrono::steady_clock::now();
    pub.reset();
    EXPECT_EQ(expect_message(sub).payload, bytes("last"));
    auto ev = sub.next(2s);
    ASSERT_TRUE(ev);
    EXPECT_TRUE(std::holds_alternative<Disconnected>(*ev));
    EXPECT_LT(std::chrono::steady_clock::now() - t0, 2s);
    auto again = sub.next(10ms);
    ASSERT_TRUE(again);
    EXPECT_TRUE(std::holds_alternative<Disconnected>(*again));
}

TEST(PubSub, SlowSubscriberDropsOldest) {
    Publisher pub("127.0.0.1:0", 8, OverflowPolicy::DropOldest);
    Subscriber sub(pub.endpoint(), {});
    ASSERT_TRUE(pub.wait_for_subscribers(1, 2s));
    std::vector<std::uint8_t> big(512 * 1024);
    for (int i = 0; i < 200; ++i) pub.publish("/big", i, big);
    EXPECT_GT(pub.dropped_frames(), 0u);
    std::uint64_t last = 0;
    bool first = true;
    while (auto ev = sub.next(300ms)) {
        auto& m = std::get<MessageEnvelope>(*ev);
        ASSERT_EQ(m.payload.size(), big.size());
        if (!first) {
            ASSERT_GT(m.seq, last);
        }
        last = m.seq;
        first = false;
    }
    EXPECT_EQ(last, 200u);
}

TEST(PubSub, ConnectFailure) {
    try {
        Subscriber sub("127.0.0.1:1", {}, 200ms);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::ConnectFailure);
    }
}

TEST(Beacon, EncodeParse) {
    Beacon b{"tactile_publisher", "127.0.0.1:4000", {"/rapid/tactile/left", "/rapid/tactile/right"}};
    EXPECT_EQ(encode_beacon(b), "RAPIDBEACON 1 tactile_publisher 127.0.0.1:4000 /rapid/tactile/left,/rapid/tactile/right");
    EXPECT_EQ(parse_beacon(encode_beacon(b)), b);
    EXPECT_FALSE(parse_beacon("HELLO 1 x y z"));
    EXPECT_FALSE(parse_beacon("RAPIDBEACON 2 x 1:2 /a"));
}

TEST(Beacon, DiscoveryDeduplicates) {
    const std::string addr = "127.0.0.1:" + std::to_string(30000 + ::getpid() % 20000);
    BeaconAnnouncer one(Beacon{"node_a", "127.0.0.1:5001", {"/a"}}, addr, 200ms);
    auto result = discover(addr, 900ms);
    ASSERT_EQ(result.nodes.size(), 1u);
    EXPECT_EQ(result.nodes[0].beacon.node_name, "node_a");
    EXPECT_GE(result.nodes[0].heard, 2);
    EXPECT_TRUE(result.warnings.empty());
}

TEST(Beacon, DuplicateNameWarning) {
    const std::string addr = "127.0.0.1:" + std::to_string(30001 + ::getpid() % 20000);
    BeaconAnnouncer one(Beacon{"node_a", "127.0.0.1:5001", {"/a"}}, addr, 200ms);
    BeaconAnnouncer two(Beacon{"node_a", "127.0.0.1:5002", {"/b"}}, addr, 200ms);
    auto result = discover(addr, 900ms);
    EXPECT_EQ(result.nodes.size(), 2u);
    ASSERT_FALSE(result.warnings.empty());
    EXPECT_EQ(result.warnings[0].rfind("DuplicateName", 0), 0u);
}
