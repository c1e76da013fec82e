#include <random>

#include <gtest/gtest.h>

#include "rapid/error.hpp"
#include "rapid/sync.hpp"
#include "support/oracles.hpp"
#include "support/traces.hpp"

using namespace rapid;
using namespace std::chrono_literals;

namespace {

constexpr std::int64_t kSec = 1'000'000'000;
constexpr std::int64_t kMs = 1'000'000;

std::vector<ChannelSpec> camera_tactile() {
    return {ChannelSpec{"cam_wrist", "/rapid/camera/wrist", {2, 2}, 0, 30.0},
            ChannelSpec{"tac_left", "/rapid/tactile/left", {3}, 1, 60.0}};
}

PhysicalMask mask(std::uint64_t word, std::int64_t ts, std::uint8_t count = 2) {
    PhysicalMask m;
    m.device_count = count;
    m.mask = word;
    m.timestamp_ns = static_cast<std::uint64_t>(ts);
    return m;
}

}  // namespace

TEST(Sync, PairsWithinWindow) {
    Synchronizer s(camera_tactile());
    s.push_mask(mask(0b11, 99 * kSec));
    s.push_mask(mask(0b11, 101 * kSec));
    s.push_sample(0, 100 * kSec, {1, 2, 3, 4});
    s.push_sample(1, 100 * kSec + 10 * kMs, {5, 6, 7});
    auto out = s.flush();
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].t_ref, 100 * kSec);
    EXPECT_EQ(out[0].anchor, 0u);
    EXPECT_TRUE(out[0].channels[0].present);
    EXPECT_TRUE(out[0].channels[1].present);
    EXPECT_EQ(out[0].channels[1].payload, (std::vector<float>{5, 6, 7}));
    EXPECT_EQ(*out[0].channels[1].source_timestamp_ns, 100 * kSec + 10 * kMs);
}

TEST(Sync, OutsideWindowIsStale) {
    Synchronizer s(camera_tactile());
    s.push_mask(mask(0b11, 100 * kSec));
    s.push_sample(0, 100 * kSec, {1, 2, 3, 4});
    s.push_sample(1, 100 * kSec + 30 * kMs, {5, 6, 7});
    auto out = s.flush();
    ASSERT_GE(out.size(), 1u);
    EXPECT_FALSE(out[0].channels[1].present);
    EXPECT_TRUE(out[0].channels[1].stale);
    EXPECT_EQ(out[0].channels[1].payload, (std::vector<float>{0, 0, 0}));
}

TEST(Sync, ClearedBitZeroFills) {
    Synchronizer s(camera_tactile());
    s.push_mask(mask(0b01, 100 * kSec));
    s.push_sample(0, 100 * kSec, {1, 2, 3, 4});
    s.push_sample(1, 100 * kSec + 5 * kMs, {5, 6, 7});  // data from an absent device is ignored
    auto out = s.flush();
    ASSERT_EQ(out.size(), 1u);
    const auto& tac = out[0].channels[1];
    EXPECT_FALSE(tac.present);
    EXPECT_FALSE(tac.stale);
    EXPECT_EQ(tac.payload, (std::vector<float>{0, 0, 0}));
    EXPECT_EQ(out[0].mask_snapshot.mask, 0b01u);
    auto v = assemble_observation_vector(out[0]);
    EXPECT_EQ(v.values, (std::vector<float>{1, 2, 3, 4, 0, 0, 0}));
    EXPECT_EQ(v.present, (std::vector<std::uint8_t>{1, 0}));
}

TEST(Sync, ShapeMismatchRejected) {
    Synchronizer s(camera_tactile());
    try {
        s.push_sample(1, 1, {1, 2});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::ShapeMismatch);
    }
}

TEST(Sync, InvalidChannelsRejected) {
    auto bad = camera_tactile();
    bad[0].shape = {2, 0};
    EXPECT_THROW(Synchronizer{bad}, Error);
    EXPECT_THROW(Synchronizer(camera_tactile(), Duration::zero()), Error);
}

TEST(Sync, LateSampleDropped) {
    Synchronizer s(camera_tactile());
    s.push_mask(mask(0b11, 100 * kSec));
    s.push_sample(0, 100 * kSec, {1, 2, 3, 4});
    s.flush();
    s.push_sample(1, 100 * kSec - kMs, {1, 1, 1});
    EXPECT_EQ(s.stats().late_dropped, 1u);
}

TEST(Sync, StreamingWaitsForLaterSamples) {
    Synchronizer s(camera_tactile());
    s.push_mask(mask(0b11, 100 * kSec));
    s.push_sample(0, 100 * kSec, {1, 2, 3, 4});
    EXPECT_TRUE(s.advance(100 * kSec + 10 * kMs).empty());
    s.push_sample(1, 100 * kSec + 20 * kMs, {5, 6, 7});
    s.push_mask(mask(0b11, 101 * kSec));
    auto out = s.advance(101 * kSec);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_TRUE(out[0].channels[1].present);
}

// Randomised traces: the streaming synchronizer and the brute-force batch oracle agree on every
// group, and every observation has the same fixed length with absent channels all zero.
TEST(Sync, RandomTracesMatchBruteForceOracle) {
    std::size_t total_groups = 0, absent_slots = 0, stale_slots = 0;
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
        auto trace = testing_support::random_trace(seed);
        auto expected = oracle::group_trace(trace.channels, trace.samples, trace.masks, 25 * kMs);
        auto obs = testing_support::run_streaming(trace, seed);
        auto got = testing_support::as_groups(obs);
        ASSERT_TRUE(testing_support::same_groups(expected, got))
            << "seed " << seed << ": oracle " << expected.size() << " groups, synchronizer " << got.size();
        const std::size_t len = 3 * trace.channels.size();
        for (const auto& o : obs) {
            auto v = assemble_observation_vector(o);
            ASSERT_EQ(v.values.size(), len);
            for (std::size_t c = 0; c < o.channels.size(); ++c) {
                const auto& ch = o.channels[c];
                if (!ch.present) {
                    for (std::size_t k = 0; k < 3; ++k) ASSERT_EQ(v.values[3 * c + k], 0.0f);
                } else {
                    ASSERT_LE(std::llabs(*ch.source_timestamp_ns - o.t_ref), 25 * kMs);
                }
            }
        }
        for (const auto& g : expected) {
            for (auto sl : g.slots) {
                absent_slots += sl == oracle::Slot::Absent;
                stale_slots += sl == oracle::Slot::Stale;
            }
        }
        total_groups += expected.size();
    }
    // the traces exercise every outcome
    EXPECT_GT(total_groups, 10000u);
    EXPECT_GT(absent_slots, 100u);
    EXPECT_GT(stale_slots, 100u);
}

TEST(Sync, VectorLengthInvariantOverPresencePatterns) {
    std::vector<ChannelSpec> specs = {ChannelSpec{"a", "/a", {2, 3}, 0, 10}, ChannelSpec{"b", "/b", {4}, 1, 20},
                                      ChannelSpec{"c", "/c", {1}, 2, 30}, ChannelSpec{"d", "/d", {5}, 3, 40}};
    for (std::uint64_t word = 1; word < 16; ++word) {
        Synchronizer s(specs);
        s.push_mask(mask(word, 0, 4));
        for (std::size_t c = 0; c < 4; ++c) {
            s.push_sample(c, kSec, std::vector<float>(specs[c].element_count(), 1.0f));
        }
        auto out = s.flush();
        ASSERT_EQ(out.size(), 1u);
        auto v = assemble_observation_vector(out[0]);
        ASSERT_EQ(v.values.size(), 6u + 4u + 1u + 5u);
        std::size_t off = 0;
        for (std::size_t c = 0; c < 4; ++c) {
            const bool on = (word >> c) & 1u;
            EXPECT_EQ(v.present[c], on ? 1 : 0);
            for (std::size_t k = 0; k < specs[c].element_count(); ++k) EXPECT_EQ(v.values[off + k], on ? 1.0f : 0.0f);
            off += specs[c].element_count();
        }
    }
}

TEST(DiffImage, Identities) {
    Image a{{2, 2}, {0.1f, 0.5f, 0.9f, 0.3f}};
    auto same = diff_image(a, a);
    for (float p : same.pixels) EXPECT_FLOAT_EQ(p, 0.5f);
    EXPECT_FLOAT_EQ(diff_image(Image{{1}, {1.0f}}, Image{{1}, {0.0f}}).pixels[0], 1.0f);
    EXPECT_FLOAT_EQ(diff_image(Image{{1}, {0.0f}}, Image{{1}, {1.0f}}).pixels[0], 0.0f);
    EXPECT_FLOAT_EQ(diff_image(Image{{1}, {3.0f}}, Image{{1}, {0.0f}}).pixels[0], 1.0f);
    EXPECT_THROW(diff_image(Image{{2}, {0, 0}}, Image{{1, 2}, {0, 0}}), Error);
}

TEST(DiffImage, RandomPairsMatchScalarFormula) {
    std::mt19937 rng(11);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (int trial = 0; trial < 100; ++trial) {
        Image c{{8, 8}, {}}, r{{8, 8}, {}};
        for (int i = 0; i < 64; ++i) {
            c.pixels.push_back(u(rng));
            r.pixels.push_back(u(rng));
        }
        auto d = diff_image(c, r);
        for (int i = 0; i < 64; ++i) {
            double want = (static_cast<double>(c.pixels[i]) - r.pixels[i]) / 2.0 + 0.5;
            want = std::min(1.0, std::max(0.0, want));
            ASSERT_NEAR(d.pixels[i], want, 1e-6);
        }
    }
}

TEST(Payload, RoundTrip) {
    std::vector<float> v = {0.0f, -1.5f, 3.25f, 1e-7f};
    auto b = encode_payload(v);
    ASSERT_EQ(b.size(), 16u);
    EXPECT_EQ(b[4], 0x00);
    EXPECT_EQ(b[7], 0xBF);  // -1.5f = 0xBFC00000
    EXPECT_EQ(decode_payload(b, 4), v);
    EXPECT_THROW(decode_payload(b, 3), Error);
}
