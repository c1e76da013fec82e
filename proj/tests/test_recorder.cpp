#include <filesystem>
#include <fstream>
#include <future>
#include <random>
#include <thread>

#include <gtest/gtest.h>

#include "rapid/error.hpp"
#include "rapid/recorder.hpp"
#include "support/episodes.hpp"
#include "support/oracles.hpp"

using namespace rapid;
using namespace std::chrono_literals;
namespace fs = std::filesystem;
using testing_support::write_episode;

namespace {

fs::path temp_file(const std::string& leaf) {
    auto dir = fs::temp_directory_path() / ("rapid_rec_test_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    return dir / leaf;
}

std::uint64_t count_on(const Episode& ep, std::uint8_t id) {
    std::uint64_t n = 0;
    for (const auto& r : ep.records) n += r.channel_id == id;
    return n;
}

}  // namespace

TEST(Manifest, JsonRoundTrip) {
    auto m = manifest_for_registry(testing_support::camera_tactile_registry(), {}, 30.0, "2026-02-05T10:30:00Z");
    ASSERT_EQ(m.channels.size(), 3u);
    EXPECT_EQ(m.channels[0].topic, "/rapid/mask");
    EXPECT_EQ(m.channels[2].name, "tac_left");
    EXPECT_EQ(m.channels[2].shape, (std::vector<std::size_t>{2, 3}));
    EXPECT_EQ(EpisodeManifest::from_json(m.to_json()), m);
    EXPECT_THROW(manifest_for_registry(testing_support::camera_tactile_registry(), {"/nope"}, 30, ""), Error);
    auto only = manifest_for_registry(testing_support::camera_tactile_registry(), {"tac_left"}, 30, "");
    EXPECT_EQ(only.channels.size(), 2u);
    EXPECT_EQ(only.bit_map.size(), 2u);
}

TEST(Episode, WriteReadRoundTrip) {
    auto path = temp_file("roundtrip.repi");
    auto info = write_episode(path);
    Episode ep = read_episode(path);
    EXPECT_EQ(count_on(ep, 1), info.camera_frames);
    EXPECT_EQ(count_on(ep, 2), info.tactile_frames);
    EXPECT_EQ(count_on(ep, 0), info.masks.size());
    EXPECT_EQ(ep.manifest.start_wall_time, "2026-02-05T10:30:00Z");
    EXPECT_FALSE(ep.damaged_at);
}

TEST(Episode, WriterRejectsBackwardsAndUnknown) {
    auto path = temp_file("bad.repi");
    EpisodeWriter w(path, manifest_for_registry(testing_support::camera_tactile_registry(), {}, 30, ""));
    w.append(EpisodeRecord{1, 100, encode_payload(std::vector<float>(16))});
    EXPECT_THROW(w.append(EpisodeRecord{1, 99, encode_payload(std::vector<float>(16))}), Error);
    EXPECT_NO_THROW(w.append(EpisodeRecord{2, 50, encode_payload(std::vector<float>(6))}));
    EXPECT_THROW(w.append(EpisodeRecord{9, 200, {}}), Error);
}

TEST(Episode, TruncationReportsOffset) {
    auto path = temp_file("trunc.repi");
    write_episode(path);
    // offset where the last record starts
    std::uint64_t last_start = 0;
    {
        EpisodeReader rd(path);
        while (true) {
            std::uint64_t at = rd.offset();
            if (!rd.next()) break;
            last_start = at;
        }
    }
    const auto full = fs::file_size(path);
    fs::resize_file(path, full - 3);
    try {
        read_episode(path);
        FAIL() << "truncated file accepted";
    } catch (const ContainerDamage& e) {
        EXPECT_EQ(e.code(), Errc::CorruptContainer);
        EXPECT_EQ(e.offset(), last_start);
    }
    Episode ep = read_episode(path, true);
    ASSERT_TRUE(ep.damaged_at);
    EXPECT_EQ(*ep.damaged_at, last_start);
    EXPECT_FALSE(ep.records.empty());
}

TEST(Episode, DamagedHeader) {
    auto path = temp_file("hdr.repi");
    write_episode(path);
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.put('X');
    }
    try {
        read_episode(path);
        FAIL();
    } catch (const ContainerDamage& e) {
        EXPECT_EQ(e.offset(), 0u);
    }
}

TEST(Audit, TwoSecondDropout) {
    auto path = temp_file("audit.repi");
    auto info = write_episode(path, 3.0, 2.0);
    Episode ep = read_episode(path);
    AuditReport rep = audit_episode(ep, {"tac_left"});
    ASSERT_EQ(rep.modalities.size(), 2u);
    EXPECT_TRUE(rep.modalities[0].offline.empty());
    ASSERT_EQ(rep.modalities[1].offline.size(), 1u);
    EXPECT_NEAR(static_cast<double>(rep.modalities[1].offline[0].length_ns()), 2e9, 10e6);
    auto spans = oracle::offline_spans(info.masks, 1);
    ASSERT_EQ(spans.size(), 1u);
    EXPECT_EQ(rep.modalities[1].offline[0].start_ns, spans[0].start);
    EXPECT_EQ(rep.modalities[1].offline[0].end_ns, spans[0].end);
    EXPECT_EQ(rep.usable.size(), 2u);
    EXPECT_EQ(rep.mask_records, info.masks.size());
    auto j = rep.to_json();
    EXPECT_EQ(j["modalities"][1]["offline"].size(), 1u);
    EXPECT_NE(rep.to_text().find("tac_left"), std::string::npos);
}

TEST(Audit, MatchesBruteForceScanOnRandomTimelines) {
    std::mt19937 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        auto path = temp_file("audit_random.repi");
        Registry reg = testing_support::camera_tactile_registry();
        EpisodeWriter w(path, manifest_for_registry(reg, {}, 30, ""));
        std::vector<oracle::TraceMask> masks;
        std::uint64_t word = 0b11;
        for (int i = 0; i < 500; ++i) {
            if (rng() % 20 == 0) word ^= 1u << (rng() % 2);
            PhysicalMask m;
            m.device_count = 2;
            m.mask = word;
            m.timestamp_ns = 1000 + static_cast<std::uint64_t>(i) * 2'000'000;
            m.sequence = static_cast<std::uint64_t>(i) + 1;
            auto rec = encode_mask(m);
            w.append(EpisodeRecord{0, static_cast<std::int64_t>(m.timestamp_ns), {rec.begin(), rec.end()}});
            masks.push_back({static_cast<std::int64_t>(m.timestamp_ns), word});
        }
        w.close();
        AuditReport rep = audit_episode(read_episode(path));
        for (unsigned bit = 0; bit < 2; ++bit) {
            auto spans = oracle::offline_spans(masks, bit);
            const auto& got = rep.modalities[bit].offline;
            ASSERT_EQ(got.size(), spans.size());
            for (std::size_t i = 0; i < spans.size(); ++i) {
                ASSERT_EQ(got[i].start_ns, spans[i].start);
                ASSERT_EQ(got[i].end_ns, spans[i].end);
            }
        }
    }
}

TEST(Audit, UnknownModality) {
    auto path = temp_file("audit_unknown.repi");
    write_episode(path);
    try {
        audit_episode(read_episode(path), {"lidar"});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::TopicUnavailable);
    }
}

TEST(Episode, SynchronizedReplayZeroFillsTheGap) {
    auto path = temp_file("sync.repi");
    write_episode(path, 3.0, 2.0);
    auto obs = synchronize_episode(read_episode(path));
    ASSERT_GT(obs.size(), 200u);
    std::size_t absent = 0;
    for (const auto& o : obs) {
        auto v = assemble_observation_vector(o);
        ASSERT_EQ(v.values.size(), 16u + 6u);
        const bool in_gap = o.t_ref >= 8'000'000'000 + 15'000'000 && o.t_ref < 10'000'000'000 - 15'000'000;
        if (in_gap) {
            EXPECT_FALSE(o.channels[1].present);
            EXPECT_FALSE(o.channels[1].stale);
            ++absent;
        }
    }
    EXPECT_GT(absent, 50u);
}

// Replay the constructed episode into a static-mode recording and compare.
TEST(Episode, ReplayRecordRoundTrip) {
    auto src = temp_file("src.repi");
    auto dst = temp_file("dst.repi");
    write_episode(src, 3.0, 2.0);
    std::promise<std::string> ep_promise;
    auto ep_future = ep_promise.get_future();
    std::thread replayer([&] {
        ReplayConfig rc;
        rc.in = src;
        rc.speed = 0;
        rc.wait_for_subscribers = 1;
        rc.on_ready = [&](const std::string& e) { ep_promise.set_value(e); };
        replay_episode(rc);
    });
    RecordConfig cfg;
    cfg.out = dst;
    cfg.connect = ep_future.get();
    cfg.registry = testing_support::camera_tactile_registry();
    cfg.duration = 20s;
    record_session(cfg);
    replayer.join();
    Episode a = read_episode(src), b = read_episode(dst);
    ASSERT_EQ(a.records.size(), b.records.size());
    for (std::uint8_t id = 0; id < 3; ++id) EXPECT_EQ(count_on(a, id), count_on(b, id));
    // per channel, payload bytes and timestamps in order
    for (std::uint8_t id = 0; id < 3; ++id) {
        std::vector<const EpisodeRecord*> ra, rb;
        for (const auto& r : a.records) {
            if (r.channel_id == id) ra.push_back(&r);
        }
        for (const auto& r : b.records) {
            if (r.channel_id == id) rb.push_back(&r);
        }
        ASSERT_EQ(ra.size(), rb.size());
        for (std::size_t i = 0; i < ra.size(); ++i) {
            ASSERT_EQ(*ra[i], *rb[i]);
        }
    }
}
