// Constructed episodes with a known presence timeline.
#pragma once

#include <filesystem>

#include "oracles.hpp"
#include "rapid/mask.hpp"
#include "rapid/recorder.hpp"
#include "rapid/sync.hpp"

namespace testing_support {

inline rapid::Registry camera_tactile_registry() {
    return rapid::load_registry(R"([device.cam_wrist]
vid = "0x2b03"
pid = "0x0001"
serial = "CAM001"
node = "cam"
topic = "/rapid/camera/wrist"
shape = [4, 4]

[device.tac_left]
vid = "0x1234"
pid = "0x5678"
serial = "TACL001"
node = "tac"
topic = "/rapid/tactile/left"
shape = [2, 3]
)");
}

struct ConstructedEpisode {
    std::vector<oracle::TraceMask> masks;
    std::uint64_t camera_frames = 0;
    std::uint64_t tactile_frames = 0;
};

/// Eight seconds: camera at 30 Hz throughout, tactile at 60 Hz except while unplugged in
/// [unplug_s, unplug_s + gap_s). A mask record every keepalive period.
inline ConstructedEpisode write_episode(const std::filesystem::path& path, double unplug_s = 3.0, double gap_s = 2.0,
                                        std::int64_t keepalive_ns = 10'000'000) {
    using namespace rapid;
    Registry reg = camera_tactile_registry();
    EpisodeWriter w(path, manifest_for_registry(reg, {}, 30.0, "2026-02-05T10:30:00Z"));
    ConstructedEpisode out;
    const std::int64_t t0 = 5'000'000'000;
    const std::int64_t unplug = t0 + static_cast<std::int64_t>(unplug_s * 1e9);
    const std::int64_t replug = unplug + static_cast<std::int64_t>(gap_s * 1e9);
    std::int64_t next_mask = t0, next_cam = t0, next_tac = t0;
    std::uint64_t seq = 0, cam_n = 0, tac_n = 0;
    const std::int64_t end = t0 + 8'000'000'000;
    while (true) {
        std::int64_t t = std::min({next_mask, next_cam, next_tac});
        if (t >= end) break;
        const bool tac_on = t < unplug || t >= replug;
        if (t == next_mask) {
            PhysicalMask m;
            m.device_count = 2;
            m.mask = tac_on ? 0b11 : 0b01;
            m.timestamp_ns = static_cast<std::uint64_t>(t);
            m.sequence = ++seq;
            auto rec = encode_mask(m);
            w.append(EpisodeRecord{kMaskChannelId, t, {rec.begin(), rec.end()}});
            out.masks.push_back({t, m.mask});
            next_mask += keepalive_ns;
        } else if (t == next_cam) {
            std::vector<float> px(16, static_cast<float>(cam_n % 256) / 255.0f);
            w.append(EpisodeRecord{1, t, encode_payload(px)});
            ++cam_n;
            next_cam = t0 + static_cast<std::int64_t>(static_cast<double>(cam_n) * 1e9 / 30.0);
        } else {
            if (tac_on) {
                std::vector<float> v(6, static_cast<float>(tac_n));
                w.append(EpisodeRecord{2, t, encode_payload(v)});
                ++out.tactile_frames;
            }
            ++tac_n;
            next_tac = t0 + static_cast<std::int64_t>(static_cast<double>(tac_n) * 1e9 / 60.0);
        }
    }
    out.camera_frames = cam_n;
    w.close();
    return out;
}

}  // namespace testing_support
