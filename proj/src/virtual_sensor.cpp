#include "rapid/virtual_sensor.hpp"

#include <charconv>
#include <cmath>
#include <memory>
#include <numeric>
#include <thread>

#include "rapid/error.hpp"
#include "rapid/heartbeat.hpp"
#include "rapid/log.hpp"
#include "rapid/sync.hpp"
#include "rapid/transport.hpp"

namespace rapid {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

float unit(std::uint64_t h) { return static_cast<float>(h >> 40) / static_cast<float>(1u << 24); }

std::uint64_t parse_count(std::string_view s, std::string_view what) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) {
        throw Error(Errc::ParseError, "bad frame count in '" + std::string(what) + "'");
    }
    return v;
}

}  // namespace

std::string_view to_string(PayloadKind k) noexcept {
    switch (k) {
        case PayloadKind::Camera: return "camera";
        case PayloadKind::Tactile: return "tactile";
        case PayloadKind::Motor: return "motor";
    }
    return "?";
}

PayloadKind parse_payload_kind(std::string_view t) {
    if (t == "camera") return PayloadKind::Camera;
    if (t == "tactile") return PayloadKind::Tactile;
    if (t == "motor") return PayloadKind::Motor;
    throw Error(Errc::ParseError, "unknown payload kind '" + std::string(t) + "' (camera, tactile, motor)");
}

MisbehaviorSpec parse_misbehavior(std::string_view t) {
    if (t == "none") return {};
    if (t == "ignore-term") return {Misbehavior::IgnoreTermination, 0};
    if (t == "freeze") return {Misbehavior::FreezeAfter, 0};
    if (t.rfind("crash-after:", 0) == 0) return {Misbehavior::CrashAfter, parse_count(t.substr(12), t)};
    if (t.rfind("freeze-after:", 0) == 0) return {Misbehavior::FreezeAfter, parse_count(t.substr(13), t)};
    throw Error(Errc::ParseError,
                "unknown misbehaviour '" + std::string(t) + "' (none, ignore-term, crash-after:N, freeze-after:N)");
}

std::string to_string(const MisbehaviorSpec& m) {
    switch (m.mode) {
        case Misbehavior::None: return "none";
        case Misbehavior::IgnoreTermination: return "ignore-term";
        case Misbehavior::CrashAfter: return "crash-after:" + std::to_string(m.after_frames);
        case Misbehavior::FreezeAfter: return "freeze-after:" + std::to_string(m.after_frames);
    }
    return "?";
}

std::vector<std::size_t> VirtualSensorConfig::resolved_shape() const {
    if (!shape.empty()) return shape;
    switch (kind) {
        case PayloadKind::Camera: return {16, 16};
        case PayloadKind::Tactile: return {8, 8};
        case PayloadKind::Motor: return {6};
    }
    return {1};
}

void validate(const VirtualSensorConfig& c) {
    if (!(c.rate_hz > 0.0 && c.rate_hz <= 120.0)) {
        throw Error(Errc::InvariantViolation, "rate must be in (0, 120] Hz, got " + std::to_string(c.rate_hz));
    }
    auto s = c.resolved_shape();
    for (auto d : s) {
        if (d == 0) throw Error(Errc::InvariantViolation, "shape dimensions must be positive");
    }
}

bool in_contact_region(const std::vector<std::size_t>& shape, std::size_t idx) {
    if (shape.empty()) return false;
    std::size_t w = shape.back();
    std::size_t h = shape.size() >= 2 ? shape[shape.size() - 2] : 1;
    std::size_t col = idx % w;
    std::size_t row = (idx / w) % h;
    bool col_in = col >= w / 4 && col < w - w / 4;
    bool row_in = h == 1 || (row >= h / 4 && row < h - h / 4);
    return col_in && row_in;
}

std::vector<float> synth_frame(const VirtualSensorConfig& c, std::uint64_t n) {
    const auto shape = c.resolved_shape();
    const std::size_t count = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    std::vector<float> out(count);
    switch (c.kind) {
        case PayloadKind::Camera:
            for (std::size_t i = 0; i < count; ++i) out[i] = unit(splitmix64(c.seed ^ splitmix64(n * count + i)));
            break;
        case PayloadKind::Tactile: {
            const bool pressed = c.contact_frame && n >= *c.contact_frame && n < *c.contact_frame + c.contact_frames;
            for (std::size_t i = 0; i < count; ++i) {
                float base = 0.2f + 0.4f * unit(splitmix64(c.seed ^ splitmix64(i)));
                out[i] = pressed && in_contact_region(shape, i) ? base + 0.3f : base;
            }
            break;
        }
        case PayloadKind::Motor:
            for (std::size_t i = 0; i < count; ++i) {
                double phase = 6.283185307179586 * unit(splitmix64(c.seed ^ splitmix64(i)));
                out[i] = static_cast<float>(std::sin(phase + static_cast<double>(n) * 0.05 * static_cast<double>(i + 1)));
            }
            break;
    }
    return out;
}

VirtualSensorResult run_virtual_sensor(const VirtualSensorConfig& c, const std::atomic<bool>& stop_flag,
                                       const std::function<void(const std::string&)>& ready) {
    validate(c);
    Publisher pub(c.bind);
    std::unique_ptr<HeartbeatSender> hb;
    std::uint64_t hb_seq = 0;
    if (!c.heartbeat_socket.empty()) {
        hb = std::make_unique<HeartbeatSender>(c.heartbeat_socket);
        const MonoTime give_up = mono_now() + std::chrono::seconds(1);
        while (!hb->send(Heartbeat{c.name, hb_seq, pub.endpoint()})) {
            if (mono_now() >= give_up) {
                throw Error(Errc::ConnectFailure, "heartbeat socket " + c.heartbeat_socket.string() + " unreachable");
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
        ++hb_seq;
    }
    std::unique_ptr<BeaconAnnouncer> beacon;
    if (c.beacon_destination) {
        beacon = std::make_unique<BeaconAnnouncer>(Beacon{c.name, pub.endpoint(), {c.topic}}, *c.beacon_destination);
    }
    if (ready) ready(pub.endpoint());
    log()->debug("{}: publishing {} on {} at {} Hz", c.name, to_string(c.kind), pub.endpoint(), c.rate_hz);

    VirtualSensorResult result;
    const auto period = Duration(static_cast<std::int64_t>(std::llround(1e9 / c.rate_hz)));
    const MonoTime start = mono_now();
    MonoTime next_frame = start;
    MonoTime next_hb = start + c.heartbeat_period;
    bool frozen = false;
    while (!stop_flag.load()) {
        const MonoTime now = mono_now();
        if (c.run_for > Duration::zero() && now - start >= c.run_for) break;
        if (!frozen && c.misbehavior.mode == Misbehavior::FreezeAfter && result.frames >= c.misbehavior.after_frames) {
            log()->debug("{}: freezing after {} frames", c.name, result.frames);
            frozen = true;
        }
        if (frozen) {
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
            continue;
        }
        if (hb && now >= next_hb) {
            hb->send(Heartbeat{c.name, hb_seq++, pub.endpoint()});
            next_hb += c.heartbeat_period;
        }
        if (now >= next_frame) {
            auto payload = encode_payload(synth_frame(c, result.frames));
            pub.publish(c.topic, to_ns(now), payload);
            ++result.frames;
            next_frame += period;
            if (next_frame < now) next_frame = now + period;
            if (c.misbehavior.mode == Misbehavior::CrashAfter && result.frames >= c.misbehavior.after_frames) {
                pub.flush(std::chrono::milliseconds(200));
                result.exit_code = 70;
                return result;
            }
        }
        MonoTime wake = next_frame;
        if (hb && next_hb < wake) wake = next_hb;
        std::this_thread::sleep_until(std::min(wake, mono_now() + std::chrono::milliseconds(20)));
    }
    pub.flush(std::chrono::milliseconds(200));
    return result;
}

}  // namespace rapid
