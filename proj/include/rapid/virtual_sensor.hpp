#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rapid/clock.hpp"

namespace rapid {

enum class PayloadKind { Camera, Tactile, Motor };

std::string_view to_string(PayloadKind kind) noexcept;
/// Throws Error{ParseError}.
PayloadKind parse_payload_kind(std::string_view text);

enum class Misbehavior { None, IgnoreTermination, CrashAfter, FreezeAfter };

struct MisbehaviorSpec {
    Misbehavior mode = Misbehavior::None;
    std::uint64_t after_frames = 0;

    friend bool operator==(const MisbehaviorSpec&, const MisbehaviorSpec&) = default;
};

/// "none", "ignore-term", "crash-after:N", "freeze-after:N" ("freeze" means after 0 frames).
/// Throws Error{ParseError}.
MisbehaviorSpec parse_misbehavior(std::string_view text);
std::string to_string(const MisbehaviorSpec& m);

struct VirtualSensorConfig {
    std::string name = "vsensor";
    std::string topic = "/rapid/vsensor";
    double rate_hz = 30.0;
    PayloadKind kind = PayloadKind::Camera;
    std::vector<std::size_t> shape;  // empty: the kind's default
    std::uint64_t seed = 1;
    MisbehaviorSpec misbehavior;
    /// Tactile only: frames [contact_frame, contact_frame + contact_frames) press the pad.
    std::optional<std::uint64_t> contact_frame;
    std::uint64_t contact_frames = 15;
    std::string bind = "127.0.0.1:0";
    std::filesystem::path heartbeat_socket;  // empty: no heartbeats
    Duration heartbeat_period = std::chrono::seconds(1);
    std::optional<std::string> beacon_destination;
    Duration run_for{0};  // zero: until told to stop

    std::vector<std::size_t> resolved_shape() const;
};

/// Throws Error{InvariantViolation} unless 0 < rate_hz <= 120 and the shape is non-empty.
void validate(const VirtualSensorConfig& config);

/// Frame n of the synthetic stream, fully determined by (seed, kind, shape, contact, n).
/// Camera and tactile values lie in [0, 1]. Tactile frames are constant outside contact.
std::vector<float> synth_frame(const VirtualSensorConfig& config, std::uint64_t n);

/// Region a tactile contact presses: the centred half of each of the last two dimensions.
bool in_contact_region(const std::vector<std::size_t>& shape, std::size_t flat_index);

struct VirtualSensorResult {
    int exit_code = 0;
    std::uint64_t frames = 0;
};

/// Publishes until stop_flag is set, run_for elapses or misbehaviour ends the run. The
/// ready callback receives the bound endpoint. Throws Error{ConnectFailure} when the
/// heartbeat socket is configured but unreachable at startup.
VirtualSensorResult run_virtual_sensor(const VirtualSensorConfig& config, const std::atomic<bool>& stop_flag,
                                       const std::function<void(const std::string&)>& ready = {});

}  // namespace rapid
