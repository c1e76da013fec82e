#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rapid/clock.hpp"
#include "rapid/eventbus.hpp"
#include "rapid/supervisor.hpp"

namespace rapid {

enum class Condition { Full, NoTactile, HotUnplug, HotReplug };
enum class ConsumerMode { MaskAware, StaticConfig };
enum class ScenarioStatus { Normal, Degraded, Crash };

std::string_view to_string(Condition c) noexcept;
std::string_view to_string(ConsumerMode m) noexcept;
std::string_view to_string(ScenarioStatus s) noexcept;
/// Accepts "full", "no-tactile", "hot-unplug", "hot-replug" (case-insensitive, '_' or '-').
/// Throws Error{ParseError}.
Condition parse_condition(std::string_view text);
/// "mask-aware" or "static". Throws Error{ParseError}.
ConsumerMode parse_mode(std::string_view text);

struct TimelineEvent {
    Duration offset{};
    HotplugKind kind = HotplugKind::Attach;
    std::string device;
};

struct ScenarioSpec {
    Condition condition = Condition::Full;
    ConsumerMode mode = ConsumerMode::MaskAware;
    std::vector<TimelineEvent> timeline;  // offsets from the start of the run
    Duration duration = std::chrono::seconds(6);
    Duration window = std::chrono::milliseconds(25);
};

/// Standard timeline: unplug at a quarter of the run, replug one third of a second later.
ScenarioSpec make_scenario(Condition condition, ConsumerMode mode, Duration duration = std::chrono::seconds(6));

/// Device names used by the harness.
inline constexpr std::string_view kScenarioCamera = "cam_wrist";
inline constexpr std::string_view kScenarioTactile = "tac_left";

struct ChannelOutcome {
    std::string name;
    std::uint64_t present = 0;
    std::uint64_t absent = 0;
    std::uint64_t stale = 0;
    double zero_filled_fraction = 0.0;
};

struct PresenceChange {
    Duration at{};  // from the start of the run
    std::string channel;
    bool present = false;
};

struct ScenarioOutcome {
    Condition condition = Condition::Full;
    ConsumerMode mode = ConsumerMode::MaskAware;
    ScenarioStatus status = ScenarioStatus::Normal;
    std::uint64_t observations_emitted = 0;
    std::uint64_t confident_decisions = 0;
    std::uint64_t degraded_decisions = 0;
    std::vector<ChannelOutcome> channels;
    std::vector<PresenceChange> transitions;
    std::string crash_reason;
    Duration elapsed{};
    Duration max_gap{};            // largest spacing between consecutive observations
    std::size_t vector_length = 0; // constant across the run
    bool fixed_dimension = true;

    const ChannelOutcome* channel(std::string_view name) const;
    /// Run-length compressed presence sequence of one channel, e.g. {1, 0, 1}.
    std::vector<int> presence_pattern(std::string_view channel) const;
    nlohmann::json to_json() const;
};

struct HarnessConfig {
    std::filesystem::path vsensor;  // empty: find_vsensor()
    std::filesystem::path work_dir; // empty: a fresh temporary directory
    SupervisorConfig supervisor;
    Duration startup_timeout = std::chrono::seconds(10);
};

/// $RAPID_VSENSOR, else rapid-vsensor beside the running executable or in ../tools, else PATH.
std::filesystem::path find_vsensor();

/// Runs a daemon with real virtual-sensor children, drives the timeline through the control
/// socket and scores the consumer. Throws Error{HarnessError} when the setup itself fails.
ScenarioOutcome run_scenario(const ScenarioSpec& spec, const HarnessConfig& harness = {});

// ---- bench --------------------------------------------------------------------------------

struct LatencyStats {
    std::size_t count = 0;
    double min_ms = 0, p50_ms = 0, p90_ms = 0, p99_ms = 0, max_ms = 0, mean_ms = 0;

    static LatencyStats from(std::vector<double> samples_ms);
    nlohmann::json to_json() const;
};

struct BenchConfig {
    int transitions = 1000;
    int devices = 16;
    Duration cooldown = std::chrono::milliseconds(100);
    Duration rate_window = std::chrono::seconds(2);
    int first_data_trials = 3;
    std::filesystem::path vsensor;  // empty: find_vsensor(); first-data skipped if missing
    std::filesystem::path work_dir;
};

struct BenchReport {
    LatencyStats detach_visible;  // injection -> bit cleared in the shared file
    LatencyStats attach_visible;  // injection -> bit set (includes first heartbeat)
    double publish_rate_hz = 0;
    std::optional<LatencyStats> first_data;  // attach -> first camera frame at a subscriber
    std::uint64_t read_failures = 0;

    nlohmann::json to_json() const;
    std::string to_text() const;
};

/// Throws Error{HarnessError}.
BenchReport run_bench(const BenchConfig& config);

}  // namespace rapid
