#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "rapid/clock.hpp"
#include "rapid/eventbus.hpp"
#include "rapid/mask_channel.hpp"
#include "rapid/registry.hpp"

namespace rapid {

enum class DeviceState { Offline, AttachedStarting, Online, Backoff, Detaching };

std::string_view to_string(DeviceState s) noexcept;

struct SupervisorConfig {
    Duration cooldown = std::chrono::seconds(2);
    Duration grace = std::chrono::seconds(5);
    Duration backoff_base = std::chrono::seconds(1);
    int backoff_max_attempts = 5;
    Duration backoff_window = std::chrono::seconds(60);
    Duration heartbeat_interval = std::chrono::seconds(1);
    int heartbeat_misses_fatal = 3;

    /// backoff_base * 2^(attempt-1), attempt >= 1
    Duration backoff_delay(int attempt) const;
};

struct DeviceRuntimeState {
    DeviceState state = DeviceState::Offline;
    bool attached = false;
    bool failed = false;  // gave up after exhausting restarts; cleared by detach
    std::optional<int> pid;
    bool leader_exited = false;  // leader gone while the rest of its group drains
    int restart_count = 0;
    int spawn_count = 0;
    std::optional<MonoTime> backoff_deadline;
    std::optional<MonoTime> pending_spawn_at;  // attach deferred by cooldown
    std::optional<MonoTime> last_heartbeat;
    std::optional<MonoTime> last_detach;
    std::optional<MonoTime> last_crash;
    std::optional<MonoTime> term_sent_at;
    bool kill_sent = false;
    std::optional<std::string> device_path;
    std::string endpoint;  // data endpoint announced in heartbeats
    std::uint64_t heartbeat_seq = 0;
};

struct Transition {
    MonoTime at;
    std::string device;
    DeviceState from;
    DeviceState to;
    std::string reason;

    friend bool operator==(const Transition&, const Transition&) = default;
};

struct ExitReport {
    std::string device;
    bool graceful = true;
    Duration duration{0};
};

struct ReapedChild {
    int pid;
    int status;  // raw wait status
};

/// Side effects the supervisor needs from the OS. Tests substitute a scripted fake.
class ProcessControl {
public:
    virtual ~ProcessControl() = default;
    /// Starts the descriptor's on_attach command as leader of a new process group.
    /// Throws Error{SpawnFailure}.
    virtual int spawn(const DeviceDescriptor& device) = 0;
    virtual void signal_group(int pgid, int signo) = 0;
    /// True while any member of the group (other than reaped ones) is alive.
    virtual bool group_alive(int pgid) = 0;
    virtual void run_detach_hook(const DeviceDescriptor& device) = 0;
    /// Collects children that have exited since the last call.
    virtual std::vector<ReapedChild> reap() { return {}; }
};

/// Per-device lifecycle. Not thread-safe: one event-loop thread owns it and feeds it hot-plug
/// events, child exits, heartbeats and periodic ticks.
class Supervisor {
public:
    Supervisor(const Registry& registry, SupervisorConfig config, const Clock& clock, ProcessControl& processes);

    InjectOutcome handle_event(const HotplugEvent& event);
    void on_child_exit(int pid, int status);
    void on_heartbeat(std::string_view device, std::uint64_t seq, std::string_view endpoint = {});

    /// Timer work: grace escalation, deferred and backoff spawns, heartbeat checks and
    /// restart-window resets.
    void tick();
    void heartbeat_check();

    /// Bit i set iff the device with bit i is Online.
    PresenceState presence_word() const;

    /// Sends the graceful signal to every live group; tick() escalates after the grace period.
    void begin_shutdown();
    bool shutting_down() const noexcept { return shutting_down_; }
    bool all_children_exited() const;

    const Registry& registry() const noexcept { return registry_; }
    const SupervisorConfig& config() const noexcept { return config_; }
    const DeviceRuntimeState& state(std::string_view device) const;
    const DeviceRuntimeState& state_at(std::size_t index) const { return states_.at(index); }
    std::vector<int> live_pids() const;

    const std::vector<Transition>& transitions() const noexcept { return transitions_; }
    std::vector<ExitReport> take_exit_reports();

    /// Earliest pending timer, if any.
    std::optional<MonoTime> next_deadline() const;

private:
    std::size_t index_of(const DeviceDescriptor& d) const;
    std::optional<std::size_t> index_of_pid(int pid) const;
    std::optional<std::size_t> find_attached_for_detach(const HotplugEvent& event) const;
    void set_state(std::size_t i, DeviceState to, std::string reason);
    void spawn_now(std::size_t i);
    void handle_crash(std::size_t i, std::string reason);
    void finish_detach(std::size_t i);
    MonoTime now() const { return clock_.now(); }

    const Registry& registry_;
    SupervisorConfig config_;
    const Clock& clock_;
    ProcessControl& processes_;
    std::vector<DeviceRuntimeState> states_;
    std::set<int> reaping_;  // groups killed after a failure, awaiting their exit
    std::vector<Transition> transitions_;
    std::vector<ExitReport> exit_reports_;
    bool shutting_down_ = false;
};

}  // namespace rapid
