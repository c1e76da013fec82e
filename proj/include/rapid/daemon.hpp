#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "rapid/clock.hpp"
#include "rapid/eventbus.hpp"
#include "rapid/heartbeat.hpp"
#include "rapid/mask_channel.hpp"
#include "rapid/registry.hpp"
#include "rapid/supervisor.hpp"
#include "rapid/transport.hpp"

namespace rapid {

enum class ProcessBackend { Posix, Simulated };

struct DaemonConfig {
    Registry registry;
    SupervisorConfig supervisor;
    MaskChannel mask;
    std::filesystem::path control_socket = default_control_socket();
    std::filesystem::path heartbeat_socket;  // empty: control_socket + ".hb"
    /// Bind address for the /rapid/mask topic; nullopt disables it.
    std::optional<std::string> mask_topic_bind = std::string("127.0.0.1:0");
    int mask_topic_decimation = 5;  // every 5th 500 Hz tick, i.e. 100 Hz
    bool os_events = true;          // kernel uevents when available
    ProcessBackend backend = ProcessBackend::Posix;
    bool reap_orphans = false;  // become a subreaper and reap every child of this process
    std::map<std::string, std::string> child_env;

    std::filesystem::path resolved_heartbeat_socket() const;
};

/// Point-in-time view for the control socket's status command and the monitor.
struct DeviceStatus {
    std::string name;
    unsigned bit = 0;
    DeviceState state = DeviceState::Offline;
    bool attached = false;
    bool failed = false;
    int restart_count = 0;
    std::string topic;
    std::string endpoint;
    std::optional<int> pid;
};

struct StatusSnapshot {
    std::uint64_t sequence = 0;
    std::uint64_t mask_word = 0;
    unsigned device_count = 0;
    std::vector<DeviceStatus> devices;  // bit order
    std::vector<std::string> log;
    std::string mask_path;
    std::string mask_topic;

    nlohmann::json to_json(const Registry* registry = nullptr) const;
    /// Throws Error{ParseError}.
    static StatusSnapshot from_json(const nlohmann::json& j);
};

/// Everything the run subcommand starts: control socket, hot-plug intake, supervisor loop,
/// mask writer and mask topic. The supervisor is owned by one loop thread.
class Daemon {
public:
    /// Binds sockets and creates the mask file. Throws Error{IoError | SocketError}.
    explicit Daemon(DaemonConfig config);
    ~Daemon();

    Daemon(const Daemon&) = delete;
    Daemon& operator=(const Daemon&) = delete;

    void start();
    /// Graceful shutdown: terminates every supervised group (escalating after the grace
    /// period), then stops the writer and sockets. Idempotent.
    void stop();

    /// Enqueues an event as if it came from the OS. The reply runs on the loop thread.
    void submit(HotplugEvent event, InjectReply reply = {});
    /// Round trip through the loop thread. Throws Error{DaemonUnreachable} after stop.
    StatusSnapshot status(Duration timeout = std::chrono::seconds(2));

    const DaemonConfig& config() const noexcept { return config_; }
    std::string mask_topic_endpoint() const;
    std::uint64_t sequence() const;
    std::uint64_t presence_word() const noexcept { return presence_.load(); }
    bool running() const noexcept { return loop_.joinable(); }

private:
    void loop(std::stop_token stop);
    std::string handle_line(const std::string& line);
    void wake();
    StatusSnapshot snapshot_locked_loop() const;

    DaemonConfig config_;
    SteadyClock clock_;
    std::unique_ptr<ProcessControl> processes_;
    std::unique_ptr<Supervisor> supervisor_;
    EventQueue events_;
    std::unique_ptr<HeartbeatReceiver> heartbeats_;
    std::unique_ptr<UeventMonitor> uevents_;
    std::unique_ptr<Publisher> mask_topic_;
    std::unique_ptr<MaskPublisher> mask_;
    std::unique_ptr<LineServer> control_;
    std::atomic<std::uint64_t> presence_{0};
    std::atomic<std::uint64_t> ticks_{0};

    std::mutex status_mu_;
    std::vector<std::function<void(const StatusSnapshot&)>> status_waiters_;
    int wake_fd_ = -1;
    std::atomic<bool> stopping_{false};
    std::atomic<bool> stopped_{false};
    std::jthread loop_;
};

}  // namespace rapid
