#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "rapid/clock.hpp"
#include "rapid/registry.hpp"

namespace rapid {

enum class HotplugKind { Attach, Detach };

std::string_view to_string(HotplugKind kind) noexcept;

struct HotplugEvent {
    HotplugKind kind = HotplugKind::Attach;
    DeviceIdentity identity;
    std::optional<std::string> device_path;
    std::int64_t timestamp_ns = 0;
};

/// What the supervisor did with an event, echoed back to injectors.
struct InjectOutcome {
    bool matched = false;
    std::string device;  // empty when unmatched
    std::string state;
    std::string note;    // "orphan detach", "deferred by cooldown", ...
};

using InjectReply = std::function<void(const InjectOutcome&)>;

struct QueuedEvent {
    HotplugEvent event;
    InjectReply reply;  // optional
};

/// Bounded multi-producer single-consumer queue. Exposes an eventfd that is readable while
/// items are pending, so the consumer can poll() it alongside other descriptors.
class EventQueue {
public:
    explicit EventQueue(std::size_t capacity = 1024);
    ~EventQueue();

    EventQueue(const EventQueue&) = delete;
    EventQueue& operator=(const EventQueue&) = delete;

    /// Throws Error{QueueFull} at capacity, Error{ChannelClosed} after close().
    void push(QueuedEvent item);
    std::optional<QueuedEvent> try_pop();
    std::optional<QueuedEvent> pop_for(Duration timeout);

    void close();
    bool closed() const;
    std::size_t size() const;
    int wake_fd() const noexcept { return wake_fd_; }

private:
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<QueuedEvent> items_;
    std::size_t capacity_;
    bool closed_ = false;
    int wake_fd_ = -1;
};

/// {"kind":"attach","vid":"0x1234","pid":"0x5678","serial":"TACL001"}. Throws Error{ParseError|BadIdentity}.
HotplugEvent parse_injection(const nlohmann::json& line);
nlohmann::json injection_to_json(const HotplugEvent& event);
nlohmann::json outcome_to_json(const InjectOutcome& outcome);

/// Unix stream socket speaking one JSON object per line in each direction. The handler
/// receives a request line and returns the reply line (without newline).
class LineServer {
public:
    using Handler = std::function<std::string(const std::string& line)>;

    /// Binds and listens immediately; replaces a stale socket file. Throws Error{SocketError}.
    LineServer(std::filesystem::path path, Handler handler);
    ~LineServer();

    LineServer(const LineServer&) = delete;
    LineServer& operator=(const LineServer&) = delete;

    void start();
    void stop();
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    void loop(std::stop_token stop);

    std::filesystem::path path_;
    Handler handler_;
    int listen_fd_ = -1;
    int stop_fd_ = -1;
    std::jthread thread_;
};

/// Client side of the control socket.
class LineClient {
public:
    /// Throws Error{DaemonUnreachable}.
    explicit LineClient(const std::filesystem::path& path, Duration timeout = std::chrono::seconds(5));
    ~LineClient();

    LineClient(const LineClient&) = delete;
    LineClient& operator=(const LineClient&) = delete;

    void send_line(const std::string& line);
    /// Throws Error{DaemonUnreachable} on EOF or timeout.
    std::string read_line();
    nlohmann::json request(const nlohmann::json& req);

private:
    int fd_ = -1;
    Duration timeout_;
    std::string buffer_;
};

/// $RAPID_CONTROL_SOCKET or <temp>/rapid_control.sock.
std::filesystem::path default_control_socket();

/// Sends one injection through a control socket and returns the daemon's outcome.
InjectOutcome inject(const std::filesystem::path& control_socket, const HotplugEvent& event);

/// Translates one kernel uevent datagram ("add@/devices/...\0ACTION=add\0...") for a USB device
/// into a HotplugEvent; nullopt for anything else. Serial is read from
/// <sysfs_root><DEVPATH>/serial on add and left absent when unreadable.
std::optional<HotplugEvent> parse_uevent(std::span<const char> datagram,
                                         const std::filesystem::path& sysfs_root = "/sys");

/// Kernel hot-plug notifications over a NETLINK_KOBJECT_UEVENT socket.
class UeventMonitor {
public:
    /// Throws Error{Unsupported} when the platform has no such facility.
    UeventMonitor();
    ~UeventMonitor();

    UeventMonitor(const UeventMonitor&) = delete;
    UeventMonitor& operator=(const UeventMonitor&) = delete;

    int fd() const noexcept { return fd_; }
    /// Reads one datagram (non-blocking); nullopt when nothing relevant arrived.
    std::optional<HotplugEvent> read_event();

private:
    int fd_ = -1;
};

}  // namespace rapid
