#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rapid {

/// Liveness datagram from a supervised publisher: "HB <device> <seq> [<host:port>]".
struct Heartbeat {
    std::string device;
    std::uint64_t seq = 0;
    std::string endpoint;  // data endpoint, may be empty

    friend bool operator==(const Heartbeat&, const Heartbeat&) = default;
};

std::string encode_heartbeat(const Heartbeat& hb);
std::optional<Heartbeat> parse_heartbeat(std::string_view datagram);

class HeartbeatSender {
public:
    /// Throws Error{SocketError}.
    explicit HeartbeatSender(std::filesystem::path socket);
    ~HeartbeatSender();

    HeartbeatSender(const HeartbeatSender&) = delete;
    HeartbeatSender& operator=(const HeartbeatSender&) = delete;

    /// False when the receiver is not there (yet).
    bool send(const Heartbeat& hb);

private:
    std::filesystem::path socket_;
    int fd_ = -1;
};

class HeartbeatReceiver {
public:
    /// Binds the datagram socket, replacing a stale file. Throws Error{SocketError}.
    explicit HeartbeatReceiver(std::filesystem::path socket);
    ~HeartbeatReceiver();

    HeartbeatReceiver(const HeartbeatReceiver&) = delete;
    HeartbeatReceiver& operator=(const HeartbeatReceiver&) = delete;

    int fd() const noexcept { return fd_; }
    const std::filesystem::path& path() const noexcept { return socket_; }
    /// Everything pending, without blocking. Malformed datagrams are skipped.
    std::vector<Heartbeat> drain();

private:
    std::filesystem::path socket_;
    int fd_ = -1;
};

}  // namespace rapid
