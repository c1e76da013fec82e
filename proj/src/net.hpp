#pragma once

// Internal socket helpers shared by the control socket, transport and heartbeat paths.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "rapid/clock.hpp"

namespace rapid::net {

/// Owns a file descriptor.
class Fd {
public:
    Fd() = default;
    explicit Fd(int fd) noexcept : fd_(fd) {}
    ~Fd() { reset(); }
    Fd(Fd&& o) noexcept : fd_(o.release()) {}
    Fd& operator=(Fd&& o) noexcept {
        if (this != &o) reset(o.release());
        return *this;
    }
    Fd(const Fd&) = delete;
    Fd& operator=(const Fd&) = delete;

    int get() const noexcept { return fd_; }
    explicit operator bool() const noexcept { return fd_ >= 0; }
    int release() noexcept {
        int f = fd_;
        fd_ = -1;
        return f;
    }
    void reset(int fd = -1) noexcept;

private:
    int fd_ = -1;
};

struct HostPort {
    std::string host;
    std::uint16_t port = 0;

    std::string to_string() const { return host + ":" + std::to_string(port); }
};

/// "127.0.0.1:7000" or ":7000". Throws Error{ParseError}.
HostPort parse_host_port(std::string_view text);

void set_nonblocking(int fd);
void set_nodelay(int fd);

/// Throws Error{SocketError}.
Fd unix_stream_listen(const std::filesystem::path& path);
/// Throws Error{ConnectFailure}.
Fd unix_stream_connect(const std::filesystem::path& path);
Fd unix_dgram_bind(const std::filesystem::path& path);
Fd unix_dgram_socket();
bool unix_dgram_send(int fd, const std::filesystem::path& path, std::string_view msg);

/// Binds and listens; port 0 picks an ephemeral port. Throws Error{SocketError}.
Fd tcp_listen(const HostPort& where);
/// Throws Error{ConnectFailure} (refused, unreachable, or timeout).
Fd tcp_connect(const HostPort& where, Duration timeout);
HostPort local_address(int fd);

/// Writes everything, waiting for writability up to `timeout` overall. Returns false on
/// error or timeout.
bool write_all(int fd, const void* data, std::size_t len, Duration timeout);

/// Waits until fd is readable. Returns false on timeout.
bool wait_readable(int fd, Duration timeout);

}  // namespace rapid::net
