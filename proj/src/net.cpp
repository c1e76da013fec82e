#include "net.hpp"

#include <cerrno>
#include <cstring>

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include "rapid/error.hpp"

namespace rapid::net {

namespace {

sockaddr_un unix_addr(const std::filesystem::path& path) {
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    const std::string& s = path.native();
    if (s.size() >= sizeof(addr.sun_path)) {
        throw Error(Errc::SocketError, "socket path too long: " + s);
    }
    std::memcpy(addr.sun_path, s.c_str(), s.size() + 1);
    return addr;
}

sockaddr_in inet_addr_of(const HostPort& where) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(where.port);
    std::string host = where.host.empty() ? "0.0.0.0" : where.host;
    if (host == "localhost") host = "127.0.0.1";
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        addrinfo hints{};
        hints.ai_family = AF_INET;
        addrinfo* res = nullptr;
        if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
            throw Error(Errc::ConnectFailure, "cannot resolve host '" + host + "'");
        }
        addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
        ::freeaddrinfo(res);
    }
    return addr;
}

int poll_ms(Duration d) {
    auto ms = std::chrono::ceil<std::chrono::milliseconds>(d).count();
    if (ms < 0) return 0;
    if (ms > 1'000'000) return 1'000'000;
    return static_cast<int>(ms);
}

}  // namespace

void Fd::reset(int fd) noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = fd;
}

HostPort parse_host_port(std::string_view text) {
    auto colon = text.rfind(':');
    if (colon == std::string_view::npos) throw Error(Errc::ParseError, "expected host:port, got '" + std::string(text) + "'");
    HostPort hp;
    hp.host = std::string(text.substr(0, colon));
    std::string port(text.substr(colon + 1));
    try {
        std::size_t used = 0;
        unsigned long p = std::stoul(port, &used);
        if (used != port.size() || p > 65535) throw std::out_of_range("port");
        hp.port = static_cast<std::uint16_t>(p);
    } catch (const std::exception&) {
        throw Error(Errc::ParseError, "bad port in '" + std::string(text) + "'");
    }
    if (hp.host.empty()) hp.host = "127.0.0.1";
    return hp;
}

void set_nonblocking(int fd) {
    int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

void set_nodelay(int fd) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

Fd unix_stream_listen(const std::filesystem::path& path) {
    sockaddr_un addr = unix_addr(path);
    Fd fd(::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!fd) throw Error(Errc::SocketError, std::string("socket: ") + std::strerror(errno));
    ::unlink(path.c_str());
    if (::bind(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        throw Error(Errc::SocketError, "bind " + path.string() + ": " + std::strerror(errno));
    }
    if (::listen(fd.get(), 16) != 0) {
        throw Error(Errc::SocketError, "listen " + path.string() + ": " + std::strerror(errno));
    }
    return fd;
}

Fd unix_stream_connect(const std::filesystem::path& path) {
    sockaddr_un addr = unix_addr(path);
    Fd fd(::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!fd) throw Error(Errc::ConnectFailure, std::string("socket: ") + std::strerror(errno));
    if (::connect(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        throw Error(Errc::ConnectFailure, "connect " + path.string() + ": " + std::strerror(errno));
    }
    return fd;
}

Fd unix_dgram_bind(const std::filesystem::path& path) {
    sockaddr_un addr = unix_addr(path);
    Fd fd(::socket(AF_UNIX, SOCK_DGRAM | SOCK_CLOEXEC, 0));
    if (!fd) throw Error(Errc::SocketError, std::string("socket: ") + std::strerror(errno));
    ::unlink(path.c_str());
    if (::bind(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        throw Error(Errc::SocketError, "bind " + path.string() + ": " + std::strerror(errno));
    }
    return fd;
}

Fd unix_dgram_socket() {
    Fd fd(::socket(AF_UNIX, SOCK_DGRAM | SOCK_CLOEXEC, 0));
    if (!fd) throw Error(Errc::SocketError, std::string("socket: ") + std::strerror(errno));
    return fd;
}

bool unix_dgram_send(int fd, const std::filesystem::path& path, std::string_view msg) {
    sockaddr_un addr = unix_addr(path);
    return ::sendto(fd, msg.data(), msg.size(), MSG_DONTWAIT | MSG_NOSIGNAL, reinterpret_cast<sockaddr*>(&addr),
                    sizeof addr) == static_cast<ssize_t>(msg.size());
}

Fd tcp_listen(const HostPort& where) {
    sockaddr_in addr = inet_addr_of(where);
    Fd fd(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!fd) throw Error(Errc::SocketError, std::string("socket: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        throw Error(Errc::SocketError, "bind " + where.to_string() + ": " + std::strerror(errno));
    }
    if (::listen(fd.get(), 64) != 0) {
        throw Error(Errc::SocketError, "listen " + where.to_string() + ": " + std::strerror(errno));
    }
    return fd;
}

Fd tcp_connect(const HostPort& where, Duration timeout) {
    sockaddr_in addr = inet_addr_of(where);
    Fd fd(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC | SOCK_NONBLOCK, 0));
    if (!fd) throw Error(Errc::ConnectFailure, std::string("socket: ") + std::strerror(errno));
    int rc = ::connect(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr);
    if (rc != 0 && errno != EINPROGRESS) {
        throw Error(Errc::ConnectFailure, "connect " + where.to_string() + ": " + std::strerror(errno));
    }
    if (rc != 0) {
        pollfd p{fd.get(), POLLOUT, 0};
        int n = ::poll(&p, 1, poll_ms(timeout));
        if (n <= 0) throw Error(Errc::ConnectFailure, "connect " + where.to_string() + ": timed out");
        int err = 0;
        socklen_t len = sizeof err;
        ::getsockopt(fd.get(), SOL_SOCKET, SO_ERROR, &err, &len);
        if (err != 0) throw Error(Errc::ConnectFailure, "connect " + where.to_string() + ": " + std::strerror(err));
    }
    set_nodelay(fd.get());
    return fd;
}

HostPort local_address(int fd) {
    sockaddr_in addr{};
    socklen_t len = sizeof addr;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    char buf[INET_ADDRSTRLEN] = {};
    ::inet_ntop(AF_INET, &addr.sin_addr, buf, sizeof buf);
    return HostPort{buf, ntohs(addr.sin_port)};
}

bool write_all(int fd, const void* data, std::size_t len, Duration timeout) {
    const auto* p = static_cast<const char*>(data);
    const MonoTime deadline = mono_now() + timeout;
    while (len > 0) {
        ssize_t n = ::send(fd, p, len, MSG_NOSIGNAL | MSG_DONTWAIT);
        if (n > 0) {
            p += n;
            len -= static_cast<std::size_t>(n);
            continue;
        }
        if (n < 0 && errno == EINTR) continue;
        if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) {
            Duration left = deadline - mono_now();
            if (left <= Duration::zero()) return false;
            pollfd pfd{fd, POLLOUT, 0};
            ::poll(&pfd, 1, std::max(1, poll_ms(left)));
            continue;
        }
        return false;
    }
    return true;
}

bool wait_readable(int fd, Duration timeout) {
    pollfd p{fd, POLLIN, 0};
    int n;
    do {
        n = ::poll(&p, 1, poll_ms(timeout));
    } while (n < 0 && errno == EINTR);
    return n > 0;
}

}  // namespace rapid::net
