#include "rapid/heartbeat.hpp"

#include <charconv>
#include <sstream>

#include <sys/socket.h>
#include <unistd.h>

#include "net.hpp"

namespace rapid {

std::string encode_heartbeat(const Heartbeat& hb) {
    std::string out = "HB " + hb.device + " " + std::to_string(hb.seq);
    if (!hb.endpoint.empty()) out += " " + hb.endpoint;
    return out;
}

std::optional<Heartbeat> parse_heartbeat(std::string_view datagram) {
    std::istringstream is{std::string(datagram)};
    std::string tag, seq, extra;
    Heartbeat hb;
    if (!(is >> tag >> hb.device >> seq) || tag != "HB") return std::nullopt;
    auto [p, ec] = std::from_chars(seq.data(), seq.data() + seq.size(), hb.seq);
    if (ec != std::errc{} || p != seq.data() + seq.size()) return std::nullopt;
    is >> hb.endpoint;
    if (is >> extra) return std::nullopt;
    return hb;
}

HeartbeatSender::HeartbeatSender(std::filesystem::path socket)
    : socket_(std::move(socket)), fd_(net::unix_dgram_socket().release()) {}

HeartbeatSender::~HeartbeatSender() {
    if (fd_ >= 0) ::close(fd_);
}

bool HeartbeatSender::send(const Heartbeat& hb) { return net::unix_dgram_send(fd_, socket_, encode_heartbeat(hb)); }

HeartbeatReceiver::HeartbeatReceiver(std::filesystem::path socket)
    : socket_(std::move(socket)), fd_(net::unix_dgram_bind(socket_).release()) {
    net::set_nonblocking(fd_);
}

HeartbeatReceiver::~HeartbeatReceiver() {
    if (fd_ >= 0) ::close(fd_);
    std::error_code ec;
    std::filesystem::remove(socket_, ec);
}

std::vector<Heartbeat> HeartbeatReceiver::drain() {
    std::vector<Heartbeat> out;
    char buf[512];
    for (;;) {
        ssize_t n = ::recv(fd_, buf, sizeof buf, MSG_DONTWAIT);
        if (n < 0) break;
        if (auto hb = parse_heartbeat(std::string_view(buf, static_cast<std::size_t>(n)))) out.push_back(std::move(*hb));
    }
    return out;
}

}  // namespace rapid
