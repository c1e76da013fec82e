#include "rapid/eventbus.hpp"

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <vector>

#include <linux/netlink.h>
#include <poll.h>
#include <sys/eventfd.h>
#include <sys/socket.h>
#include <unistd.h>

#include "net.hpp"
#include "rapid/error.hpp"
#include "rapid/log.hpp"

namespace rapid {

namespace fs = std::filesystem;

std::string_view to_string(HotplugKind kind) noexcept {
    return kind == HotplugKind::Attach ? "attach" : "detach";
}

// ---- EventQueue ---------------------------------------------------------------------------

EventQueue::EventQueue(std::size_t capacity) : capacity_(capacity) {
    wake_fd_ = ::eventfd(0, EFD_NONBLOCK | EFD_CLOEXEC | EFD_SEMAPHORE);
    if (wake_fd_ < 0) throw Error(Errc::IoError, std::string("eventfd: ") + std::strerror(errno));
}

EventQueue::~EventQueue() {
    if (wake_fd_ >= 0) ::close(wake_fd_);
}

void EventQueue::push(QueuedEvent item) {
    {
        std::lock_guard lock(mu_);
        if (closed_) throw Error(Errc::ChannelClosed, "event queue closed");
        if (items_.size() >= capacity_) {
            throw Error(Errc::QueueFull, "event queue at capacity (" + std::to_string(capacity_) + ")");
        }
        items_.push_back(std::move(item));
    }
    std::uint64_t one = 1;
    [[maybe_unused]] auto n = ::write(wake_fd_, &one, sizeof one);
    cv_.notify_one();
}

std::optional<QueuedEvent> EventQueue::try_pop() {
    std::lock_guard lock(mu_);
    if (items_.empty()) return std::nullopt;
    QueuedEvent item = std::move(items_.front());
    items_.pop_front();
    std::uint64_t v;
    [[maybe_unused]] auto n = ::read(wake_fd_, &v, sizeof v);
    return item;
}

std::optional<QueuedEvent> EventQueue::pop_for(Duration timeout) {
    {
        std::unique_lock lock(mu_);
        cv_.wait_for(lock, timeout, [&] { return !items_.empty() || closed_; });
    }
    return try_pop();
}

void EventQueue::close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    cv_.notify_all();
}

bool EventQueue::closed() const {
    std::lock_guard lock(mu_);
    return closed_;
}

std::size_t EventQueue::size() const {
    std::lock_guard lock(mu_);
    return items_.size();
}

// ---- injection protocol -------------------------------------------------------------------

HotplugEvent parse_injection(const nlohmann::json& j) {
    if (!j.is_object()) throw Error(Errc::ParseError, "injection must be a JSON object");
    HotplugEvent ev;
    std::string kind = j.value("kind", "");
    if (kind == "attach" || kind == "Attach") {
        ev.kind = HotplugKind::Attach;
    } else if (kind == "detach" || kind == "Detach") {
        ev.kind = HotplugKind::Detach;
    } else {
        throw Error(Errc::ParseError, "kind must be 'attach' or 'detach'");
    }
    if (!j.contains("vid") || !j.contains("pid") || !j["vid"].is_string() || !j["pid"].is_string()) {
        throw Error(Errc::ParseError, "injection needs string vid and pid");
    }
    ev.identity.vid = parse_hex_id(j["vid"].get<std::string>());
    ev.identity.pid = parse_hex_id(j["pid"].get<std::string>());
    if (j.contains("serial") && j["serial"].is_string() && !j["serial"].get<std::string>().empty()) {
        ev.identity.serial = j["serial"].get<std::string>();
    }
    if (j.contains("device_path") && j["device_path"].is_string()) ev.device_path = j["device_path"].get<std::string>();
    ev.timestamp_ns = to_ns(mono_now());
    return ev;
}

nlohmann::json injection_to_json(const HotplugEvent& ev) {
    nlohmann::json j;
    j["kind"] = std::string(to_string(ev.kind));
    j["vid"] = format_hex_id(ev.identity.vid);
    j["pid"] = format_hex_id(ev.identity.pid);
    if (ev.identity.serial) j["serial"] = *ev.identity.serial;
    if (ev.device_path) j["device_path"] = *ev.device_path;
    return j;
}

nlohmann::json outcome_to_json(const InjectOutcome& o) {
    nlohmann::json j;
    j["ok"] = true;
    j["matched"] = o.matched;
    j["device"] = o.matched ? nlohmann::json(o.device) : nlohmann::json();
    j["state"] = o.state;
    j["note"] = o.note;
    return j;
}

// ---- LineServer ---------------------------------------------------------------------------

LineServer::LineServer(fs::path path, Handler handler) : path_(std::move(path)), handler_(std::move(handler)) {
    listen_fd_ = net::unix_stream_listen(path_).release();
    net::set_nonblocking(listen_fd_);
    stop_fd_ = ::eventfd(0, EFD_NONBLOCK | EFD_CLOEXEC);
}

LineServer::~LineServer() {
    stop();
    if (listen_fd_ >= 0) ::close(listen_fd_);
    if (stop_fd_ >= 0) ::close(stop_fd_);
    std::error_code ec;
    fs::remove(path_, ec);
}

void LineServer::start() {
    if (thread_.joinable()) return;
    thread_ = std::jthread([this](std::stop_token st) { loop(st); });
}

void LineServer::stop() {
    if (!thread_.joinable()) return;
    thread_.request_stop();
    std::uint64_t one = 1;
    [[maybe_unused]] auto n = ::write(stop_fd_, &one, sizeof one);
    thread_.join();
}

void LineServer::loop(std::stop_token stop) {
    struct Client {
        net::Fd fd;
        std::string in;
    };
    std::map<int, Client> clients;
    while (!stop.stop_requested()) {
        std::vector<pollfd> fds;
        fds.push_back({stop_fd_, POLLIN, 0});
        fds.push_back({listen_fd_, POLLIN, 0});
        for (auto& [fd, c] : clients) fds.push_back({fd, POLLIN, 0});
        int n = ::poll(fds.data(), fds.size(), 200);
        if (n < 0 && errno != EINTR) break;
        if (n <= 0) continue;
        if (fds[0].revents != 0) break;
        if (fds[1].revents & POLLIN) {
            for (;;) {
                int cfd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC | SOCK_NONBLOCK);
                if (cfd < 0) break;
                clients.emplace(cfd, Client{net::Fd(cfd), {}});
            }
        }
        for (std::size_t i = 2; i < fds.size(); ++i) {
            if (fds[i].revents == 0) continue;
            auto it = clients.find(fds[i].fd);
            if (it == clients.end()) continue;
            Client& c = it->second;
            char buf[4096];
            bool closed = false;
            for (;;) {
                ssize_t r = ::read(c.fd.get(), buf, sizeof buf);
                if (r > 0) {
                    c.in.append(buf, static_cast<std::size_t>(r));
                    continue;
                }
                if (r == 0) closed = true;
                if (r < 0 && errno == EINTR) continue;
                break;
            }
            std::size_t nl;
            while ((nl = c.in.find('\n')) != std::string::npos) {
                std::string line = c.in.substr(0, nl);
                c.in.erase(0, nl + 1);
                if (line.empty()) continue;
                std::string reply;
                try {
                    reply = handler_(line);
                } catch (const std::exception& e) {
                    reply = nlohmann::json{{"ok", false}, {"error", e.what()}}.dump();
                }
                reply += '\n';
                if (!net::write_all(c.fd.get(), reply.data(), reply.size(), std::chrono::seconds(2))) closed = true;
            }
            if (closed || c.in.size() > (1u << 20)) clients.erase(it);
        }
    }
}

// ---- LineClient ---------------------------------------------------------------------------

LineClient::LineClient(const fs::path& path, Duration timeout) : timeout_(timeout) {
    try {
        fd_ = net::unix_stream_connect(path).release();
    } catch (const Error& e) {
        throw Error(Errc::DaemonUnreachable, e.what());
    }
}

LineClient::~LineClient() {
    if (fd_ >= 0) ::close(fd_);
}

void LineClient::send_line(const std::string& line) {
    std::string out = line + "\n";
    if (!net::write_all(fd_, out.data(), out.size(), timeout_)) {
        throw Error(Errc::DaemonUnreachable, "control socket write failed");
    }
}

std::string LineClient::read_line() {
    const MonoTime deadline = mono_now() + timeout_;
    for (;;) {
        auto nl = buffer_.find('\n');
        if (nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            return line;
        }
        Duration left = deadline - mono_now();
        if (left <= Duration::zero() || !net::wait_readable(fd_, left)) {
            throw Error(Errc::DaemonUnreachable, "no reply from daemon");
        }
        char buf[4096];
        ssize_t r = ::read(fd_, buf, sizeof buf);
        if (r < 0 && errno == EINTR) continue;
        if (r <= 0) throw Error(Errc::DaemonUnreachable, "daemon closed the control socket");
        buffer_.append(buf, static_cast<std::size_t>(r));
    }
}

nlohmann::json LineClient::request(const nlohmann::json& req) {
    send_line(req.dump());
    std::string line = read_line();
    try {
        return nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, std::string("bad reply from daemon: ") + e.what());
    }
}

fs::path default_control_socket() {
    if (const char* env = std::getenv("RAPID_CONTROL_SOCKET"); env != nullptr && *env != '\0') return env;
    return fs::temp_directory_path() / "rapid_control.sock";
}

InjectOutcome inject(const fs::path& control_socket, const HotplugEvent& event) {
    LineClient client(control_socket);
    nlohmann::json reply = client.request(injection_to_json(event));
    if (!reply.value("ok", false)) {
        throw Error(Errc::ChannelClosed, reply.value("error", std::string("injection rejected")));
    }
    InjectOutcome out;
    out.matched = reply.value("matched", false);
    if (out.matched) out.device = reply.value("device", std::string());
    out.state = reply.value("state", std::string());
    out.note = reply.value("note", std::string());
    return out;
}

// ---- OS hot-plug adapter ------------------------------------------------------------------

std::optional<HotplugEvent> parse_uevent(std::span<const char> datagram, const fs::path& sysfs_root) {
    std::map<std::string, std::string> env;
    std::size_t pos = 0;
    bool first = true;
    while (pos < datagram.size()) {
        std::size_t end = pos;
        while (end < datagram.size() && datagram[end] != '\0') ++end;
        std::string field(datagram.data() + pos, end - pos);
        pos = end + 1;
        if (first) {
            first = false;
            if (field.find('@') != std::string::npos) continue;  // "add@/devices/..." summary line
        }
        auto eq = field.find('=');
        if (eq != std::string::npos) env[field.substr(0, eq)] = field.substr(eq + 1);
    }
    if (env["SUBSYSTEM"] != "usb" || env["DEVTYPE"] != "usb_device") return std::nullopt;
    const std::string& action = env["ACTION"];
    HotplugEvent ev;
    if (action == "add") {
        ev.kind = HotplugKind::Attach;
    } else if (action == "remove") {
        ev.kind = HotplugKind::Detach;
    } else {
        return std::nullopt;
    }
    // PRODUCT=<vid>/<pid>/<bcdDevice>, hex without leading zeros
    const std::string& product = env["PRODUCT"];
    auto s1 = product.find('/');
    if (s1 == std::string::npos) return std::nullopt;
    auto s2 = product.find('/', s1 + 1);
    try {
        ev.identity.vid = parse_hex_id(product.substr(0, s1));
        ev.identity.pid = parse_hex_id(product.substr(s1 + 1, s2 == std::string::npos ? std::string::npos : s2 - s1 - 1));
    } catch (const Error&) {
        return std::nullopt;
    }
    const std::string& devpath = env["DEVPATH"];
    if (!devpath.empty()) ev.device_path = devpath;
    if (ev.kind == HotplugKind::Attach && !devpath.empty()) {
        std::ifstream in(sysfs_root.string() + devpath + "/serial");
        std::string serial;
        if (in && std::getline(in, serial)) {
            while (!serial.empty() && (serial.back() == '\n' || serial.back() == ' ')) serial.pop_back();
            if (!serial.empty()) ev.identity.serial = serial;
        }
    }
    ev.timestamp_ns = to_ns(mono_now());
    return ev;
}

UeventMonitor::UeventMonitor() {
    fd_ = ::socket(AF_NETLINK, SOCK_DGRAM | SOCK_CLOEXEC | SOCK_NONBLOCK, NETLINK_KOBJECT_UEVENT);
    if (fd_ < 0) throw Error(Errc::Unsupported, std::string("netlink uevent socket: ") + std::strerror(errno));
    sockaddr_nl addr{};
    addr.nl_family = AF_NETLINK;
    addr.nl_pid = 0;
    addr.nl_groups = 1;  // kernel events
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        int err = errno;
        ::close(fd_);
        fd_ = -1;
        throw Error(Errc::Unsupported, std::string("netlink uevent bind: ") + std::strerror(err));
    }
}

UeventMonitor::~UeventMonitor() {
    if (fd_ >= 0) ::close(fd_);
}

std::optional<HotplugEvent> UeventMonitor::read_event() {
    char buf[8192];
    ssize_t n = ::recv(fd_, buf, sizeof buf, MSG_DONTWAIT);
    if (n <= 0) return std::nullopt;
    return parse_uevent(std::span<const char>(buf, static_cast<std::size_t>(n)));
}

}  // namespace rapid
