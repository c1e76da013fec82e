#include "rapid/transport.hpp"

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <set>
#include <sstream>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/eventfd.h>
#include <sys/socket.h>
#include <unistd.h>

#include "net.hpp"
#include "rapid/error.hpp"
#include "rapid/log.hpp"

namespace rapid {

namespace {

constexpr std::uint8_t kMagic[4] = {0x52, 0x4D, 0x53, 0x47};  // "RMSG"
constexpr std::size_t kFixedHeader = 4 + 1 + 2;
constexpr std::size_t kFixedTrailer = 8 + 8 + 4;

template <typename T>
void append_le(std::vector<std::uint8_t>& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(v) >> (8 * i)));
}

template <typename T>
T read_le(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return static_cast<T>(v);
}

sockaddr_in to_sockaddr(const net::HostPort& hp) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(hp.port);
    if (::inet_pton(AF_INET, hp.host.c_str(), &addr.sin_addr) != 1) {
        throw Error(Errc::SocketError, "bad IPv4 address '" + hp.host + "'");
    }
    return addr;
}

}  // namespace

// ---- codec --------------------------------------------------------------------------------

std::vector<std::uint8_t> encode_frame(const MessageEnvelope& env) {
    if (env.payload.size() > kMaxPayload) {
        throw Error(Errc::FrameTooLarge, "payload of " + std::to_string(env.payload.size()) + " bytes exceeds 16 MiB");
    }
    if (env.topic.size() > kMaxTopicLength) throw Error(Errc::FrameTooLarge, "topic longer than 4096 bytes");
    std::vector<std::uint8_t> out;
    out.reserve(kFixedHeader + env.topic.size() + kFixedTrailer + env.payload.size());
    for (std::uint8_t b : kMagic) out.push_back(b);
    out.push_back(kFrameVersion);
    append_le(out, static_cast<std::uint16_t>(env.topic.size()));
    out.insert(out.end(), env.topic.begin(), env.topic.end());
    append_le(out, env.seq);
    append_le(out, static_cast<std::uint64_t>(env.timestamp_ns));
    append_le(out, static_cast<std::uint32_t>(env.payload.size()));
    out.insert(out.end(), env.payload.begin(), env.payload.end());
    return out;
}

void FrameDecoder::feed(std::span<const std::uint8_t> bytes) {
    if (pos_ > 0 && pos_ >= buf_.size() / 2) {
        buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(pos_));
        pos_ = 0;
    }
    buf_.insert(buf_.end(), bytes.begin(), bytes.end());
}

void FrameDecoder::skip_to_next_magic() {
    ++corrupt_;
    std::size_t i = pos_ + 1;
    for (; i + 4 <= buf_.size(); ++i) {
        if (std::memcmp(buf_.data() + i, kMagic, 4) == 0) break;
    }
    pos_ = std::min(i, buf_.size());
}

std::optional<MessageEnvelope> FrameDecoder::next() {
    for (;;) {
        std::size_t avail = buf_.size() - pos_;
        if (avail < kFixedHeader) return std::nullopt;
        const std::uint8_t* p = buf_.data() + pos_;
        if (std::memcmp(p, kMagic, 4) != 0 || p[4] != kFrameVersion) {
            skip_to_next_magic();
            continue;
        }
        std::size_t topic_len = read_le<std::uint16_t>(p + 5);
        if (topic_len > kMaxTopicLength) {
            skip_to_next_magic();
            continue;
        }
        if (avail < kFixedHeader + topic_len + kFixedTrailer) return std::nullopt;
        const std::uint8_t* t = p + kFixedHeader + topic_len;
        std::size_t payload_len = read_le<std::uint32_t>(t + 16);
        if (payload_len > kMaxPayload) {
            skip_to_next_magic();
            continue;
        }
        std::size_t total = kFixedHeader + topic_len + kFixedTrailer + payload_len;
        if (avail < total) return std::nullopt;
        MessageEnvelope env;
        env.topic.assign(reinterpret_cast<const char*>(p + kFixedHeader), topic_len);
        env.seq = read_le<std::uint64_t>(t);
        env.timestamp_ns = static_cast<std::int64_t>(read_le<std::uint64_t>(t + 8));
        env.payload.assign(t + kFixedTrailer, t + kFixedTrailer + payload_len);
        pos_ += total;
        return env;
    }
}

// ---- Publisher ----------------------------------------------------------------------------

struct Publisher::Connection {
    net::Fd fd;
    FrameDecoder inbound;
    bool subscribed = false;
    std::set<std::string, std::less<>> topics;  // empty: everything
    std::deque<std::shared_ptr<const std::vector<std::uint8_t>>> queue;
    std::size_t offset = 0;  // bytes of queue.front() already written

    bool wants(std::string_view topic) const {
        return subscribed && (topics.empty() || topics.find(topic) != topics.end());
    }
};

Publisher::Publisher(const std::string& bind, std::size_t queue_capacity, OverflowPolicy overflow)
    : queue_capacity_(std::max<std::size_t>(queue_capacity, 1)), overflow_(overflow) {
    net::Fd lfd = net::tcp_listen(net::parse_host_port(bind));
    net::set_nonblocking(lfd.get());
    endpoint_ = net::local_address(lfd.get()).to_string();
    listen_fd_ = lfd.release();
    wake_fd_ = ::eventfd(0, EFD_NONBLOCK | EFD_CLOEXEC);
    thread_ = std::jthread([this](std::stop_token st) { loop(st); });
}

Publisher::~Publisher() {
    close();
}

void Publisher::close() {
    if (closed_.exchange(true)) return;
    thread_.request_stop();
    wake();
    if (thread_.joinable()) thread_.join();
    {
        std::lock_guard lock(mu_);
        connections_.clear();
    }
    space_cv_.notify_all();
    if (listen_fd_ >= 0) ::close(listen_fd_);
    if (wake_fd_ >= 0) ::close(wake_fd_);
    listen_fd_ = wake_fd_ = -1;
}

void Publisher::wake() {
    std::uint64_t one = 1;
    [[maybe_unused]] auto n = ::write(wake_fd_, &one, sizeof one);
}

std::uint64_t Publisher::publish(std::string_view topic, std::int64_t timestamp_ns,
                                 std::span<const std::uint8_t> payload) {
    if (closed_) throw Error(Errc::NotBound, "publisher closed");
    if (payload.size() > kMaxPayload) {
        throw Error(Errc::FrameTooLarge, "payload of " + std::to_string(payload.size()) + " bytes exceeds 16 MiB");
    }
    std::unique_lock lock(mu_);
    if (overflow_ == OverflowPolicy::Block) {
        space_cv_.wait_for(lock, std::chrono::seconds(10), [&] {
            if (closed_) return true;
            return std::all_of(connections_.begin(), connections_.end(), [&](const auto& kv) {
                return !kv.second->wants(topic) || kv.second->queue.size() < queue_capacity_;
            });
        });
        if (closed_) throw Error(Errc::NotBound, "publisher closed");
    }
    auto it = seqs_.find(topic);
    if (it == seqs_.end()) it = seqs_.emplace(std::string(topic), 0).first;
    MessageEnvelope env;
    env.topic = std::string(topic);
    env.seq = ++it->second;
    env.timestamp_ns = timestamp_ns;
    env.payload.assign(payload.begin(), payload.end());
    auto frame = std::make_shared<const std::vector<std::uint8_t>>(encode_frame(env));
    for (auto& [fd, c] : connections_) {
        if (!c->wants(topic)) continue;
        if (c->queue.size() >= queue_capacity_) {
            // never drop a frame that is partially on the wire
            auto victim = c->offset > 0 && c->queue.size() > 1 ? c->queue.begin() + 1 : c->queue.begin();
            if (victim == c->queue.begin()) c->offset = 0;
            c->queue.erase(victim);
            dropped_.fetch_add(1);
        }
        c->queue.push_back(frame);
    }
    lock.unlock();
    wake();
    return env.seq;
}

std::size_t Publisher::subscriber_count() const {
    std::lock_guard lock(mu_);
    return static_cast<std::size_t>(std::count_if(connections_.begin(), connections_.end(),
                                                  [](const auto& kv) { return kv.second->subscribed; }));
}

bool Publisher::wait_for_subscribers(std::size_t count, Duration timeout) const {
    const MonoTime deadline = mono_now() + timeout;
    while (mono_now() < deadline) {
        if (subscriber_count() >= count) return true;
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    return subscriber_count() >= count;
}

bool Publisher::flush(Duration timeout) const {
    std::unique_lock lock(mu_);
    return space_cv_.wait_for(lock, timeout, [&] {
        return std::all_of(connections_.begin(), connections_.end(),
                           [](const auto& kv) { return kv.second->queue.empty(); });
    });
}

void Publisher::loop(std::stop_token stop) {
    std::vector<pollfd> fds;
    while (!stop.stop_requested()) {
        fds.clear();
        fds.push_back({wake_fd_, POLLIN, 0});
        fds.push_back({listen_fd_, POLLIN, 0});
        {
            std::lock_guard lock(mu_);
            for (auto& [fd, c] : connections_) {
                short ev = POLLIN;
                if (!c->queue.empty()) ev |= POLLOUT;
                fds.push_back({fd, ev, 0});
            }
        }
        int n = ::poll(fds.data(), fds.size(), 100);
        if (n < 0 && errno != EINTR) break;
        if (fds[0].revents & POLLIN) {
            std::uint64_t v;
            [[maybe_unused]] auto r = ::read(wake_fd_, &v, sizeof v);
        }
        std::lock_guard lock(mu_);
        if (fds[1].revents & POLLIN) {
            for (;;) {
                int cfd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_NONBLOCK | SOCK_CLOEXEC);
                if (cfd < 0) break;
                net::set_nodelay(cfd);
                auto c = std::make_unique<Connection>();
                c->fd = net::Fd(cfd);
                connections_.emplace(cfd, std::move(c));
            }
        }
        bool changed = false;
        for (std::size_t i = 2; i < fds.size(); ++i) {
            auto it = connections_.find(fds[i].fd);
            if (it == connections_.end()) continue;
            Connection& c = *it->second;
            bool dead = (fds[i].revents & (POLLERR | POLLNVAL)) != 0;
            if (fds[i].revents & (POLLIN | POLLHUP)) {
                std::uint8_t buf[4096];
                for (;;) {
                    ssize_t r = ::read(c.fd.get(), buf, sizeof buf);
                    if (r > 0) {
                        c.inbound.feed(std::span<const std::uint8_t>(buf, static_cast<std::size_t>(r)));
                        continue;
                    }
                    if (r == 0) dead = true;
                    if (r < 0 && errno == EINTR) continue;
                    if (r < 0 && errno != EAGAIN && errno != EWOULDBLOCK) dead = true;
                    break;
                }
                while (auto env = c.inbound.next()) {
                    if (env->topic != kSubscribeTopic) continue;
                    std::string list(env->payload.begin(), env->payload.end());
                    std::istringstream is(list);
                    std::string t;
                    while (std::getline(is, t)) {
                        if (!t.empty()) c.topics.insert(t);
                    }
                    c.subscribed = true;
                }
            }
            while (!dead && !c.queue.empty()) {
                const auto& front = *c.queue.front();
                ssize_t w = ::send(c.fd.get(), front.data() + c.offset, front.size() - c.offset,
                                   MSG_NOSIGNAL | MSG_DONTWAIT);
                if (w > 0) {
                    c.offset += static_cast<std::size_t>(w);
                    if (c.offset == front.size()) {
                        c.queue.pop_front();
                        c.offset = 0;
                        changed = true;
                    }
                    continue;
                }
                if (w < 0 && errno == EINTR) continue;
                if (w < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) break;
                dead = true;
            }
            if (dead) {
                connections_.erase(it);
                changed = true;
            }
        }
        if (changed) space_cv_.notify_all();
    }
}

// ---- Subscriber ---------------------------------------------------------------------------

Subscriber::Subscriber(const std::string& endpoint, std::vector<std::string> topics, Duration connect_timeout)
    : endpoint_(endpoint) {
    net::HostPort hp;
    try {
        hp = net::parse_host_port(endpoint);
    } catch (const Error& e) {
        throw Error(Errc::ConnectFailure, e.what());
    }
    net::Fd fd = net::tcp_connect(hp, connect_timeout);
    MessageEnvelope hello;
    hello.topic = std::string(kSubscribeTopic);
    hello.timestamp_ns = to_ns(mono_now());
    std::string list;
    for (const auto& t : topics) list += t + "\n";
    hello.payload.assign(list.begin(), list.end());
    auto frame = encode_frame(hello);
    if (!net::write_all(fd.get(), frame.data(), frame.size(), connect_timeout)) {
        throw Error(Errc::ConnectFailure, "subscription handshake to " + endpoint + " failed");
    }
    fd_ = fd.release();
}

Subscriber::~Subscriber() {
    if (fd_ >= 0) ::close(fd_);
}

std::optional<SubscriberEvent> Subscriber::next(Duration timeout) {
    const MonoTime deadline = mono_now() + timeout;
    for (;;) {
        if (auto env = decoder_.next()) return SubscriberEvent{std::move(*env)};
        if (fd_ < 0) return SubscriberEvent{Disconnected{disconnect_reason_}};
        std::uint8_t buf[65536];
        ssize_t r = ::recv(fd_, buf, sizeof buf, MSG_DONTWAIT);
        if (r > 0) {
            decoder_.feed(std::span<const std::uint8_t>(buf, static_cast<std::size_t>(r)));
            continue;
        }
        if (r == 0 || (r < 0 && errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR)) {
            disconnect_reason_ = r == 0 ? "publisher closed the connection" : std::strerror(errno);
            ::close(fd_);
            fd_ = -1;
            continue;
        }
        Duration left = deadline - mono_now();
        if (left <= Duration::zero()) return std::nullopt;
        net::wait_readable(fd_, left);
    }
}

// ---- beacons ------------------------------------------------------------------------------

std::string encode_beacon(const Beacon& b) {
    std::string topics;
    for (std::size_t i = 0; i < b.topics.size(); ++i) topics += (i ? "," : "") + b.topics[i];
    std::string out = std::string(kBeaconPrefix) + " 1 " + b.node_name + " " + b.endpoint;
    if (!topics.empty()) out += " " + topics;
    return out;
}

std::optional<Beacon> parse_beacon(std::string_view datagram) {
    std::istringstream is{std::string(datagram)};
    std::string prefix, version;
    Beacon b;
    if (!(is >> prefix >> version >> b.node_name >> b.endpoint)) return std::nullopt;
    if (prefix != kBeaconPrefix || version != "1") return std::nullopt;
    std::string topics;
    if (is >> topics) {
        std::size_t start = 0;
        while (start <= topics.size()) {
            auto comma = topics.find(',', start);
            if (comma == std::string::npos) comma = topics.size();
            if (comma > start) b.topics.push_back(topics.substr(start, comma - start));
            start = comma + 1;
        }
    }
    std::string extra;
    if (is >> extra) return std::nullopt;
    return b;
}

BeaconAnnouncer::BeaconAnnouncer(Beacon beacon, const std::string& destination, Duration period)
    : beacon_(std::move(beacon)) {
    net::HostPort hp = net::parse_host_port(destination);
    sockaddr_in dest = to_sockaddr(hp);
    fd_ = ::socket(AF_INET, SOCK_DGRAM | SOCK_CLOEXEC, 0);
    if (fd_ < 0) throw Error(Errc::SocketError, std::string("beacon socket: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_BROADCAST, &one, sizeof one);
    std::string msg = encode_beacon(beacon_);
    thread_ = std::jthread([this, dest, msg, period](std::stop_token st) {
        MonoTime next = mono_now();
        while (!st.stop_requested()) {
            if (::sendto(fd_, msg.data(), msg.size(), 0, reinterpret_cast<const sockaddr*>(&dest), sizeof dest) ==
                static_cast<ssize_t>(msg.size())) {
                sent_.fetch_add(1);
            }
            next += period;
            while (!st.stop_requested() && mono_now() < next) {
                std::this_thread::sleep_for(std::min<Duration>(next - mono_now(), std::chrono::milliseconds(20)));
            }
        }
    });
}

BeaconAnnouncer::~BeaconAnnouncer() {
    thread_.request_stop();
    if (thread_.joinable()) thread_.join();
    if (fd_ >= 0) ::close(fd_);
}

DiscoveryResult discover(const std::string& listen, Duration window) {
    net::HostPort hp = net::parse_host_port(listen);
    sockaddr_in addr = to_sockaddr(hp);
    net::Fd fd(::socket(AF_INET, SOCK_DGRAM | SOCK_CLOEXEC, 0));
    if (!fd) throw Error(Errc::SocketError, std::string("discovery socket: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEPORT, &one, sizeof one);
    ::setsockopt(fd.get(), SOL_SOCKET, SO_BROADCAST, &one, sizeof one);
    if (::bind(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        throw Error(Errc::SocketError, "bind " + listen + ": " + std::strerror(errno));
    }
    DiscoveryResult result;
    std::set<std::string> warned;
    const MonoTime deadline = mono_now() + window;
    for (;;) {
        Duration left = deadline - mono_now();
        if (left <= Duration::zero()) break;
        if (!net::wait_readable(fd.get(), left)) break;
        char buf[2048];
        ssize_t n = ::recv(fd.get(), buf, sizeof buf, MSG_DONTWAIT);
        if (n <= 0) continue;
        auto b = parse_beacon(std::string_view(buf, static_cast<std::size_t>(n)));
        if (!b) continue;
        auto same = std::find_if(result.nodes.begin(), result.nodes.end(), [&](const DiscoveredNode& d) {
            return d.beacon.node_name == b->node_name && d.beacon.endpoint == b->endpoint;
        });
        if (same != result.nodes.end()) {
            ++same->heard;
            same->beacon.topics = b->topics;
            continue;
        }
        for (const auto& d : result.nodes) {
            if (d.beacon.node_name == b->node_name && warned.insert(b->node_name).second) {
                result.warnings.push_back("DuplicateName: node '" + b->node_name + "' announced from " +
                                          d.beacon.endpoint + " and " + b->endpoint);
            }
        }
        result.nodes.push_back(DiscoveredNode{*b, 1});
    }
    return result;
}

}  // namespace rapid
