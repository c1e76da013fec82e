#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include "rapid/clock.hpp"

namespace rapid {

inline constexpr std::size_t kMaxPayload = 16u << 20;  // 16 MiB
inline constexpr std::size_t kMaxTopicLength = 4096;
inline constexpr std::uint8_t kFrameVersion = 1;
inline constexpr std::string_view kSubscribeTopic = "=subscribe";
inline constexpr std::string_view kMaskTopic = "/rapid/mask";

/// Wire frame, little-endian:
///   "RMSG" | version u8 | topic_len u16 | topic | seq u64 | timestamp_ns u64 | payload_len u32 | payload
struct MessageEnvelope {
    std::string topic;
    std::uint64_t seq = 0;
    std::int64_t timestamp_ns = 0;
    std::vector<std::uint8_t> payload;

    friend bool operator==(const MessageEnvelope&, const MessageEnvelope&) = default;
};

/// Throws Error{FrameTooLarge}.
std::vector<std::uint8_t> encode_frame(const MessageEnvelope& envelope);

/// Incremental frame parser for a byte stream. Frames that fail validation are skipped
/// (resynchronising on the next magic) and counted, never returned.
class FrameDecoder {
public:
    void feed(std::span<const std::uint8_t> bytes);
    std::optional<MessageEnvelope> next();
    std::uint64_t corrupt_frames() const noexcept { return corrupt_; }
    std::size_t buffered() const noexcept { return buf_.size() - pos_; }

private:
    void skip_to_next_magic();

    std::vector<std::uint8_t> buf_;
    std::size_t pos_ = 0;
    std::uint64_t corrupt_ = 0;
};

enum class OverflowPolicy {
    DropOldest,  // live sensor streams: freshness over completeness
    Block,       // replay: the publisher waits for queue space
};

/// Topic publisher bound to one TCP endpoint. Subscribers connect and send a "=subscribe"
/// frame listing their topics (newline separated; an empty list means every topic).
class Publisher {
public:
    /// Throws Error{SocketError}. "127.0.0.1:0" binds an ephemeral port.
    explicit Publisher(const std::string& bind = "127.0.0.1:0", std::size_t queue_capacity = 256,
                       OverflowPolicy overflow = OverflowPolicy::DropOldest);
    ~Publisher();

    Publisher(const Publisher&) = delete;
    Publisher& operator=(const Publisher&) = delete;

    /// "host:port" actually bound.
    std::string endpoint() const { return endpoint_; }

    /// Assigns the next per-topic sequence number and queues the frame to every current
    /// subscriber of the topic. Returns the sequence number used.
    /// Throws Error{FrameTooLarge | NotBound}.
    std::uint64_t publish(std::string_view topic, std::int64_t timestamp_ns, std::span<const std::uint8_t> payload);

    std::size_t subscriber_count() const;
    bool wait_for_subscribers(std::size_t count, Duration timeout) const;
    /// Blocks until every queued frame has been handed to the kernel, or timeout.
    bool flush(Duration timeout) const;
    std::uint64_t dropped_frames() const noexcept { return dropped_.load(); }

    void close();

private:
    struct Connection;
    void loop(std::stop_token stop);
    void wake();

    std::string endpoint_;
    std::size_t queue_capacity_;
    OverflowPolicy overflow_;
    int listen_fd_ = -1;
    int wake_fd_ = -1;
    mutable std::mutex mu_;
    mutable std::condition_variable space_cv_;
    std::map<int, std::unique_ptr<Connection>> connections_;
    std::map<std::string, std::uint64_t, std::less<>> seqs_;
    std::atomic<std::uint64_t> dropped_{0};
    std::atomic<bool> closed_{false};
    std::jthread thread_;
};

struct Disconnected {
    std::string reason;
};

using SubscriberEvent = std::variant<MessageEnvelope, Disconnected>;

class Subscriber {
public:
    /// Connects and sends the subscription. Throws Error{ConnectFailure}.
    Subscriber(const std::string& endpoint, std::vector<std::string> topics,
               Duration connect_timeout = std::chrono::seconds(2));
    ~Subscriber();

    Subscriber(const Subscriber&) = delete;
    Subscriber& operator=(const Subscriber&) = delete;

    /// Next frame or a Disconnected notice; nullopt on timeout. After a disconnect every call
    /// returns Disconnected again.
    std::optional<SubscriberEvent> next(Duration timeout);

    bool connected() const noexcept { return fd_ >= 0; }
    int fd() const noexcept { return fd_; }
    const std::string& endpoint() const noexcept { return endpoint_; }
    std::uint64_t corrupt_frames() const noexcept { return decoder_.corrupt_frames(); }

private:
    std::string endpoint_;
    int fd_ = -1;
    FrameDecoder decoder_;
    std::string disconnect_reason_;
};

// ---- discovery beacons ----------------------------------------------------------------

inline constexpr std::string_view kBeaconPrefix = "RAPIDBEACON";
inline constexpr std::uint16_t kDefaultBeaconPort = 7447;

struct Beacon {
    std::string node_name;
    std::string endpoint;
    std::vector<std::string> topics;

    friend bool operator==(const Beacon&, const Beacon&) = default;
};

/// "RAPIDBEACON 1 <node_name> <host:port> <comma-separated-topics>"
std::string encode_beacon(const Beacon& beacon);
std::optional<Beacon> parse_beacon(std::string_view datagram);

/// Sends the beacon datagram every `period` (one second by default) until destroyed.
class BeaconAnnouncer {
public:
    /// Throws Error{SocketError}.
    BeaconAnnouncer(Beacon beacon, const std::string& destination, Duration period = std::chrono::seconds(1));
    ~BeaconAnnouncer();

    BeaconAnnouncer(const BeaconAnnouncer&) = delete;
    BeaconAnnouncer& operator=(const BeaconAnnouncer&) = delete;

    std::uint64_t sent() const noexcept { return sent_.load(); }

private:
    Beacon beacon_;
    int fd_ = -1;
    std::atomic<std::uint64_t> sent_{0};
    std::jthread thread_;
};

struct DiscoveredNode {
    Beacon beacon;
    int heard = 0;
};

struct DiscoveryResult {
    std::vector<DiscoveredNode> nodes;
    std::vector<std::string> warnings;  // "DuplicateName: ..."
};

/// Listens on a UDP address for `window` and returns the deduplicated set of announcers.
/// Throws Error{SocketError}.
DiscoveryResult discover(const std::string& listen, Duration window);

}  // namespace rapid
