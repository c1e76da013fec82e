#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <stop_token>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rapid/clock.hpp"
#include "rapid/error.hpp"
#include "rapid/registry.hpp"
#include "rapid/sync.hpp"

namespace rapid {

// Episode file, little-endian throughout:
//   "REPI" | version u8 | manifest_len u32 | manifest JSON
//   then records: channel_id u8 | timestamp_ns u64 | payload_len u32 | payload
inline constexpr std::uint8_t kEpisodeMagic[4] = {'R', 'E', 'P', 'I'};
inline constexpr std::uint8_t kEpisodeVersion = 1;
inline constexpr std::uint8_t kMaskChannelId = 0;
inline constexpr std::size_t kRecordHeaderSize = 1 + 8 + 4;

struct EpisodeChannel {
    std::uint8_t id = 0;
    std::string name;
    std::string topic;
    std::vector<std::size_t> shape{1};
    double rate_hz = 30.0;
    std::optional<unsigned> bit;  // none for the mask channel

    friend bool operator==(const EpisodeChannel&, const EpisodeChannel&) = default;
};

struct EpisodeManifest {
    int format_version = 1;
    std::vector<EpisodeChannel> channels;  // includes channel 0
    std::string start_wall_time;
    unsigned device_count = 0;
    std::map<unsigned, std::string> bit_map;  // registry bit -> device name

    const EpisodeChannel* channel(std::uint8_t id) const;
    const EpisodeChannel* channel_by_topic(std::string_view topic) const;
    nlohmann::json to_json() const;
    /// Throws Error{CorruptContainer}.
    static EpisodeManifest from_json(const nlohmann::json& j);

    friend bool operator==(const EpisodeManifest&, const EpisodeManifest&) = default;
};

/// Channel 0 for the mask, then one channel per registered device in bit order.
EpisodeManifest manifest_for_registry(const Registry& registry, const std::vector<std::string>& topics,
                                      double default_rate_hz, const std::string& start_wall_time);

struct EpisodeRecord {
    std::uint8_t channel_id = 0;
    std::int64_t timestamp_ns = 0;
    std::vector<std::uint8_t> payload;

    friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

/// CorruptContainer carrying the byte offset where the damage starts.
class ContainerDamage : public Error {
public:
    ContainerDamage(std::uint64_t offset, const std::string& what)
        : Error(Errc::CorruptContainer, what + " at byte " + std::to_string(offset)), offset_(offset) {}
    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

class EpisodeWriter {
public:
    /// Throws Error{IoError | DiskFull}.
    EpisodeWriter(const std::filesystem::path& path, EpisodeManifest manifest);
    ~EpisodeWriter();

    EpisodeWriter(const EpisodeWriter&) = delete;
    EpisodeWriter& operator=(const EpisodeWriter&) = delete;

    /// Throws Error{InvariantViolation} for unknown channels or a timestamp going backwards on
    /// a channel; Error{DiskFull | IoError} on write failure.
    void append(const EpisodeRecord& record);
    void flush();
    void close();

    const EpisodeManifest& manifest() const noexcept { return manifest_; }
    std::uint64_t records_written() const noexcept { return written_; }
    std::uint64_t records_on(std::uint8_t channel) const;

private:
    void write_bytes(const void* data, std::size_t len);

    EpisodeManifest manifest_;
    int fd_ = -1;
    std::vector<std::uint8_t> pending_;
    std::map<std::uint8_t, std::int64_t> last_ts_;
    std::map<std::uint8_t, std::uint64_t> counts_;
    std::uint64_t written_ = 0;
};

class EpisodeReader {
public:
    /// Reads header and manifest. Throws Error{IoError} or ContainerDamage.
    explicit EpisodeReader(const std::filesystem::path& path);

    const EpisodeManifest& manifest() const noexcept { return manifest_; }
    /// nullopt at a clean end of file. Throws ContainerDamage on a truncated or invalid record.
    std::optional<EpisodeRecord> next();
    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::ifstream in_;
    EpisodeManifest manifest_;
    std::uint64_t offset_ = 0;
};

struct Episode {
    EpisodeManifest manifest;
    std::vector<EpisodeRecord> records;
    std::optional<std::uint64_t> damaged_at;  // set only when reading tolerantly
};

/// Strict by default: any damage throws ContainerDamage. With tolerate_damage the intact
/// prefix is returned and damaged_at records where it ends.
Episode read_episode(const std::filesystem::path& path, bool tolerate_damage = false);

// ---- audit --------------------------------------------------------------------------------

struct TimeInterval {
    std::int64_t start_ns = 0;
    std::int64_t end_ns = 0;
    std::int64_t length_ns() const noexcept { return end_ns - start_ns; }

    friend bool operator==(const TimeInterval&, const TimeInterval&) = default;
};

struct ModalityDropouts {
    std::string name;
    unsigned bit = 0;
    std::vector<TimeInterval> offline;
};

struct AuditReport {
    std::vector<ModalityDropouts> modalities;  // bit order
    std::vector<std::string> required;
    std::vector<TimeInterval> usable;  // stretches where every required modality was online
    std::uint64_t mask_records = 0;
    std::optional<TimeInterval> span;  // first to last mask record

    nlohmann::json to_json() const;
    std::string to_text() const;
};

/// Intervals run from the first mask record with the bit clear to the next record with the
/// bit set (or the last record). Required names may be device names or topics.
/// Throws Error{TopicUnavailable} for an unknown required modality.
AuditReport audit_episode(const Episode& episode, const std::vector<std::string>& required = {});

/// Runs the synchronizer over the data and mask records of an episode.
std::vector<SyncedObservation> synchronize_episode(const Episode& episode, Duration window = kDefaultSyncWindow);

// ---- live recording and replay -------------------------------------------------------------

struct RecordConfig {
    std::filesystem::path out;
    /// Daemon mode: endpoints and the registry come from the control socket's status reply,
    /// the mask from the shared file.
    std::optional<std::filesystem::path> control_socket;
    std::filesystem::path mask_path;
    /// Static mode: subscribe to every topic on this endpoint, mask from its /rapid/mask topic.
    std::optional<std::string> connect;
    std::optional<Registry> registry;  // required in static mode
    std::vector<std::string> topics;   // empty: every registered topic
    double default_rate_hz = 30.0;
    Duration duration = std::chrono::seconds(10);
    Duration mask_keepalive = std::chrono::milliseconds(10);
    Duration status_poll = std::chrono::milliseconds(100);
};

struct RecordSummary {
    std::map<std::string, std::uint64_t> records_by_channel;
    std::uint64_t mask_records = 0;
    std::uint64_t out_of_order_dropped = 0;
    Duration elapsed{};
};

/// Throws Error{TopicUnavailable | DaemonUnreachable | ConnectFailure | DiskFull | IoError}.
RecordSummary record_session(const RecordConfig& config, std::stop_token stop = {});

struct ReplayConfig {
    std::filesystem::path in;
    std::string bind = "127.0.0.1:0";
    double speed = 1.0;  // 0 = as fast as possible
    std::size_t wait_for_subscribers = 0;
    Duration subscriber_timeout = std::chrono::seconds(5);
    std::function<void(const std::string& endpoint)> on_ready;
};

struct ReplaySummary {
    std::uint64_t published = 0;
    std::uint64_t mask_published = 0;
    Duration elapsed{};
};

/// Throws ContainerDamage.
ReplaySummary replay_episode(const ReplayConfig& config, std::stop_token stop = {});

}  // namespace rapid
