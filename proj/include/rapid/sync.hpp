#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rapid/clock.hpp"
#include "rapid/mask.hpp"

namespace rapid {

inline constexpr Duration kDefaultSyncWindow = std::chrono::milliseconds(25);

struct ChannelSpec {
    std::string name;
    std::string topic;
    std::vector<std::size_t> shape{1};
    unsigned bit = 0;
    double nominal_rate_hz = 30.0;

    std::size_t element_count() const;
};

/// Throws Error{InvariantViolation} on empty shape, zero dimension, bit > 63 or rate <= 0.
void validate_channels(const std::vector<ChannelSpec>& channels);

struct ChannelObservation {
    std::vector<float> payload;  // always element_count() long
    bool present = false;
    bool stale = false;
    std::optional<std::int64_t> source_timestamp_ns;
};

struct SyncedObservation {
    std::int64_t t_ref = 0;
    std::size_t anchor = 0;  // channel index of the anchor sample
    std::vector<ChannelObservation> channels;
    PhysicalMask mask_snapshot;
};

struct SyncStats {
    std::uint64_t emitted = 0;
    std::uint64_t late_dropped = 0;     // older than the last emitted t_ref
    std::uint64_t offline_dropped = 0;  // arrived while the channel's bit was clear
    std::uint64_t unpaired_dropped = 0; // overtaken by t_ref without being picked
    std::uint64_t stale = 0;
    std::uint64_t absent = 0;
};

/// Approximate time alignment of several sample streams against the mask stream.
///
/// Group formation: t0 is the earliest usable sample of any channel. Among channels whose
/// bit is set at t0, the slowest (lowest nominal rate, then lowest index) that has a usable
/// sample within 1.5 nominal periods of t0 anchors the group with that sample. Every other
/// channel contributes its nearest usable sample within +-window of the anchor (earlier wins
/// ties), is stale if none qualifies, or absent if its bit is clear in the mask snapshot
/// closest to t_ref. A sample is usable when it is newer than the last t_ref and its
/// channel's bit is set in the mask snapshot closest to the sample.
class Synchronizer {
public:
    /// Throws Error{InvariantViolation} (see validate_channels) or if window <= 0.
    explicit Synchronizer(std::vector<ChannelSpec> channels, Duration window = kDefaultSyncWindow);

    /// Throws Error{ShapeMismatch} when data does not match the channel's element count.
    void push_sample(std::size_t channel, std::int64_t timestamp_ns, std::vector<float> data);
    void push_mask(const PhysicalMask& mask);

    /// Emits every group that can no longer change given that no sample or mask with a
    /// timestamp below `watermark_ns` will arrive any more.
    std::vector<SyncedObservation> advance(std::int64_t watermark_ns);
    /// Emits everything still buffered.
    std::vector<SyncedObservation> flush();

    const std::vector<ChannelSpec>& channels() const noexcept { return channels_; }
    Duration window() const noexcept { return window_; }
    const SyncStats& stats() const noexcept { return stats_; }
    std::size_t buffered_samples() const;

private:
    struct Sample {
        std::int64_t ts;
        std::vector<float> data;
    };

    const PhysicalMask* mask_at(std::int64_t ts) const;
    bool bit_set_at(std::size_t channel, std::int64_t ts) const;
    void discard_unusable();
    std::optional<SyncedObservation> try_emit(std::optional<std::int64_t> watermark);
    std::int64_t horizon_ns(std::size_t channel) const;

    std::vector<ChannelSpec> channels_;
    std::vector<std::size_t> priority_;  // channel indices, slowest first
    Duration window_;
    std::vector<std::deque<Sample>> samples_;
    std::deque<PhysicalMask> masks_;  // ascending timestamp
    std::optional<std::int64_t> last_t_ref_;
    std::int64_t watermark_ = INT64_MIN;
    SyncStats stats_;
};

struct ObservationVector {
    std::vector<float> values;
    std::vector<std::uint8_t> present;  // one flag per channel
};

/// Concatenates channel payloads in channel order. Length depends only on the channel specs.
ObservationVector assemble_observation_vector(const SyncedObservation& obs);

struct Image {
    std::vector<std::size_t> shape;
    std::vector<float> pixels;
};

/// Per-pixel (current - reference) / 2 + 0.5 clamped to [0, 1]. Throws Error{ShapeMismatch}.
Image diff_image(const Image& current, const Image& reference);

/// Sensor payloads on the wire: element_count float32 values, little-endian.
std::vector<std::uint8_t> encode_payload(std::span<const float> values);
/// Throws Error{ShapeMismatch} when the byte length is not 4 * expected_elements.
std::vector<float> decode_payload(std::span<const std::uint8_t> bytes, std::size_t expected_elements);

}  // namespace rapid
