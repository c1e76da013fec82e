#include "rapid/sync.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "rapid/error.hpp"

namespace rapid {

std::size_t ChannelSpec::element_count() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void validate_channels(const std::vector<ChannelSpec>& channels) {
    for (const auto& c : channels) {
        if (c.shape.empty() || std::find(c.shape.begin(), c.shape.end(), 0u) != c.shape.end()) {
            throw Error(Errc::InvariantViolation, "channel '" + c.name + "' has an empty shape");
        }
        if (c.bit > 63) throw Error(Errc::InvariantViolation, "channel '" + c.name + "' bit out of range");
        if (!(c.nominal_rate_hz > 0)) {
            throw Error(Errc::InvariantViolation, "channel '" + c.name + "' needs a positive nominal rate");
        }
    }
}

Synchronizer::Synchronizer(std::vector<ChannelSpec> channels, Duration window)
    : channels_(std::move(channels)), window_(window), samples_(channels_.size()) {
    validate_channels(channels_);
    if (window_ <= Duration::zero()) throw Error(Errc::InvariantViolation, "sync window must be positive");
    priority_.resize(channels_.size());
    std::iota(priority_.begin(), priority_.end(), 0);
    std::stable_sort(priority_.begin(), priority_.end(), [&](std::size_t a, std::size_t b) {
        return channels_[a].nominal_rate_hz < channels_[b].nominal_rate_hz;
    });
}

std::size_t Synchronizer::buffered_samples() const {
    std::size_t n = 0;
    for (const auto& q : samples_) n += q.size();
    return n;
}

std::int64_t Synchronizer::horizon_ns(std::size_t c) const {
    return static_cast<std::int64_t>(std::llround(1.5e9 / channels_[c].nominal_rate_hz));
}

void Synchronizer::push_sample(std::size_t channel, std::int64_t ts, std::vector<float> data) {
    if (channel >= channels_.size()) throw Error(Errc::ShapeMismatch, "unknown channel index");
    if (data.size() != channels_[channel].element_count()) {
        throw Error(Errc::ShapeMismatch, "channel '" + channels_[channel].name + "' expects " +
                                             std::to_string(channels_[channel].element_count()) + " values, got " +
                                             std::to_string(data.size()));
    }
    if (last_t_ref_ && ts <= *last_t_ref_) {
        ++stats_.late_dropped;
        return;
    }
    auto& q = samples_[channel];
    auto pos = std::upper_bound(q.begin(), q.end(), ts, [](std::int64_t t, const Sample& s) { return t < s.ts; });
    q.insert(pos, Sample{ts, std::move(data)});
}

void Synchronizer::push_mask(const PhysicalMask& mask) {
    if (!masks_.empty() && mask.timestamp_ns < masks_.back().timestamp_ns) return;
    masks_.push_back(mask);
}

const PhysicalMask* Synchronizer::mask_at(std::int64_t ts) const {
    if (masks_.empty()) return nullptr;
    auto t = static_cast<std::uint64_t>(ts);
    auto it = std::lower_bound(masks_.begin(), masks_.end(), t,
                               [](const PhysicalMask& m, std::uint64_t v) { return m.timestamp_ns < v; });
    if (it == masks_.end()) return &masks_.back();
    if (it == masks_.begin()) return &*it;
    auto prev = std::prev(it);
    // earlier snapshot wins an exact tie
    return (t - prev->timestamp_ns) <= (it->timestamp_ns - t) ? &*prev : &*it;
}

bool Synchronizer::bit_set_at(std::size_t channel, std::int64_t ts) const {
    const PhysicalMask* m = mask_at(ts);
    return m != nullptr && m->online(channels_[channel].bit);
}

std::vector<SyncedObservation> Synchronizer::advance(std::int64_t watermark_ns) {
    watermark_ = std::max(watermark_, watermark_ns);
    std::vector<SyncedObservation> out;
    while (auto obs = try_emit(watermark_)) out.push_back(std::move(*obs));
    return out;
}

std::vector<SyncedObservation> Synchronizer::flush() {
    std::vector<SyncedObservation> out;
    while (auto obs = try_emit(std::nullopt)) out.push_back(std::move(*obs));
    return out;
}

std::optional<SyncedObservation> Synchronizer::try_emit(std::optional<std::int64_t> watermark) {
    // The closest snapshot to ts can no longer change once a newer snapshot exists, or once
    // any snapshot still to come would be strictly farther away than the newest one.
    auto settled = [&](std::int64_t ts) {
        if (!watermark) return true;
        if (masks_.empty()) return false;
        auto back = static_cast<std::int64_t>(masks_.back().timestamp_ns);
        return back >= ts || *watermark > 2 * ts - back;
    };

    std::optional<std::int64_t> t0;
    for (std::size_t c = 0; c < channels_.size(); ++c) {
        auto& q = samples_[c];
        while (!q.empty() && settled(q.front().ts) && !bit_set_at(c, q.front().ts)) {
            q.pop_front();
            ++stats_.offline_dropped;
        }
        if (q.empty()) continue;
        if (!t0 || q.front().ts < *t0) t0 = q.front().ts;
    }
    if (!t0) return std::nullopt;
    for (std::size_t c = 0; c < channels_.size(); ++c) {
        // an unsettled front earlier than t0 might still turn out to be usable
        if (!samples_[c].empty() && samples_[c].front().ts <= *t0 && !settled(samples_[c].front().ts)) {
            return std::nullopt;
        }
    }

    std::int64_t max_h = 0;
    for (std::size_t c = 0; c < channels_.size(); ++c) max_h = std::max(max_h, horizon_ns(c));
    const std::int64_t win = window_.count();
    const std::int64_t t_end = *t0 + max_h + win;
    if (watermark && (*watermark < t_end || !settled(t_end))) return std::nullopt;

    const PhysicalMask* at_t0 = mask_at(*t0);
    std::optional<std::size_t> anchor;
    std::size_t anchor_idx = 0;
    for (std::size_t c : priority_) {
        if (at_t0 == nullptr || !at_t0->online(channels_[c].bit)) continue;
        const auto& q = samples_[c];
        for (std::size_t i = 0; i < q.size() && q[i].ts <= *t0 + horizon_ns(c); ++i) {
            if (q[i].ts >= *t0 && bit_set_at(c, q[i].ts)) {
                anchor = c;
                anchor_idx = i;
                break;
            }
        }
        if (anchor) break;
    }
    if (!anchor) return std::nullopt;  // unreachable: t0's own channel qualifies

    SyncedObservation obs;
    obs.t_ref = samples_[*anchor][anchor_idx].ts;
    obs.anchor = *anchor;
    if (const PhysicalMask* snap = mask_at(obs.t_ref)) obs.mask_snapshot = *snap;
    obs.channels.resize(channels_.size());

    std::vector<std::optional<std::size_t>> picked(channels_.size());
    picked[*anchor] = anchor_idx;
    for (std::size_t c = 0; c < channels_.size(); ++c) {
        auto& ch = obs.channels[c];
        if (c != *anchor) {
            if (!obs.mask_snapshot.online(channels_[c].bit)) {
                ++stats_.absent;
            } else {
                const auto& q = samples_[c];
                std::optional<std::size_t> best;
                std::int64_t best_d = std::numeric_limits<std::int64_t>::max();
                for (std::size_t i = 0; i < q.size() && q[i].ts <= obs.t_ref + win; ++i) {
                    std::int64_t d = std::llabs(q[i].ts - obs.t_ref);
                    if (d > win || d >= best_d) continue;  // strict: the earlier sample keeps a tie
                    if (!bit_set_at(c, q[i].ts)) continue;
                    best = i;
                    best_d = d;
                }
                picked[c] = best;
                if (!best) {
                    ch.stale = true;
                    ++stats_.stale;
                }
            }
        }
        if (picked[c]) {
            const auto& s = samples_[c][*picked[c]];
            ch.present = true;
            ch.source_timestamp_ns = s.ts;
            ch.payload = s.data;
        } else {
            ch.payload.assign(channels_[c].element_count(), 0.0f);
        }
    }

    for (std::size_t c = 0; c < channels_.size(); ++c) {
        auto& q = samples_[c];
        if (picked[c]) q.erase(q.begin() + static_cast<std::ptrdiff_t>(*picked[c]));
        while (!q.empty() && q.front().ts <= obs.t_ref) {
            q.pop_front();
            ++stats_.unpaired_dropped;
        }
    }
    last_t_ref_ = obs.t_ref;
    while (masks_.size() > 1 && static_cast<std::int64_t>(masks_[1].timestamp_ns) <= obs.t_ref) masks_.pop_front();
    ++stats_.emitted;
    return obs;
}

ObservationVector assemble_observation_vector(const SyncedObservation& obs) {
    ObservationVector v;
    for (const auto& ch : obs.channels) {
        if (ch.present) {
            v.values.insert(v.values.end(), ch.payload.begin(), ch.payload.end());
        } else {
            v.values.insert(v.values.end(), ch.payload.size(), 0.0f);
        }
        v.present.push_back(ch.present ? 1 : 0);
    }
    return v;
}

Image diff_image(const Image& current, const Image& reference) {
    if (current.shape != reference.shape || current.pixels.size() != reference.pixels.size()) {
        throw Error(Errc::ShapeMismatch, "diff_image needs identically shaped images");
    }
    std::size_t expected = std::accumulate(current.shape.begin(), current.shape.end(), std::size_t{1},
                                           std::multiplies<>());
    if (current.pixels.size() != expected) throw Error(Errc::ShapeMismatch, "pixel count does not match shape");
    Image out{current.shape, std::vector<float>(current.pixels.size())};
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
        out.pixels[i] = std::clamp((current.pixels[i] - reference.pixels[i]) / 2.0f + 0.5f, 0.0f, 1.0f);
    }
    return out;
}

std::vector<std::uint8_t> encode_payload(std::span<const float> values) {
    std::vector<std::uint8_t> out(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, &values[i], 4);
        for (int b = 0; b < 4; ++b) out[i * 4 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
    }
    return out;
}

std::vector<float> decode_payload(std::span<const std::uint8_t> bytes, std::size_t expected_elements) {
    if (bytes.size() != expected_elements * 4) {
        throw Error(Errc::ShapeMismatch, "payload of " + std::to_string(bytes.size()) + " bytes, expected " +
                                             std::to_string(expected_elements * 4));
    }
    std::vector<float> out(expected_elements);
    for (std::size_t i = 0; i < expected_elements; ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[i * 4 + b]) << (8 * b);
        std::memcpy(&out[i], &bits, 4);
    }
    return out;
}

}  // namespace rapid
