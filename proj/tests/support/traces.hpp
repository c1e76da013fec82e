// Random multi-channel traces and a streaming driver for the synchronizer.
#pragma once

#include <algorithm>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "rapid/sync.hpp"

namespace testing_support {

struct Trace {
    std::vector<oracle::TraceChannel> channels;
    std::vector<oracle::TraceSample> samples;  // ascending ts within each channel
    std::vector<oracle::TraceMask> masks;      // ascending ts
};

/// 2 to 4 channels at mixed rates with +-30% period jitter and random presence flips.
inline Trace random_trace(std::uint64_t seed, std::size_t total_samples = 500) {
    std::mt19937_64 rng(seed);
    const double rates[] = {10, 15, 30, 60, 100};
    Trace t;
    const std::size_t k = 2 + rng() % 3;
    for (std::size_t c = 0; c < k; ++c) {
        t.channels.push_back({static_cast<unsigned>(c), rates[rng() % 5]});
    }
    double sum_rate = 0;
    for (const auto& c : t.channels) sum_rate += c.rate_hz;
    const double seconds = static_cast<double>(total_samples) / sum_rate;
    const std::int64_t start = 1'000'000'000;
    const auto end = start + static_cast<std::int64_t>(seconds * 1e9);
    std::uniform_real_distribution<double> jitter(-0.3, 0.3);
    int id = 0;
    for (std::size_t c = 0; c < k; ++c) {
        const double period = 1e9 / t.channels[c].rate_hz;
        double ts = static_cast<double>(start) + period * std::uniform_real_distribution<double>(0, 1)(rng);
        while (ts < static_cast<double>(end)) {
            t.samples.push_back({c, static_cast<std::int64_t>(ts + period * jitter(rng)), id++});
            ts += period;
        }
    }
    std::sort(t.samples.begin(), t.samples.end(), [](const auto& a, const auto& b) {
        return a.channel != b.channel ? a.channel < b.channel : a.ts < b.ts;
    });
    // presence: each bit flips with a small probability per 10 ms mask record
    std::uint64_t word = (std::uint64_t{1} << k) - 1;
    std::bernoulli_distribution flip(0.01);
    for (std::int64_t ts = start - 20'000'000; ts < end + 100'000'000; ts += 10'000'000) {
        for (std::size_t c = 0; c < k; ++c) {
            if (flip(rng)) word ^= std::uint64_t{1} << c;
        }
        t.masks.push_back({ts, word});
    }
    return t;
}

inline std::vector<rapid::ChannelSpec> specs_for(const Trace& t, std::size_t elements = 3) {
    std::vector<rapid::ChannelSpec> specs;
    for (std::size_t c = 0; c < t.channels.size(); ++c) {
        specs.push_back(rapid::ChannelSpec{"ch" + std::to_string(c), "/ch" + std::to_string(c), {elements},
                                           t.channels[c].bit, t.channels[c].rate_hz});
    }
    return specs;
}

/// Payload that identifies a sample: every element equals id + 1.
inline std::vector<float> tagged_payload(int id, std::size_t elements = 3) {
    return std::vector<float>(elements, static_cast<float>(id + 1));
}

inline rapid::PhysicalMask to_mask(const oracle::TraceMask& m, std::uint8_t device_count) {
    rapid::PhysicalMask pm;
    pm.device_count = device_count;
    pm.mask = m.word;
    pm.timestamp_ns = static_cast<std::uint64_t>(m.ts);
    return pm;
}

/// Feeds the trace to a Synchronizer in arrival order (timestamp plus a random delay below
/// max_delay), advancing the watermark as it goes, then flushes.
inline std::vector<rapid::SyncedObservation> run_streaming(const Trace& t, std::uint64_t seed,
                                                           std::int64_t max_delay_ns = 40'000'000) {
    struct Arrival {
        std::int64_t at;
        bool is_mask;
        std::size_t index;
    };
    std::mt19937_64 rng(seed ^ 0xA5A5);
    std::uniform_int_distribution<std::int64_t> delay(0, max_delay_ns - 1);
    std::vector<Arrival> arrivals;
    for (std::size_t i = 0; i < t.samples.size(); ++i) arrivals.push_back({t.samples[i].ts + delay(rng), false, i});
    // masks come from one writer, so they arrive in order
    std::int64_t last_mask_arrival = INT64_MIN;
    for (std::size_t i = 0; i < t.masks.size(); ++i) {
        last_mask_arrival = std::max(last_mask_arrival, t.masks[i].ts + delay(rng));
        arrivals.push_back({last_mask_arrival, true, i});
    }
    std::stable_sort(arrivals.begin(), arrivals.end(), [](const auto& a, const auto& b) { return a.at < b.at; });

    rapid::Synchronizer sync(specs_for(t));
    std::vector<rapid::SyncedObservation> out;
    const auto n = static_cast<std::uint8_t>(t.channels.size());
    for (const auto& a : arrivals) {
        if (a.is_mask) {
            sync.push_mask(to_mask(t.masks[a.index], n));
        } else {
            const auto& s = t.samples[a.index];
            sync.push_sample(s.channel, s.ts, tagged_payload(s.id));
        }
        for (auto& o : sync.advance(a.at - max_delay_ns)) out.push_back(std::move(o));
    }
    for (auto& o : sync.flush()) out.push_back(std::move(o));
    return out;
}

/// Converts synchronizer output to the oracle's representation.
inline std::vector<oracle::Group> as_groups(const std::vector<rapid::SyncedObservation>& obs) {
    std::vector<oracle::Group> out;
    for (const auto& o : obs) {
        oracle::Group g;
        g.t_ref = o.t_ref;
        g.anchor = o.anchor;
        g.mask_word = o.mask_snapshot.mask;
        for (const auto& ch : o.channels) {
            g.slots.push_back(ch.present ? oracle::Slot::Present : ch.stale ? oracle::Slot::Stale : oracle::Slot::Absent);
            g.picked.push_back(ch.present ? static_cast<int>(ch.payload.at(0)) - 1 : -1);
        }
        out.push_back(std::move(g));
    }
    return out;
}

inline bool same_groups(const std::vector<oracle::Group>& a, const std::vector<oracle::Group>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].t_ref != b[i].t_ref || a[i].anchor != b[i].anchor || a[i].slots != b[i].slots ||
            a[i].picked != b[i].picked || a[i].mask_word != b[i].mask_word) {
            return false;
        }
    }
    return true;
}

}  // namespace testing_support
