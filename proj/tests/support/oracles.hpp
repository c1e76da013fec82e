// Reference implementations used as test oracles. Deliberately naive: no shared code with
// the library beyond plain data types.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rapid/registry.hpp"

namespace oracle {

inline void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

/// The 32-byte shared record assembled field by field.
inline std::vector<std::uint8_t> mask_bytes(std::uint8_t device_count, std::uint64_t mask, std::uint64_t ts,
                                            std::uint64_t seq, std::uint8_t version = 1) {
    std::vector<std::uint8_t> out;
    out.push_back('D');
    out.push_back('P');
    out.push_back('A');
    out.push_back('R');
    out.push_back(version);
    out.push_back(device_count);
    put_le(out, 0, 2);
    put_le(out, mask, 8);
    put_le(out, ts, 8);
    put_le(out, seq, 8);
    return out;
}

inline unsigned popcount(std::uint64_t w) {
    unsigned n = 0;
    for (int i = 0; i < 64; ++i) n += static_cast<unsigned>((w >> i) & 1u);
    return n;
}

// ---- two-tier matching ---------------------------------------------------------------------

struct Entry {
    std::string name;
    std::uint16_t vid;
    std::uint16_t pid;
    std::optional<std::string> serial;
};

/// Exact (vid, pid, serial) first; else the first serial-less entry of the model that is not
/// occupied, in declaration order.
inline std::optional<std::string> match(const std::vector<Entry>& entries, std::uint16_t vid, std::uint16_t pid,
                                        const std::optional<std::string>& serial,
                                        const std::set<std::string>& occupied = {}) {
    if (serial) {
        for (const auto& e : entries) {
            if (e.vid == vid && e.pid == pid && e.serial && *e.serial == *serial) return e.name;
        }
    }
    for (const auto& e : entries) {
        if (e.vid == vid && e.pid == pid && !e.serial && !occupied.count(e.name)) return e.name;
    }
    return std::nullopt;
}

// ---- approximate time grouping --------------------------------------------------------------

struct TraceSample {
    std::size_t channel;
    std::int64_t ts;
    int id;  // unique per trace
};

struct TraceMask {
    std::int64_t ts;
    std::uint64_t word;
};

struct TraceChannel {
    unsigned bit;
    double rate_hz;
};

enum class Slot { Present, Stale, Absent };

struct Group {
    std::int64_t t_ref;
    std::size_t anchor;
    std::vector<Slot> slots;
    std::vector<int> picked;  // sample id or -1
    std::uint64_t mask_word;
};

/// Closest mask record to t; the earlier record wins a tie.
inline const TraceMask* closest_mask(const std::vector<TraceMask>& masks, std::int64_t t) {
    const TraceMask* best = nullptr;
    std::int64_t best_d = 0;
    for (const auto& m : masks) {
        std::int64_t d = m.ts > t ? m.ts - t : t - m.ts;
        if (best == nullptr || d < best_d) {
            best = &m;
            best_d = d;
        }
    }
    return best;
}

/// Batch grouping over a complete trace. masks ascending by ts.
inline std::vector<Group> group_trace(const std::vector<TraceChannel>& channels, std::vector<TraceSample> samples,
                                      const std::vector<TraceMask>& masks, std::int64_t window_ns) {
    auto bit_at = [&](std::size_t c, std::int64_t t) {
        const TraceMask* m = closest_mask(masks, t);
        return m != nullptr && ((m->word >> channels[c].bit) & 1u) != 0;
    };
    std::vector<std::size_t> order(channels.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return channels[a].rate_hz < channels[b].rate_hz; });

    std::vector<Group> out;
    std::set<int> used;
    std::optional<std::int64_t> last;
    for (;;) {
        auto usable = [&](const TraceSample& s) {
            return !used.count(s.id) && (!last || s.ts > *last) && bit_at(s.channel, s.ts);
        };
        std::optional<std::int64_t> t0;
        for (const auto& s : samples) {
            if (usable(s) && (!t0 || s.ts < *t0)) t0 = s.ts;
        }
        if (!t0) break;
        const TraceMask* m0 = closest_mask(masks, *t0);
        const TraceSample* anchor = nullptr;
        for (std::size_t c : order) {
            if (((m0->word >> channels[c].bit) & 1u) == 0) continue;
            const auto horizon = static_cast<std::int64_t>(std::llround(1.5e9 / channels[c].rate_hz));
            for (const auto& s : samples) {
                if (s.channel != c || !usable(s) || s.ts < *t0 || s.ts > *t0 + horizon) continue;
                if (anchor == nullptr || s.ts < anchor->ts) anchor = &s;
            }
            if (anchor != nullptr) break;
        }
        Group g;
        g.t_ref = anchor->ts;
        g.anchor = anchor->channel;
        g.slots.assign(channels.size(), Slot::Stale);
        g.picked.assign(channels.size(), -1);
        g.mask_word = closest_mask(masks, g.t_ref)->word;
        g.slots[g.anchor] = Slot::Present;
        g.picked[g.anchor] = anchor->id;
        for (std::size_t c = 0; c < channels.size(); ++c) {
            if (c == g.anchor) continue;
            if (((g.mask_word >> channels[c].bit) & 1u) == 0) {
                g.slots[c] = Slot::Absent;
                continue;
            }
            const TraceSample* best = nullptr;
            for (const auto& s : samples) {
                if (s.channel != c || !usable(s)) continue;
                std::int64_t d = s.ts > g.t_ref ? s.ts - g.t_ref : g.t_ref - s.ts;
                if (d > window_ns) continue;
                std::int64_t bd = best == nullptr ? 0 : (best->ts > g.t_ref ? best->ts - g.t_ref : g.t_ref - best->ts);
                if (best == nullptr || d < bd || (d == bd && s.ts < best->ts)) best = &s;
            }
            if (best != nullptr) {
                g.slots[c] = Slot::Present;
                g.picked[c] = best->id;
            }
        }
        for (int id : g.picked) {
            if (id >= 0) used.insert(id);
        }
        last = g.t_ref;
        out.push_back(std::move(g));
    }
    return out;
}

// ---- mask dropout scan ------------------------------------------------------------------------

struct Span {
    std::int64_t start;
    std::int64_t end;
};

/// Offline stretches of one bit in a mask record sequence: from the first record with the bit
/// clear to the next record with it set, or the final record.
inline std::vector<Span> offline_spans(const std::vector<TraceMask>& masks, unsigned bit) {
    std::vector<Span> out;
    std::optional<std::int64_t> open;
    for (const auto& m : masks) {
        bool on = ((m.word >> bit) & 1u) != 0;
        if (!on && !open) open = m.ts;
        if (on && open) {
            out.push_back({*open, m.ts});
            open.reset();
        }
    }
    if (open && !masks.empty()) out.push_back({*open, masks.back().ts});
    return out;
}

}  // namespace oracle
