#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>

namespace rapid {

using Duration = std::chrono::nanoseconds;
// Monotonic instants. std::chrono::steady_clock is CLOCK_MONOTONIC on Linux, so values are
// comparable across processes on one host.
using MonoTime = std::chrono::time_point<std::chrono::steady_clock, Duration>;

inline std::int64_t to_ns(MonoTime t) noexcept { return t.time_since_epoch().count(); }
inline MonoTime from_ns(std::int64_t ns) noexcept { return MonoTime(Duration(ns)); }

inline MonoTime mono_now() noexcept {
    return std::chrono::time_point_cast<Duration>(std::chrono::steady_clock::now());
}

class Clock {
public:
    virtual ~Clock() = default;
    virtual MonoTime now() const = 0;
};

class SteadyClock final : public Clock {
public:
    MonoTime now() const override { return mono_now(); }
};

/// Test clock; only moves when told to.
class ManualClock final : public Clock {
public:
    explicit ManualClock(MonoTime start = MonoTime(std::chrono::seconds(1000))) : now_(to_ns(start)) {}

    MonoTime now() const override { return from_ns(now_.load()); }
    void set(MonoTime t) { now_.store(to_ns(t)); }
    void advance(Duration d) { now_.fetch_add(d.count()); }

private:
    std::atomic<std::int64_t> now_;
};

}  // namespace rapid
