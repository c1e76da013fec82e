#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <thread>

#include "rapid/clock.hpp"
#include "rapid/mask.hpp"

namespace rapid {

/// $RAPID_MASK_PATH, else /dev/shm/rapid_hardware_mask (temp dir when /dev/shm is absent).
std::filesystem::path default_mask_path();

struct MaskChannel {
    std::filesystem::path path = default_mask_path();
    std::filesystem::path debug_path;  // empty: path + ".json"
    Duration publish_interval = std::chrono::milliseconds(2);
    Duration debug_interval = std::chrono::seconds(1);

    std::filesystem::path resolved_debug_path() const;
};

struct PresenceState {
    std::uint64_t word = 0;
    std::uint8_t device_count = 0;
};

using StateSource = std::function<PresenceState()>;
using DebugRenderer = std::function<std::string(const PhysicalMask&)>;
using TickObserver = std::function<void(const PhysicalMask&, const MaskRecord&)>;

/// Single writer of the shared mask record. Each tick takes one presence snapshot, bumps the
/// sequence, stamps the monotonic time and rewrites all 32 bytes with one pwrite.
class MaskPublisher {
public:
    /// Creates the record file (atomically, via rename) and opens it. Throws Error{IoError}.
    MaskPublisher(MaskChannel channel, StateSource source, DebugRenderer debug = {});
    ~MaskPublisher();

    MaskPublisher(const MaskPublisher&) = delete;
    MaskPublisher& operator=(const MaskPublisher&) = delete;

    /// Called on the writer thread after every successful tick.
    void set_tick_observer(TickObserver observer);

    /// Runs the 500 Hz loop on a background thread.
    void start();
    void stop();
    bool running() const noexcept { return thread_.joinable(); }

    /// One publish tick, on the caller's thread. Returns the record written.
    PhysicalMask publish_once();
    void write_debug_now();

    std::uint64_t sequence() const noexcept { return sequence_.load(); }
    std::uint64_t write_errors() const noexcept { return write_errors_.load(); }
    const MaskChannel& channel() const noexcept { return channel_; }

private:
    void loop(std::stop_token stop);

    MaskChannel channel_;
    StateSource source_;
    DebugRenderer debug_;
    TickObserver observer_;
    int fd_ = -1;
    std::atomic<std::uint64_t> sequence_{0};
    std::atomic<std::uint64_t> write_errors_{0};
    PhysicalMask last_{};
    std::jthread thread_;
};

/// Consistent snapshot of a shared record: reads until two consecutive reads are identical.
/// Throws Error{Unavailable | ShortBuffer | BadMagic | UnsupportedVersion | TornRead}.
PhysicalMask read_mask(const std::filesystem::path& path, int max_attempts = 16);

/// Writes `contents` to `path` through a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace rapid
