#include "rapid/mask_channel.hpp"

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fstream>

#include <fcntl.h>
#include <unistd.h>

#include "rapid/log.hpp"

namespace rapid {

namespace fs = std::filesystem;

fs::path default_mask_path() {
    if (const char* env = std::getenv("RAPID_MASK_PATH"); env != nullptr && *env != '\0') return env;
    std::error_code ec;
    if (fs::is_directory("/dev/shm", ec)) return "/dev/shm/rapid_hardware_mask";
    return fs::temp_directory_path() / "rapid_hardware_mask";
}

fs::path MaskChannel::resolved_debug_path() const {
    if (!debug_path.empty()) return debug_path;
    fs::path p = path;
    p += ".json";
    return p;
}

void write_file_atomic(const fs::path& path, std::string_view contents) {
    fs::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0) throw Error(Errc::IoError, "cannot create " + tmp.string() + ": " + std::strerror(errno));
    std::size_t done = 0;
    while (done < contents.size()) {
        ssize_t n = ::write(fd, contents.data() + done, contents.size() - done);
        if (n < 0) {
            if (errno == EINTR) continue;
            int err = errno;
            ::close(fd);
            ::unlink(tmp.c_str());
            throw Error(err == ENOSPC ? Errc::DiskFull : Errc::IoError,
                        "cannot write " + tmp.string() + ": " + std::strerror(err));
        }
        done += static_cast<std::size_t>(n);
    }
    ::close(fd);
    if (::rename(tmp.c_str(), path.c_str()) != 0) {
        int err = errno;
        ::unlink(tmp.c_str());
        throw Error(Errc::IoError, "cannot rename onto " + path.string() + ": " + std::strerror(err));
    }
}

MaskPublisher::MaskPublisher(MaskChannel channel, StateSource source, DebugRenderer debug)
    : channel_(std::move(channel)), source_(std::move(source)), debug_(std::move(debug)) {
    PresenceState s = source_ ? source_() : PresenceState{};
    last_.device_count = s.device_count;
    last_.mask = s.word & ~unassigned_bits(s.device_count);
    last_.timestamp_ns = static_cast<std::uint64_t>(to_ns(mono_now()));
    last_.sequence = 0;
    MaskRecord rec = encode_mask(last_);
    write_file_atomic(channel_.path, std::string_view(reinterpret_cast<const char*>(rec.data()), rec.size()));
    fd_ = ::open(channel_.path.c_str(), O_WRONLY | O_CLOEXEC);
    if (fd_ < 0) throw Error(Errc::IoError, "cannot open " + channel_.path.string() + ": " + std::strerror(errno));
}

MaskPublisher::~MaskPublisher() {
    stop();
    if (fd_ >= 0) ::close(fd_);
}

void MaskPublisher::set_tick_observer(TickObserver observer) { observer_ = std::move(observer); }

void MaskPublisher::start() {
    if (thread_.joinable()) return;
    thread_ = std::jthread([this](std::stop_token st) { loop(st); });
}

void MaskPublisher::stop() {
    if (!thread_.joinable()) return;
    thread_.request_stop();
    thread_.join();
}

PhysicalMask MaskPublisher::publish_once() {
    PresenceState s = source_ ? source_() : PresenceState{};
    PhysicalMask m;
    m.device_count = s.device_count;
    m.mask = s.word & ~unassigned_bits(s.device_count);
    m.sequence = sequence_.load() + 1;
    m.timestamp_ns = static_cast<std::uint64_t>(to_ns(mono_now()));
    MaskRecord rec = encode_mask(m);
    ssize_t n = ::pwrite(fd_, rec.data(), rec.size(), 0);
    if (n != static_cast<ssize_t>(rec.size())) {
        if (write_errors_.fetch_add(1) % 500 == 0) {
            log()->warn("mask write to {} failed: {}", channel_.path.string(),
                        n < 0 ? std::strerror(errno) : "short write");
        }
        return last_;
    }
    sequence_.store(m.sequence);
    last_ = m;
    if (observer_) observer_(m, rec);
    return m;
}

void MaskPublisher::write_debug_now() {
    if (!debug_) return;
    try {
        write_file_atomic(channel_.resolved_debug_path(), debug_(last_));
    } catch (const std::exception& e) {
        log()->warn("debug mask view not written: {}", e.what());
    }
}

void MaskPublisher::loop(std::stop_token stop) {
    const Duration interval = channel_.publish_interval;
    MonoTime next = mono_now();
    MonoTime next_debug = next;
    while (!stop.stop_requested()) {
        publish_once();
        MonoTime now = mono_now();
        if (debug_ && now >= next_debug) {
            write_debug_now();
            next_debug = now + channel_.debug_interval;
        }
        next += interval;
        if (next < now - interval) next = now;  // fell behind by more than a tick: resynchronise
        std::this_thread::sleep_until(next);
    }
}

PhysicalMask read_mask(const fs::path& path, int max_attempts) {
    int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
    if (fd < 0) {
        throw Error(Errc::Unavailable, "mask record " + path.string() + ": " + std::strerror(errno));
    }
    MaskRecord a{}, b{};
    ssize_t na = ::pread(fd, a.data(), a.size(), 0);
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        ssize_t nb = ::pread(fd, b.data(), b.size(), 0);
        if (na == static_cast<ssize_t>(a.size()) && nb == na && a == b) {
            ::close(fd);
            return decode_mask(a);
        }
        a = b;
        na = nb;
    }
    ::close(fd);
    if (na >= 0 && na < static_cast<ssize_t>(a.size())) {
        throw Error(Errc::ShortBuffer, "mask record " + path.string() + " is " + std::to_string(na) + " bytes");
    }
    throw Error(Errc::TornRead, "no stable snapshot of " + path.string() + " after " +
                                    std::to_string(max_attempts) + " attempts");
}

}  // namespace rapid
