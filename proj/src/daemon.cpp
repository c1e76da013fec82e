#include "rapid/daemon.hpp"

#include <algorithm>
#include <future>

#include <poll.h>
#include <sys/eventfd.h>
#include <unistd.h>

#include "rapid/error.hpp"
#include "rapid/log.hpp"
#include "rapid/process.hpp"

namespace rapid {

namespace {

DeviceState parse_state(const std::string& s) {
    for (DeviceState st : {DeviceState::Offline, DeviceState::AttachedStarting, DeviceState::Online,
                           DeviceState::Backoff, DeviceState::Detaching}) {
        if (to_string(st) == s) return st;
    }
    throw Error(Errc::ParseError, "unknown device state '" + s + "'");
}

}  // namespace

std::filesystem::path DaemonConfig::resolved_heartbeat_socket() const {
    if (!heartbeat_socket.empty()) return heartbeat_socket;
    return control_socket.string() + ".hb";
}

nlohmann::json StatusSnapshot::to_json(const Registry* registry) const {
    nlohmann::json j;
    j["ok"] = true;
    j["sequence"] = sequence;
    j["mask_word"] = mask_word;
    j["mask"] = format_mask_hex(mask_word, device_count);
    j["mask_binary"] = format_mask_binary(mask_word, device_count);
    j["device_count"] = device_count;
    j["devices"] = nlohmann::json::array();
    for (const auto& d : devices) {
        j["devices"].push_back({{"name", d.name},
                                {"bit", d.bit},
                                {"state", std::string(to_string(d.state))},
                                {"attached", d.attached},
                                {"failed", d.failed},
                                {"restart_count", d.restart_count},
                                {"topic", d.topic},
                                {"endpoint", d.endpoint.empty() ? nlohmann::json(nullptr) : nlohmann::json(d.endpoint)},
                                {"pid", d.pid ? nlohmann::json(*d.pid) : nlohmann::json(nullptr)}});
    }
    j["log"] = log;
    j["mask_path"] = mask_path;
    j["mask_topic"] = mask_topic.empty() ? nlohmann::json(nullptr) : nlohmann::json(mask_topic);
    if (registry != nullptr) j["registry"] = registry_to_json(*registry);
    return j;
}

StatusSnapshot StatusSnapshot::from_json(const nlohmann::json& j) {
    try {
        StatusSnapshot s;
        s.sequence = j.at("sequence").get<std::uint64_t>();
        s.mask_word = j.at("mask_word").get<std::uint64_t>();
        s.device_count = j.at("device_count").get<unsigned>();
        for (const auto& d : j.at("devices")) {
            DeviceStatus ds;
            ds.name = d.at("name").get<std::string>();
            ds.bit = d.at("bit").get<unsigned>();
            ds.state = parse_state(d.at("state").get<std::string>());
            ds.attached = d.at("attached").get<bool>();
            ds.failed = d.value("failed", false);
            ds.restart_count = d.at("restart_count").get<int>();
            ds.topic = d.value("topic", "");
            if (d.contains("endpoint") && d["endpoint"].is_string()) ds.endpoint = d["endpoint"].get<std::string>();
            if (d.contains("pid") && d["pid"].is_number()) ds.pid = d["pid"].get<int>();
            s.devices.push_back(std::move(ds));
        }
        if (j.contains("log")) s.log = j["log"].get<std::vector<std::string>>();
        s.mask_path = j.value("mask_path", "");
        if (j.contains("mask_topic") && j["mask_topic"].is_string()) s.mask_topic = j["mask_topic"].get<std::string>();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, std::string("malformed status: ") + e.what());
    }
}

Daemon::Daemon(DaemonConfig config) : config_(std::move(config)) {
    const auto hb_path = config_.resolved_heartbeat_socket();
    heartbeats_ = std::make_unique<HeartbeatReceiver>(hb_path);
    if (config_.backend == ProcessBackend::Simulated) {
        processes_ = std::make_unique<SimulatedProcessControl>(hb_path);
    } else {
        processes_ = std::make_unique<PosixProcessControl>(hb_path, config_.child_env, config_.reap_orphans);
    }
    supervisor_ = std::make_unique<Supervisor>(config_.registry, config_.supervisor, clock_, *processes_);
    if (config_.mask_topic_bind) mask_topic_ = std::make_unique<Publisher>(*config_.mask_topic_bind);

    const auto count = static_cast<std::uint8_t>(config_.registry.size());
    mask_ = std::make_unique<MaskPublisher>(
        config_.mask, [this, count] { return PresenceState{presence_.load(), count}; },
        [this](const PhysicalMask& m) {
            return render_debug(m, config_.registry, iso8601_utc(std::chrono::system_clock::now()));
        });
    if (mask_topic_) {
        const auto every = static_cast<std::uint64_t>(std::max(1, config_.mask_topic_decimation));
        mask_->set_tick_observer([this, every](const PhysicalMask& m, const MaskRecord& rec) {
            if (ticks_.fetch_add(1) % every != 0) return;
            try {
                mask_topic_->publish(kMaskTopic, static_cast<std::int64_t>(m.timestamp_ns), rec);
            } catch (const Error& e) {
                log()->debug("mask topic: {}", e.what());
            }
        });
    }
    if (config_.os_events) {
        try {
            uevents_ = std::make_unique<UeventMonitor>();
        } catch (const Error& e) {
            log()->info("kernel hot-plug events unavailable ({}); injection only", e.what());
        }
    }
    wake_fd_ = ::eventfd(0, EFD_NONBLOCK | EFD_CLOEXEC);
    control_ = std::make_unique<LineServer>(config_.control_socket,
                                            [this](const std::string& line) { return handle_line(line); });
}

Daemon::~Daemon() {
    stop();
    if (wake_fd_ >= 0) ::close(wake_fd_);
}

void Daemon::start() {
    if (loop_.joinable()) return;
    if (config_.reap_orphans) become_subreaper();
    mask_->start();
    loop_ = std::jthread([this](std::stop_token st) { loop(st); });
    control_->start();
    log()->info("daemon up: {} devices, mask {}, control {}", config_.registry.size(), config_.mask.path.string(),
                config_.control_socket.string());
}

void Daemon::stop() {
    if (stopped_.exchange(true)) return;
    stopping_ = true;
    if (control_) control_->stop();
    if (loop_.joinable()) {
        loop_.request_stop();
        wake();
        loop_.join();
    }
    events_.close();
    if (mask_) {
        mask_->stop();
        try {
            mask_->publish_once();
            mask_->write_debug_now();
        } catch (const Error& e) {
            log()->warn("final mask write: {}", e.what());
        }
    }
    if (mask_topic_) mask_topic_->close();
    std::lock_guard lock(status_mu_);
    status_waiters_.clear();
}

void Daemon::wake() {
    std::uint64_t one = 1;
    [[maybe_unused]] auto n = ::write(wake_fd_, &one, sizeof one);
}

void Daemon::submit(HotplugEvent event, InjectReply reply) {
    if (stopping_) throw Error(Errc::ChannelClosed, "daemon is stopping");
    events_.push(QueuedEvent{std::move(event), std::move(reply)});
}

StatusSnapshot Daemon::status(Duration timeout) {
    if (stopping_ || !loop_.joinable()) throw Error(Errc::DaemonUnreachable, "daemon loop not running");
    auto promise = std::make_shared<std::promise<StatusSnapshot>>();
    auto future = promise->get_future();
    {
        std::lock_guard lock(status_mu_);
        status_waiters_.push_back([promise](const StatusSnapshot& s) { promise->set_value(s); });
    }
    wake();
    if (future.wait_for(timeout) != std::future_status::ready) {
        throw Error(Errc::DaemonUnreachable, "status request timed out");
    }
    return future.get();
}

std::string Daemon::mask_topic_endpoint() const { return mask_topic_ ? mask_topic_->endpoint() : std::string(); }

std::uint64_t Daemon::sequence() const { return mask_->sequence(); }

std::string Daemon::handle_line(const std::string& line) {
    nlohmann::json req;
    try {
        req = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, std::string("request is not JSON: ") + e.what());
    }
    if (req.contains("cmd")) {
        const std::string cmd = req["cmd"].is_string() ? req["cmd"].get<std::string>() : "";
        if (cmd == "status") return status().to_json(&config_.registry).dump();
        if (cmd == "ping") return nlohmann::json{{"ok", true}}.dump();
        throw Error(Errc::ParseError, "unknown command '" + cmd + "'");
    }
    HotplugEvent ev = parse_injection(req);
    if (ev.timestamp_ns == 0) ev.timestamp_ns = to_ns(mono_now());
    auto promise = std::make_shared<std::promise<InjectOutcome>>();
    auto future = promise->get_future();
    submit(std::move(ev), [promise](const InjectOutcome& o) { promise->set_value(o); });
    if (future.wait_for(std::chrono::seconds(5)) != std::future_status::ready) {
        throw Error(Errc::DaemonUnreachable, "event was not processed in time");
    }
    return outcome_to_json(future.get()).dump();
}

StatusSnapshot Daemon::snapshot_locked_loop() const {
    StatusSnapshot s;
    PresenceState p = supervisor_->presence_word();
    s.sequence = mask_->sequence();
    s.mask_word = p.word;
    s.device_count = p.device_count;
    const auto& descs = config_.registry.descriptors();
    for (std::size_t i = 0; i < descs.size(); ++i) {
        const DeviceRuntimeState& rs = supervisor_->state_at(i);
        s.devices.push_back(DeviceStatus{descs[i].name, descs[i].bit, rs.state, rs.attached, rs.failed,
                                         rs.restart_count, descs[i].topic,
                                         rs.state == DeviceState::Online ? rs.endpoint : std::string(), rs.pid});
    }
    std::sort(s.devices.begin(), s.devices.end(), [](const auto& a, const auto& b) { return a.bit < b.bit; });
    s.log = recent_log_lines(20);
    s.mask_path = config_.mask.path.string();
    s.mask_topic = mask_topic_endpoint();
    return s;
}

void Daemon::loop(std::stop_token stop) {
    auto publish_presence = [&] { presence_.store(supervisor_->presence_word().word); };
    std::optional<MonoTime> shutdown_deadline;
    std::vector<pollfd> fds;
    for (;;) {
        fds.clear();
        fds.push_back({wake_fd_, POLLIN, 0});
        fds.push_back({events_.wake_fd(), POLLIN, 0});
        fds.push_back({heartbeats_->fd(), POLLIN, 0});
        if (uevents_) fds.push_back({uevents_->fd(), POLLIN, 0});
        int timeout_ms = 5;
        if (auto next = supervisor_->next_deadline()) {
            auto until = std::chrono::ceil<std::chrono::milliseconds>(*next - mono_now()).count();
            timeout_ms = static_cast<int>(std::clamp<long long>(until, 0, timeout_ms));
        }
        ::poll(fds.data(), fds.size(), timeout_ms);
        if (fds[0].revents & POLLIN) {
            std::uint64_t v;
            [[maybe_unused]] auto n = ::read(wake_fd_, &v, sizeof v);
        }

        while (auto item = events_.try_pop()) {
            InjectOutcome out = supervisor_->handle_event(item->event);
            publish_presence();
            if (item->reply) item->reply(out);
        }
        if (uevents_) {
            try {
                while (auto ev = uevents_->read_event()) {
                    supervisor_->handle_event(*ev);
                    publish_presence();
                }
            } catch (const Error& e) {
                log()->warn("uevent read: {}", e.what());
            }
        }
        for (const auto& hb : heartbeats_->drain()) supervisor_->on_heartbeat(hb.device, hb.seq, hb.endpoint);
        for (const auto& c : processes_->reap()) supervisor_->on_child_exit(c.pid, c.status);
        supervisor_->tick();
        publish_presence();
        for (const auto& r : supervisor_->take_exit_reports()) {
            log()->info("{}: process group ended {} after {} ms", r.device, r.graceful ? "gracefully" : "by SIGKILL",
                        std::chrono::duration_cast<std::chrono::milliseconds>(r.duration).count());
        }

        std::vector<std::function<void(const StatusSnapshot&)>> waiters;
        {
            std::lock_guard lock(status_mu_);
            waiters.swap(status_waiters_);
        }
        if (!waiters.empty()) {
            StatusSnapshot snap = snapshot_locked_loop();
            for (auto& w : waiters) w(snap);
        }

        if (stop.stop_requested()) {
            if (!supervisor_->shutting_down()) {
                supervisor_->begin_shutdown();
                publish_presence();
                shutdown_deadline = mono_now() + config_.supervisor.grace + std::chrono::seconds(2);
            }
            if (supervisor_->all_children_exited()) break;
            if (mono_now() > *shutdown_deadline) {
                log()->error("shutdown: process groups still alive after the grace period");
                break;
            }
        }
    }
    // Drain any injections that raced with shutdown so their callers are not left waiting.
    while (auto item = events_.try_pop()) {
        if (item->reply) item->reply(InjectOutcome{false, {}, {}, "daemon stopping"});
    }
}

}  // namespace rapid
