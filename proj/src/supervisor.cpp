#include "rapid/supervisor.hpp"

#include <algorithm>
#include <csignal>

#include "rapid/log.hpp"

namespace rapid {

namespace {
constexpr std::size_t kTransitionLogCap = 100'000;
}

std::string_view to_string(DeviceState s) noexcept {
    switch (s) {
        case DeviceState::Offline: return "Offline";
        case DeviceState::AttachedStarting: return "AttachedStarting";
        case DeviceState::Online: return "Online";
        case DeviceState::Backoff: return "Backoff";
        case DeviceState::Detaching: return "Detaching";
    }
    return "?";
}

Duration SupervisorConfig::backoff_delay(int attempt) const {
    if (attempt < 1) attempt = 1;
    return backoff_base * (std::int64_t{1} << std::min(attempt - 1, 30));
}

Supervisor::Supervisor(const Registry& registry, SupervisorConfig config, const Clock& clock,
                       ProcessControl& processes)
    : registry_(registry), config_(config), clock_(clock), processes_(processes), states_(registry.size()) {}

std::size_t Supervisor::index_of(const DeviceDescriptor& d) const {
    return static_cast<std::size_t>(&d - registry_.descriptors().data());
}

std::optional<std::size_t> Supervisor::index_of_pid(int pid) const {
    for (std::size_t i = 0; i < states_.size(); ++i) {
        if (states_[i].pid == pid) return i;
    }
    return std::nullopt;
}

const DeviceRuntimeState& Supervisor::state(std::string_view device) const {
    const DeviceDescriptor* d = registry_.find(device);
    if (d == nullptr) throw Error(Errc::InvariantViolation, "unknown device '" + std::string(device) + "'");
    return states_[index_of(*d)];
}

void Supervisor::set_state(std::size_t i, DeviceState to, std::string reason) {
    DeviceState from = states_[i].state;
    states_[i].state = to;
    if (from == to) return;
    if (transitions_.size() >= kTransitionLogCap) transitions_.erase(transitions_.begin(), transitions_.begin() + 1000);
    const std::string& name = registry_.descriptors()[i].name;
    log()->info("{}: {} -> {} ({})", name, to_string(from), to_string(to), reason);
    transitions_.push_back(Transition{now(), name, from, to, std::move(reason)});
}

void Supervisor::spawn_now(std::size_t i) {
    DeviceRuntimeState& rs = states_[i];
    const DeviceDescriptor& d = registry_.descriptors()[i];
    rs.pending_spawn_at.reset();
    rs.backoff_deadline.reset();
    rs.last_heartbeat.reset();
    rs.leader_exited = false;
    rs.kill_sent = false;
    rs.term_sent_at.reset();
    rs.endpoint.clear();
    ++rs.spawn_count;
    try {
        rs.pid = processes_.spawn(d);
        set_state(i, DeviceState::AttachedStarting, "spawned pid " + std::to_string(*rs.pid));
    } catch (const Error& e) {
        rs.pid.reset();
        log()->error("{}: spawn failed: {}", d.name, e.what());
        handle_crash(i, "spawn failure");
    }
}

void Supervisor::handle_crash(std::size_t i, std::string reason) {
    DeviceRuntimeState& rs = states_[i];
    if (!rs.attached || shutting_down_) {
        set_state(i, DeviceState::Offline, reason + ", device not attached");
        return;
    }
    if (rs.last_crash && now() - *rs.last_crash >= config_.backoff_window) rs.restart_count = 0;
    ++rs.restart_count;
    rs.last_crash = now();
    if (rs.restart_count <= config_.backoff_max_attempts) {
        Duration delay = config_.backoff_delay(rs.restart_count);
        rs.backoff_deadline = now() + delay;
        set_state(i, DeviceState::Backoff,
                  reason + ", restart " + std::to_string(rs.restart_count) + " in " +
                      std::to_string(std::chrono::duration_cast<std::chrono::milliseconds>(delay).count()) + " ms");
    } else {
        rs.failed = true;
        rs.backoff_deadline.reset();
        set_state(i, DeviceState::Offline, reason + ", giving up after " +
                                               std::to_string(config_.backoff_max_attempts) + " restarts");
    }
}

InjectOutcome Supervisor::handle_event(const HotplugEvent& ev) {
    InjectOutcome out;
    if (ev.kind == HotplugKind::Attach) {
        Occupancy occupied;
        for (std::size_t i = 0; i < states_.size(); ++i) {
            if (states_[i].attached) occupied.insert(registry_.descriptors()[i].name);
        }
        const DeviceDescriptor* d = match_device(ev.identity, registry_, occupied);
        if (d == nullptr) {
            bool model_exists = match_device(ev.identity, registry_) != nullptr;
            out.note = model_exists ? "additional identical device ignored" : "no registry match";
            log()->warn("attach {}: {}", to_string(ev.identity), out.note);
            return out;
        }
        std::size_t i = index_of(*d);
        DeviceRuntimeState& rs = states_[i];
        out.matched = true;
        out.device = d->name;
        if (rs.attached) {
            out.note = "already attached";
            out.state = std::string(to_string(rs.state));
            return out;
        }
        rs.attached = true;
        rs.failed = false;
        rs.device_path = ev.device_path;
        if (shutting_down_) {
            out.note = "daemon shutting down";
        } else if (rs.state == DeviceState::Detaching ||
                   (rs.last_detach && now() < *rs.last_detach + config_.cooldown)) {
            MonoTime at = rs.last_detach ? *rs.last_detach + config_.cooldown : now();
            rs.pending_spawn_at = std::max(at, now());
            out.note = "deferred by cooldown";
            log()->info("{}: attach deferred by cooldown", d->name);
        } else {
            spawn_now(i);
        }
        out.state = std::string(to_string(rs.state));
        return out;
    }

    auto idx = find_attached_for_detach(ev);
    if (!idx) {
        const DeviceDescriptor* d = match_device(ev.identity, registry_);
        out.matched = d != nullptr;
        if (d != nullptr) {
            out.device = d->name;
            out.state = std::string(to_string(states_[index_of(*d)].state));
        }
        out.note = "orphan detach";
        log()->warn("detach {}: orphan detach, device was not attached", to_string(ev.identity));
        return out;
    }
    std::size_t i = *idx;
    DeviceRuntimeState& rs = states_[i];
    out.matched = true;
    out.device = registry_.descriptors()[i].name;
    rs.attached = false;
    rs.failed = false;
    rs.device_path.reset();
    rs.last_detach = now();
    rs.restart_count = 0;
    rs.last_crash.reset();
    rs.pending_spawn_at.reset();
    rs.backoff_deadline.reset();
    if (rs.pid && rs.state != DeviceState::Detaching) {
        processes_.signal_group(*rs.pid, SIGTERM);
        rs.term_sent_at = now();
        rs.kill_sent = false;
        set_state(i, DeviceState::Detaching, "device detached, SIGTERM sent");
    } else if (!rs.pid) {
        const DeviceDescriptor& d = registry_.descriptors()[i];
        if (d.on_detach) processes_.run_detach_hook(d);
        set_state(i, DeviceState::Offline, "device detached");
    }
    out.state = std::string(to_string(rs.state));
    return out;
}

std::optional<std::size_t> Supervisor::find_attached_for_detach(const HotplugEvent& ev) const {
    const auto& ds = registry_.descriptors();
    if (ev.device_path) {
        for (std::size_t i = 0; i < states_.size(); ++i) {
            if (states_[i].attached && states_[i].device_path == ev.device_path) return i;
        }
    }
    if (ev.identity.serial) {
        for (std::size_t i = 0; i < states_.size(); ++i) {
            const auto& id = ds[i].identity;
            if (states_[i].attached && id.serial && id.vid == ev.identity.vid && id.pid == ev.identity.pid &&
                *id.serial == *ev.identity.serial) {
                return i;
            }
        }
    }
    for (std::size_t i = 0; i < states_.size(); ++i) {
        const auto& id = ds[i].identity;
        if (states_[i].attached && !id.serial && id.vid == ev.identity.vid && id.pid == ev.identity.pid) return i;
    }
    if (!ev.identity.serial && !ev.device_path) {
        // OS removals carry no serial; fall back to any attached entry of that model.
        for (std::size_t i = 0; i < states_.size(); ++i) {
            const auto& id = ds[i].identity;
            if (states_[i].attached && id.vid == ev.identity.vid && id.pid == ev.identity.pid) return i;
        }
    }
    return std::nullopt;
}

void Supervisor::finish_detach(std::size_t i) {
    DeviceRuntimeState& rs = states_[i];
    const DeviceDescriptor& d = registry_.descriptors()[i];
    ExitReport report;
    report.device = d.name;
    report.graceful = !rs.kill_sent;
    report.duration = rs.term_sent_at ? now() - *rs.term_sent_at : Duration::zero();
    exit_reports_.push_back(report);
    rs.pid.reset();
    rs.leader_exited = false;
    rs.term_sent_at.reset();
    rs.kill_sent = false;
    if (d.on_detach && !shutting_down_) processes_.run_detach_hook(d);
    set_state(i, DeviceState::Offline, report.graceful ? "process exited" : "process killed after grace period");
    if (rs.attached && !rs.pending_spawn_at && !shutting_down_) {
        MonoTime at = rs.last_detach ? *rs.last_detach + config_.cooldown : now();
        rs.pending_spawn_at = std::max(at, now());
    }
}

void Supervisor::on_child_exit(int pid, int status) {
    if (reaping_.erase(pid) > 0) return;
    auto idx = index_of_pid(pid);
    if (!idx) return;
    std::size_t i = *idx;
    DeviceRuntimeState& rs = states_[i];
    const std::string status_text = "pid " + std::to_string(pid) + " exited (status " + std::to_string(status) + ")";
    if (rs.state == DeviceState::Detaching) {
        if (processes_.group_alive(pid)) {
            rs.leader_exited = true;
            return;
        }
        finish_detach(i);
        return;
    }
    // Leftover group members of a crashed leader must not outlive it.
    processes_.signal_group(pid, SIGKILL);
    rs.pid.reset();
    if (rs.attached && !shutting_down_) {
        log()->warn("{}: {}", registry_.descriptors()[i].name, status_text);
        handle_crash(i, status_text);
    } else {
        set_state(i, DeviceState::Offline, status_text);
    }
}

void Supervisor::on_heartbeat(std::string_view device, std::uint64_t seq, std::string_view endpoint) {
    const DeviceDescriptor* d = registry_.find(device);
    if (d == nullptr) return;
    std::size_t i = index_of(*d);
    DeviceRuntimeState& rs = states_[i];
    if (!rs.pid || rs.leader_exited) return;
    rs.last_heartbeat = now();
    rs.heartbeat_seq = seq;
    if (!endpoint.empty()) rs.endpoint = std::string(endpoint);
    if (rs.state == DeviceState::AttachedStarting && rs.attached) {
        set_state(i, DeviceState::Online, "first heartbeat");
    }
}

void Supervisor::heartbeat_check() {
    const Duration limit = config_.heartbeat_interval * config_.heartbeat_misses_fatal;
    for (std::size_t i = 0; i < states_.size(); ++i) {
        DeviceRuntimeState& rs = states_[i];
        if (rs.state != DeviceState::Online || !rs.pid || !rs.last_heartbeat) continue;
        if (now() - *rs.last_heartbeat < limit) continue;
        log()->warn("{}: {} heartbeats missed, killing process group {}", registry_.descriptors()[i].name,
                    config_.heartbeat_misses_fatal, *rs.pid);
        processes_.signal_group(*rs.pid, SIGKILL);
        reaping_.insert(*rs.pid);
        rs.pid.reset();
        handle_crash(i, "heartbeat lost");
    }
}

void Supervisor::tick() {
    for (std::size_t i = 0; i < states_.size(); ++i) {
        DeviceRuntimeState& rs = states_[i];
        if (rs.state == DeviceState::Detaching) {
            if (rs.leader_exited && rs.pid && !processes_.group_alive(*rs.pid)) {
                finish_detach(i);
                continue;
            }
            if (!rs.kill_sent && rs.term_sent_at && now() >= *rs.term_sent_at + config_.grace && rs.pid) {
                log()->warn("{}: grace period expired, SIGKILL to group {}", registry_.descriptors()[i].name, *rs.pid);
                processes_.signal_group(*rs.pid, SIGKILL);
                rs.kill_sent = true;
            }
            continue;
        }
        if (shutting_down_) continue;
        if (rs.state == DeviceState::Offline && rs.attached && !rs.pid && rs.pending_spawn_at &&
            now() >= *rs.pending_spawn_at) {
            spawn_now(i);
            continue;
        }
        if (rs.state == DeviceState::Backoff && rs.backoff_deadline && now() >= *rs.backoff_deadline) {
            spawn_now(i);
            continue;
        }
        if ((rs.state == DeviceState::Online || rs.state == DeviceState::AttachedStarting) && rs.restart_count > 0 &&
            rs.last_crash && now() - *rs.last_crash >= config_.backoff_window) {
            rs.restart_count = 0;
            rs.last_crash.reset();
        }
    }
    heartbeat_check();
}

PresenceState Supervisor::presence_word() const {
    PresenceState p;
    p.device_count = static_cast<std::uint8_t>(registry_.size());
    for (std::size_t i = 0; i < states_.size(); ++i) {
        if (states_[i].state == DeviceState::Online) p.word |= std::uint64_t{1} << registry_.descriptors()[i].bit;
    }
    return p;
}

void Supervisor::begin_shutdown() {
    shutting_down_ = true;
    for (std::size_t i = 0; i < states_.size(); ++i) {
        DeviceRuntimeState& rs = states_[i];
        rs.pending_spawn_at.reset();
        rs.backoff_deadline.reset();
        if (rs.pid && rs.state != DeviceState::Detaching) {
            processes_.signal_group(*rs.pid, SIGTERM);
            rs.term_sent_at = now();
            rs.kill_sent = false;
            set_state(i, DeviceState::Detaching, "shutdown, SIGTERM sent");
        } else if (!rs.pid && rs.state != DeviceState::Offline) {
            set_state(i, DeviceState::Offline, "shutdown");
        }
    }
}

bool Supervisor::all_children_exited() const {
    return std::none_of(states_.begin(), states_.end(), [](const DeviceRuntimeState& rs) { return rs.pid.has_value(); });
}

std::vector<int> Supervisor::live_pids() const {
    std::vector<int> out;
    for (const auto& rs : states_) {
        if (rs.pid) out.push_back(*rs.pid);
    }
    return out;
}

std::vector<ExitReport> Supervisor::take_exit_reports() {
    std::vector<ExitReport> out;
    out.swap(exit_reports_);
    return out;
}

std::optional<MonoTime> Supervisor::next_deadline() const {
    std::optional<MonoTime> best;
    auto consider = [&](std::optional<MonoTime> t) {
        if (t && (!best || *t < *best)) best = t;
    };
    const Duration limit = config_.heartbeat_interval * config_.heartbeat_misses_fatal;
    for (const auto& rs : states_) {
        if (rs.state == DeviceState::Detaching && !rs.kill_sent && rs.term_sent_at) consider(*rs.term_sent_at + config_.grace);
        consider(rs.pending_spawn_at);
        if (rs.state == DeviceState::Backoff) consider(rs.backoff_deadline);
        if (rs.state == DeviceState::Online && rs.last_heartbeat) consider(*rs.last_heartbeat + limit);
        if (rs.restart_count > 0 && rs.last_crash) consider(*rs.last_crash + config_.backoff_window);
    }
    return best;
}

}  // namespace rapid
