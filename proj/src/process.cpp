#include "rapid/process.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>

#include <spawn.h>
#include <sys/prctl.h>
#include <sys/wait.h>
#include <unistd.h>

#include "rapid/log.hpp"

extern char** environ;

namespace rapid {

namespace {

bool is_simple_command(const std::string& cmd) {
    return cmd.find_first_of(";&|<>()`$\n") == std::string::npos;
}

std::string join_shape(const std::vector<std::size_t>& shape) {
    std::string out;
    for (std::size_t i = 0; i < shape.size(); ++i) out += (i ? "," : "") + std::to_string(shape[i]);
    return out;
}

}  // namespace

PosixProcessControl::PosixProcessControl(std::filesystem::path heartbeat_socket,
                                         std::map<std::string, std::string> extra_env, bool reap_orphans)
    : heartbeat_socket_(std::move(heartbeat_socket)), extra_env_(std::move(extra_env)), reap_orphans_(reap_orphans) {}

int PosixProcessControl::spawn_command(const std::string& command, const std::map<std::string, std::string>& env) {
    std::map<std::string, std::string> merged;
    for (char** e = environ; e != nullptr && *e != nullptr; ++e) {
        std::string kv(*e);
        auto eq = kv.find('=');
        if (eq != std::string::npos) merged[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    for (const auto& [k, v] : extra_env_) merged[k] = v;
    for (const auto& [k, v] : env) merged[k] = v;
    std::vector<std::string> env_strings;
    env_strings.reserve(merged.size());
    for (const auto& [k, v] : merged) env_strings.push_back(k + "=" + v);
    std::vector<char*> envp;
    for (auto& s : env_strings) envp.push_back(s.data());
    envp.push_back(nullptr);

    std::string script = is_simple_command(command) ? "exec " + command : command;
    std::string sh = "/bin/sh", dash_c = "-c";
    std::vector<char*> argv{sh.data(), dash_c.data(), script.data(), nullptr};

    posix_spawnattr_t attr;
    posix_spawnattr_init(&attr);
    sigset_t none, defaults;
    sigemptyset(&none);
    sigemptyset(&defaults);
    for (int s : {SIGTERM, SIGINT, SIGPIPE, SIGCHLD, SIGHUP}) sigaddset(&defaults, s);
    posix_spawnattr_setsigmask(&attr, &none);
    posix_spawnattr_setsigdefault(&attr, &defaults);
    posix_spawnattr_setpgroup(&attr, 0);
    posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP | POSIX_SPAWN_SETSIGMASK | POSIX_SPAWN_SETSIGDEF);
    pid_t pid = -1;
    int rc = posix_spawn(&pid, sh.c_str(), nullptr, &attr, argv.data(), envp.data());
    posix_spawnattr_destroy(&attr);
    if (rc != 0) throw Error(Errc::SpawnFailure, "posix_spawn '" + command + "': " + std::strerror(rc));
    children_.insert(pid);
    return pid;
}

int PosixProcessControl::spawn(const DeviceDescriptor& d) {
    std::map<std::string, std::string> env{
        {"RAPID_DEVICE", d.name},
        {"RAPID_TOPIC", d.topic},
        {"RAPID_BIT", std::to_string(d.bit)},
        {"RAPID_SHAPE", join_shape(d.shape)},
        {"RAPID_HEARTBEAT_SOCKET", heartbeat_socket_.string()},
    };
    int pid = spawn_command(d.on_attach, env);
    log()->debug("{}: spawned '{}' as pid {}", d.name, d.on_attach, pid);
    return pid;
}

void PosixProcessControl::signal_group(int pgid, int signo) {
    if (pgid <= 1) return;
    if (::kill(-pgid, signo) != 0 && errno != ESRCH) {
        log()->warn("kill(-{}, {}): {}", pgid, signo, std::strerror(errno));
    }
}

bool PosixProcessControl::group_alive(int pgid) {
    if (pgid <= 1) return false;
    return ::kill(-pgid, 0) == 0;
}

void PosixProcessControl::run_detach_hook(const DeviceDescriptor& d) {
    if (!d.on_detach) return;
    try {
        spawn_command(*d.on_detach, {{"RAPID_DEVICE", d.name}, {"RAPID_TOPIC", d.topic}});
    } catch (const Error& e) {
        log()->warn("{}: on_detach failed: {}", d.name, e.what());
    }
}

std::vector<ReapedChild> PosixProcessControl::reap() {
    std::vector<ReapedChild> out;
    if (reap_orphans_) {
        out = reap_children();
        for (const auto& c : out) children_.erase(c.pid);
        return out;
    }
    for (auto it = children_.begin(); it != children_.end();) {
        int status = 0;
        pid_t r = ::waitpid(*it, &status, WNOHANG);
        if (r == *it || (r < 0 && errno == ECHILD)) {
            if (r == *it) out.push_back(ReapedChild{*it, status});
            it = children_.erase(it);
        } else {
            ++it;
        }
    }
    return out;
}

SimulatedProcessControl::SimulatedProcessControl(std::filesystem::path heartbeat_socket, Duration period)
    : sender_(std::move(heartbeat_socket)) {
    thread_ = std::jthread([this, period](std::stop_token st) {
        std::uint64_t seq = 0;
        while (!st.stop_requested()) {
            MonoTime until = mono_now() + period;
            while (!st.stop_requested() && mono_now() < until) std::this_thread::sleep_for(std::chrono::milliseconds(10));
            std::lock_guard lock(mu_);
            ++seq;
            for (const auto& [pid, name] : live_) sender_.send(Heartbeat{name, seq, {}});
        }
    });
}

SimulatedProcessControl::~SimulatedProcessControl() {
    thread_.request_stop();
    if (thread_.joinable()) thread_.join();
}

int SimulatedProcessControl::spawn(const DeviceDescriptor& d) {
    std::lock_guard lock(mu_);
    int pid = next_pid_++;
    live_[pid] = d.name;
    ++spawns_;
    sender_.send(Heartbeat{d.name, 0, {}});
    return pid;
}

void SimulatedProcessControl::signal_group(int pgid, int signo) {
    if (signo == 0) return;
    std::lock_guard lock(mu_);
    if (live_.erase(pgid) > 0) exited_.push_back(ReapedChild{pgid, signo == SIGTERM ? 0 : signo});
}

bool SimulatedProcessControl::group_alive(int pgid) {
    std::lock_guard lock(mu_);
    return live_.count(pgid) > 0;
}

std::vector<ReapedChild> SimulatedProcessControl::reap() {
    std::lock_guard lock(mu_);
    std::vector<ReapedChild> out;
    out.swap(exited_);
    return out;
}

std::uint64_t SimulatedProcessControl::spawns() const {
    std::lock_guard lock(mu_);
    return spawns_;
}

void become_subreaper() { ::prctl(PR_SET_CHILD_SUBREAPER, 1); }

std::vector<ReapedChild> reap_children() {
    std::vector<ReapedChild> out;
    for (;;) {
        int status = 0;
        pid_t pid = ::waitpid(-1, &status, WNOHANG);
        if (pid <= 0) break;
        out.push_back(ReapedChild{pid, status});
    }
    return out;
}

int describe_status(int raw) {
    if (WIFEXITED(raw)) return WEXITSTATUS(raw);
    if (WIFSIGNALED(raw)) return -WTERMSIG(raw);
    return raw;
}

}  // namespace rapid
