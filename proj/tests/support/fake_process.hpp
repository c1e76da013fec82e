// Scripted ProcessControl for supervisor tests on a manual clock.
#pragma once

#include <csignal>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "rapid/clock.hpp"
#include "rapid/supervisor.hpp"

namespace testing_support {

class FakeProcesses : public rapid::ProcessControl {
public:
    struct Spawn {
        std::string device;
        int pid;
        rapid::MonoTime at;
    };
    struct Signal {
        int pid;
        int signo;
        rapid::MonoTime at;
    };

    explicit FakeProcesses(const rapid::Clock& clock) : clock_(clock) {}

    int spawn(const rapid::DeviceDescriptor& d) override {
        int pid = next_pid_++;
        spawns.push_back({d.name, pid, clock_.now()});
        alive.insert(pid);
        device_of[pid] = d.name;
        return pid;
    }
    void signal_group(int pgid, int signo) override {
        signals.push_back({pgid, signo, clock_.now()});
        if (!alive.count(pgid)) return;
        if (signo == SIGTERM && ignore_term.count(device_of[pgid])) return;
        alive.erase(pgid);
        exited.push_back({pgid, signo == SIGTERM ? 0 : signo});
    }
    bool group_alive(int pgid) override { return alive.count(pgid) > 0; }
    void run_detach_hook(const rapid::DeviceDescriptor& d) override { detach_hooks.push_back(d.name); }
    std::vector<rapid::ReapedChild> reap() override {
        std::vector<rapid::ReapedChild> out;
        out.swap(exited);
        return out;
    }

    /// Child exits on its own (a crash).
    void crash(int pid, int status = 1 << 8) {
        alive.erase(pid);
        exited.push_back({pid, status});
    }
    int last_pid_of(const std::string& device) const {
        for (auto it = spawns.rbegin(); it != spawns.rend(); ++it) {
            if (it->device == device) return it->pid;
        }
        return -1;
    }
    std::size_t spawns_of(const std::string& device) const {
        std::size_t n = 0;
        for (const auto& s : spawns) n += s.device == device;
        return n;
    }

    std::vector<Spawn> spawns;
    std::vector<Signal> signals;
    std::vector<std::string> detach_hooks;
    std::set<int> alive;
    std::vector<rapid::ReapedChild> exited;
    std::set<std::string> ignore_term;
    std::map<int, std::string> device_of;

private:
    const rapid::Clock& clock_;
    int next_pid_ = 100;
};

/// Delivers reaped exits to the supervisor, then ticks it, like one daemon loop iteration.
inline void pump(rapid::Supervisor& sup, FakeProcesses& procs) {
    for (auto c : procs.reap()) sup.on_child_exit(c.pid, c.status);
    sup.tick();
}

/// Advances the clock in steps, pumping each step and sending heartbeats from live children
/// when `heartbeats` is set.
inline void run_for(rapid::ManualClock& clock, rapid::Supervisor& sup, FakeProcesses& procs, rapid::Duration total,
                    rapid::Duration step = std::chrono::milliseconds(10), bool heartbeats = true) {
    for (rapid::Duration t{0}; t < total; t += step) {
        clock.advance(step);
        if (heartbeats) {
            for (int pid : procs.alive) sup.on_heartbeat(procs.device_of[pid], 1);
        }
        pump(sup, procs);
    }
}

}  // namespace testing_support
