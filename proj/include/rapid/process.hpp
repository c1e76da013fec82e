#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "rapid/heartbeat.hpp"
#include "rapid/supervisor.hpp"

namespace rapid {

/// Real process backend: /bin/sh -c <on_attach> via posix_spawn into a fresh process group.
/// The child environment gains RAPID_DEVICE, RAPID_TOPIC, RAPID_BIT, RAPID_SHAPE and
/// RAPID_HEARTBEAT_SOCKET. Only children it started are reaped unless reap_orphans is set
/// (together with become_subreaper, that also collects reparented grandchildren).
class PosixProcessControl final : public ProcessControl {
public:
    explicit PosixProcessControl(std::filesystem::path heartbeat_socket,
                                 std::map<std::string, std::string> extra_env = {}, bool reap_orphans = false);

    int spawn(const DeviceDescriptor& device) override;
    void signal_group(int pgid, int signo) override;
    bool group_alive(int pgid) override;
    void run_detach_hook(const DeviceDescriptor& device) override;
    std::vector<ReapedChild> reap() override;

private:
    int spawn_command(const std::string& command, const std::map<std::string, std::string>& env);

    std::filesystem::path heartbeat_socket_;
    std::map<std::string, std::string> extra_env_;
    bool reap_orphans_;
    std::set<int> children_;
};

/// Stand-in backend with no real processes: every spawn is an instantly healthy child that
/// heartbeats over the real socket and exits as soon as it is signalled.
class SimulatedProcessControl final : public ProcessControl {
public:
    explicit SimulatedProcessControl(std::filesystem::path heartbeat_socket,
                                     Duration heartbeat_period = std::chrono::milliseconds(500));
    ~SimulatedProcessControl() override;

    int spawn(const DeviceDescriptor& device) override;
    void signal_group(int pgid, int signo) override;
    bool group_alive(int pgid) override;
    void run_detach_hook(const DeviceDescriptor&) override {}
    std::vector<ReapedChild> reap() override;

    std::uint64_t spawns() const;

private:
    mutable std::mutex mu_;
    HeartbeatSender sender_;
    std::map<int, std::string> live_;
    std::vector<ReapedChild> exited_;
    int next_pid_ = 4'000'000;
    std::uint64_t spawns_ = 0;
    std::jthread thread_;
};

/// Makes this process the reaper for orphaned descendants so that grandchildren of
/// supervised groups are collected by our own waitpid loop.
void become_subreaper();

/// Non-blocking waitpid(-1) drain.
std::vector<ReapedChild> reap_children();

/// Encodes a wait status as "exit code" (>= 0) or "-signal".
int describe_status(int raw_status);

}  // namespace rapid
