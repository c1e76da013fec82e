#include <csignal>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "rapid/mask.hpp"
#include "rapid/mask_channel.hpp"
#include "support/episodes.hpp"
#include "support/subprocess.hpp"

using namespace std::chrono_literals;
namespace fs = std::filesystem;
using testing_support::Child;
using testing_support::run_command;

namespace {

const std::string kCtl = RAPIDCTL_BIN;

fs::path work_dir() {
    auto d = fs::temp_directory_path() / ("rapid_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

fs::path write_config(const std::string& leaf) {
    const std::string vs = RAPID_VSENSOR_BIN;
    auto p = work_dir() / leaf;
    std::ofstream(p) << "[device.tactile_left]\nvid = \"0x1234\"\npid = \"0x5678\"\nserial = \"TACL001\"\n"
                        "node = \"" << vs << " --kind tactile --rate 60\"\ntopic = \"/rapid/tactile/left\"\n\n"
                        "[device.cam_wrist]\nvid = \"0x2b03\"\npid = \"0x0001\"\n"
                        "node = \"" << vs << " --kind camera --rate 30\"\ntopic = \"/rapid/camera/wrist\"\n";
    return p;
}

struct RunningDaemon {
    fs::path mask = work_dir() / "cli.mask";
    fs::path sock = work_dir() / "cli.sock";
    std::unique_ptr<Child> child;

    explicit RunningDaemon(const fs::path& config) {
        child = std::make_unique<Child>(std::vector<std::string>{
            kCtl, "run", "--config", config.string(), "--mask-path", mask.string(), "--control-socket", sock.string(),
            "--no-uevents", "--cooldown-ms", "200"});
    }
    std::string ctl(const std::string& args) const {
        return kCtl + " " + args + " --control-socket " + sock.string() + " --mask-path " + mask.string();
    }
};

}  // namespace

TEST(Cli, RegisterWritesStableArtifacts) {
    auto cfg = write_config("reg.toml");
    auto out1 = work_dir() / "out1", out2 = work_dir() / "out2";
    auto r = run_command(kCtl + " register --config " + cfg.string() + " --out-dir " + out1.string());
    ASSERT_EQ(r.exit_code, 0) << r.output;
    EXPECT_NE(r.output.find("bit 0  tactile_left"), std::string::npos) << r.output;
    ASSERT_EQ(run_command(kCtl + " register --config " + cfg.string() + " --out-dir " + out2.string()).exit_code, 0);
    std::string rules = slurp(out1 / "reg.rules");
    EXPECT_NE(rules.find("SYMLINK+=\"rapid/tactile_left\""), std::string::npos);
    EXPECT_EQ(rules, slurp(out2 / "reg.rules"));
    EXPECT_EQ(slurp(out1 / "reg.descriptor.json"), slurp(out2 / "reg.descriptor.json"));
    // the descriptor is itself a valid input
    r = run_command(kCtl + " register --config " + (out1 / "reg.descriptor.json").string() + " --out-dir " +
                    (work_dir() / "out3").string());
    EXPECT_EQ(r.exit_code, 0) << r.output;
}

TEST(Cli, RegisterRejectsDuplicateTopic) {
    auto p = work_dir() / "dup.toml";
    std::ofstream(p) << "[device.a]\nvid = \"0x1\"\npid = \"0x2\"\nnode = \"x\"\ntopic = \"/t\"\n\n"
                        "[device.b]\nvid = \"0x1\"\npid = \"0x3\"\nnode = \"x\"\ntopic = \"/t\"\n";
    auto out = work_dir() / "dup_out";
    auto r = run_command(kCtl + " register --config " + p.string() + " --out-dir " + out.string());
    EXPECT_EQ(r.exit_code, 2);
    EXPECT_NE(r.output.find("DuplicateTopic"), std::string::npos) << r.output;
    EXPECT_FALSE(fs::exists(out / "dup.rules"));
    r = run_command(kCtl + " register --json --config " + p.string() + " --out-dir " + out.string());
    auto j = nlohmann::json::parse(r.output);
    EXPECT_FALSE(j["ok"].get<bool>());
    EXPECT_EQ(j["findings"][0]["code"], "DuplicateTopic");
}

TEST(Cli, RunInvalidConfigExitsTwo) {
    auto p = work_dir() / "broken.toml";
    std::ofstream(p) << "[device.a]\nvid = \"0xZZ\"\n";
    auto r = run_command(kCtl + " run --no-uevents --config " + p.string() + " --mask-path " +
                         (work_dir() / "b.mask").string() + " --control-socket " + (work_dir() / "b.sock").string());
    EXPECT_EQ(r.exit_code, 2) << r.output;
    EXPECT_NE(r.output.find("BadIdentity"), std::string::npos) << r.output;
}

TEST(Cli, RunUnwritableMaskPathExitsThree) {
    auto r = run_command(kCtl + " run --no-uevents --config " + write_config("c3.toml").string() +
                         " --mask-path /proc/nonexistent/dir/mask --control-socket " +
                         (work_dir() / "c3.sock").string());
    EXPECT_EQ(r.exit_code, 3) << r.output;
}

TEST(Cli, DaemonSessionEndToEnd) {
    RunningDaemon d(write_config("session.toml"));
    const auto t0 = std::chrono::steady_clock::now();
    auto ready = d.child->read_line(1000ms);
    ASSERT_TRUE(ready) << "no ready line";
    EXPECT_LT(std::chrono::steady_clock::now() - t0, 1s);
    EXPECT_EQ(ready->rfind("ready", 0), 0u) << *ready;
    EXPECT_EQ(rapid::read_mask(d.mask).device_count, 2);

    auto r = run_command(d.ctl("inject attach --vid 0x1234 --pid 0x5678 --serial TACL001"));
    EXPECT_EQ(r.exit_code, 0);
    EXPECT_EQ(r.output, "tactile_left: AttachedStarting\n");
    r = run_command(d.ctl("inject attach --vid 0x2b03 --pid 0x0001 --serial ANY"));
    EXPECT_EQ(r.output, "cam_wrist: AttachedStarting\n");

    // wait for both to come up
    bool online = false;
    for (int i = 0; i < 100 && !online; ++i) {
        online = rapid::read_mask(d.mask).mask == 0x03;
        std::this_thread::sleep_for(50ms);
    }
    ASSERT_TRUE(online);

    r = run_command(d.ctl("monitor --once --plain"));
    ASSERT_EQ(r.exit_code, 0) << r.output;
    auto m = rapid::read_mask(d.mask);
    EXPECT_NE(r.output.find("mask " + rapid::format_mask_hex(m.mask, 2) + " " + rapid::format_mask_binary(m.mask, 2)),
              std::string::npos)
        << r.output;
    EXPECT_NE(r.output.find("device tactile_left bit=0 state=Online attached=yes"), std::string::npos) << r.output;

    r = run_command(d.ctl("monitor --once --json"));
    auto status = nlohmann::json::parse(r.output);
    std::vector<int> pids;
    for (const auto& dev : status["devices"]) pids.push_back(dev["pid"].get<int>());
    ASSERT_EQ(pids.size(), 2u);

    r = run_command(d.ctl("inject detach --vid 0x9999 --pid 0x0001"));
    EXPECT_EQ(r.exit_code, 0);
    EXPECT_NE(r.output.find("orphan"), std::string::npos) << r.output;

    d.child->signal(SIGINT);
    auto code = d.child->wait(10s);
    ASSERT_TRUE(code);
    EXPECT_EQ(*code, 0);
    for (int pid : pids) EXPECT_FALSE(testing_support::process_alive(pid)) << pid;
}

TEST(Cli, InjectWithoutDaemonExitsThree) {
    auto r = run_command(kCtl + " inject attach --vid 0x1 --pid 0x2 --control-socket " +
                         (work_dir() / "nobody.sock").string());
    EXPECT_EQ(r.exit_code, 3) << r.output;
    EXPECT_NE(r.output.find("DaemonUnreachable"), std::string::npos) << r.output;
}

TEST(Cli, MonitorShowsBannerWhenDaemonAbsent) {
    auto r = run_command(kCtl + " monitor --once --plain --control-socket " + (work_dir() / "gone.sock").string());
    EXPECT_EQ(r.exit_code, 3);
    EXPECT_NE(r.output.find("DaemonUnreachable"), std::string::npos);
}

TEST(Cli, AuditConstructedEpisode) {
    auto ep = work_dir() / "cli_audit.repi";
    testing_support::write_episode(ep, 3.0, 2.0);
    auto r = run_command(kCtl + " audit " + ep.string() + " --require tac_left --json");
    ASSERT_EQ(r.exit_code, 0) << r.output;
    auto j = nlohmann::json::parse(r.output);
    EXPECT_EQ(j["modalities"][1]["offline"].size(), 1u);
    r = run_command(kCtl + " audit " + ep.string() + " --require lidar");
    EXPECT_EQ(r.exit_code, 2);
    r = run_command(kCtl + " audit " + (work_dir() / "missing.repi").string());
    EXPECT_EQ(r.exit_code, 3) << r.output;
}

TEST(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(run_command(kCtl).exit_code, 2);
    EXPECT_EQ(run_command(kCtl + " inject sideways --vid 1 --pid 2").exit_code, 2);
    EXPECT_EQ(run_command(kCtl + " --help").exit_code, 0);
}
