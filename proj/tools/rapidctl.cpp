// rapidctl: daemon runner and operator front-end.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration error, 3 environment error.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <poll.h>
#include <termios.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rapid/daemon.hpp"
#include "rapid/error.hpp"
#include "rapid/eventbus.hpp"
#include "rapid/log.hpp"
#include "rapid/mask_channel.hpp"
#include "rapid/recorder.hpp"
#include "rapid/registry.hpp"
#include "rapid/scenario.hpp"

namespace {

using rapid::Errc;
using rapid::Error;

enum Exit { kOk = 0, kRuntime = 1, kConfig = 2, kEnvironment = 3 };

int exit_code_for(Errc c) {
    switch (c) {
        case Errc::ParseError:
        case Errc::DuplicateName:
        case Errc::DuplicateTopic:
        case Errc::DuplicateBit:
        case Errc::TooManyDevices:
        case Errc::BadIdentity:
        case Errc::InvariantViolation:
        case Errc::RegistryMismatch:
        case Errc::TopicUnavailable:
        case Errc::ShapeMismatch:
            return kConfig;
        case Errc::IoError:
        case Errc::Unavailable:
        case Errc::DaemonUnreachable:
        case Errc::ConnectFailure:
        case Errc::SocketError:
        case Errc::DiskFull:
        case Errc::Unsupported:
        case Errc::HarnessError:
        case Errc::NotBound:
            return kEnvironment;
        default:
            return kRuntime;
    }
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot read " + p.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream outf(p, std::ios::binary | std::ios::trunc);
    if (!outf) throw Error(Errc::IoError, "cannot write " + p.string());
    outf << text;
    if (!outf) throw Error(Errc::IoError, "write failed for " + p.string());
}

/// Registration file in TOML form, or the JSON descriptor written by `register`.
rapid::Registry load_any_registry(const std::filesystem::path& p) {
    const std::string text = read_file(p);
    if (p.extension() == ".json") {
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::ParseError, p.string() + ": " + e.what());
        }
        return rapid::registry_from_json(doc);
    }
    return rapid::load_registry(text);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

rapid::Duration seconds(double s) {
    return std::chrono::duration_cast<rapid::Duration>(std::chrono::duration<double>(s));
}

std::atomic<bool> g_interrupted{false};
extern "C" void on_interrupt(int) { g_interrupted.store(true); }

void install_interrupt_handler() {
    struct sigaction sa {};
    sa.sa_handler = on_interrupt;
    sigemptyset(&sa.sa_mask);
    ::sigaction(SIGINT, &sa, nullptr);
    ::sigaction(SIGTERM, &sa, nullptr);
}

// ---- shared options ---------------------------------------------------------------------

struct Common {
    bool json = false;
    bool plain = false;
    bool verbose = false;
    std::string mask_path;
    std::string control_socket;

    std::filesystem::path mask() const { return mask_path.empty() ? rapid::default_mask_path() : std::filesystem::path(mask_path); }
    std::filesystem::path control() const {
        return control_socket.empty() ? rapid::default_control_socket() : std::filesystem::path(control_socket);
    }
};

void add_output_flags(CLI::App* sub, Common& c) {
    auto* j = sub->add_flag("--json", c.json, "machine-readable JSON output");
    auto* p = sub->add_flag("--plain", c.plain, "stable plain-text output");
    j->excludes(p);
}

void add_endpoints(CLI::App* sub, Common& c) {
    sub->add_option("--mask-path", c.mask_path, "shared mask file (default $RAPID_MASK_PATH)");
    sub->add_option("--control-socket", c.control_socket, "daemon control socket (default $RAPID_CONTROL_SOCKET)");
}

// ---- run ----------------------------------------------------------------------------------

struct RunArgs {
    std::string config;
    std::string mask_topic_bind = "127.0.0.1:0";
    bool no_mask_topic = false;
    bool no_uevents = false;
    int cooldown_ms = -1;
};

int cmd_run(const RunArgs& a, const Common& c) {
    rapid::Registry reg;
    try {
        reg = load_any_registry(a.config);
    } catch (const Error& e) {
        if (e.code() == Errc::IoError) {
            std::cerr << "rapidctl run: " << e.what() << "\n";
            return kConfig;
        }
        std::cerr << "rapidctl run: invalid registration " << a.config << "\n";
        if (std::filesystem::path(a.config).extension() != ".json") {
            std::cerr << rapid::validate_registration(read_file(a.config)).to_text();
        } else {
            std::cerr << e.what() << "\n";
        }
        return kConfig;
    }

    rapid::DaemonConfig dc;
    dc.registry = reg;
    dc.mask.path = c.mask();
    dc.control_socket = c.control();
    dc.os_events = !a.no_uevents;
    dc.reap_orphans = true;
    if (a.no_mask_topic) {
        dc.mask_topic_bind.reset();
    } else {
        dc.mask_topic_bind = a.mask_topic_bind;
    }
    if (a.cooldown_ms >= 0) dc.supervisor.cooldown = std::chrono::milliseconds(a.cooldown_ms);

    // Block termination signals before any thread exists, then wait for them synchronously.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
    std::signal(SIGPIPE, SIG_IGN);

    std::unique_ptr<rapid::Daemon> daemon;
    try {
        daemon = std::make_unique<rapid::Daemon>(dc);
        daemon->start();
    } catch (const Error& e) {
        std::cerr << "rapidctl run: " << e.what() << "\n";
        return e.code() == Errc::IoError || e.code() == Errc::DiskFull ? kEnvironment : exit_code_for(e.code());
    }
    if (c.json) {
        std::cout << nlohmann::json{{"ready", true},
                                    {"devices", reg.size()},
                                    {"mask_path", dc.mask.path.string()},
                                    {"control_socket", dc.control_socket.string()},
                                    {"mask_topic", daemon->mask_topic_endpoint()}}
                         .dump()
                  << std::endl;
    } else {
        std::cout << "ready devices=" << reg.size() << " mask=" << dc.mask.path.string()
                  << " control=" << dc.control_socket.string();
        if (!daemon->mask_topic_endpoint().empty()) std::cout << " mask_topic=" << daemon->mask_topic_endpoint();
        std::cout << std::endl;
    }
    int sig = 0;
    sigwait(&set, &sig);
    rapid::log()->info("signal {} received, shutting down", sig);
    daemon->stop();
    daemon.reset();
    return kOk;
}

// ---- register -----------------------------------------------------------------------------

struct RegisterArgs {
    std::string config;
    std::string out_dir;
};

int cmd_register(const RegisterArgs& a, const Common& c) {
    const std::filesystem::path cfg(a.config);
    rapid::Registry reg;
    rapid::ValidationReport report;
    const std::string text = read_file(cfg);
    if (cfg.extension() == ".json") {
        try {
            reg = load_any_registry(cfg);
        } catch (const Error& e) {
            report.findings.push_back(rapid::Finding{rapid::Severity::Error, 0, e.code(), e.what()});
        }
    } else {
        report = rapid::validate_registration(text);
        if (!report.has_errors()) reg = rapid::load_registry(text);
    }
    const std::filesystem::path dir = a.out_dir.empty() ? cfg.parent_path() : std::filesystem::path(a.out_dir);
    const std::filesystem::path rules = dir / (cfg.stem().string() + ".rules");
    const std::filesystem::path descriptor = dir / (cfg.stem().string() + ".descriptor.json");
    const bool ok = !report.has_errors();
    if (ok) {
        if (!dir.empty()) std::filesystem::create_directories(dir);
        write_text(rules, rapid::generate_hotplug_rules(reg));
        if (cfg.extension() != ".json" || std::filesystem::absolute(descriptor) != std::filesystem::absolute(cfg)) {
            write_text(descriptor, rapid::registry_to_json(reg).dump(2) + "\n");
        }
    }
    if (c.json) {
        nlohmann::json j{{"ok", ok}, {"devices", ok ? reg.size() : 0}};
        j["findings"] = nlohmann::json::array();
        for (const auto& f : report.findings) {
            j["findings"].push_back({{"severity", f.severity == rapid::Severity::Error ? "error" : "warning"},
                                     {"line", f.line},
                                     {"code", std::string(rapid::to_string(f.code))},
                                     {"message", f.message}});
        }
        if (ok) j["artifacts"] = {rules.string(), descriptor.string()};
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << report.to_text();
        if (ok) {
            std::cout << "registered " << reg.size() << " device(s)\n";
            for (const auto& d : reg.descriptors()) {
                std::cout << "  bit " << d.bit << "  " << d.name << "  " << rapid::to_string(d.identity) << "  "
                          << d.topic << "\n";
            }
            std::cout << "wrote " << rules.string() << "\nwrote " << descriptor.string() << "\n";
        } else {
            std::cout << report.error_count() << " error(s); no artifacts written\n";
        }
    }
    return ok ? kOk : kConfig;
}

// ---- inject -------------------------------------------------------------------------------

struct InjectArgs {
    std::string kind;
    std::string vid;
    std::string pid;
    std::optional<std::string> serial;
    std::optional<std::string> device_path;
};

int cmd_inject(const InjectArgs& a, const Common& c) {
    rapid::HotplugEvent ev;
    if (a.kind == "attach") {
        ev.kind = rapid::HotplugKind::Attach;
    } else if (a.kind == "detach") {
        ev.kind = rapid::HotplugKind::Detach;
    } else {
        throw Error(Errc::ParseError, "event kind must be attach or detach");
    }
    ev.identity = rapid::DeviceIdentity{rapid::parse_hex_id(a.vid), rapid::parse_hex_id(a.pid), a.serial};
    ev.device_path = a.device_path;
    rapid::InjectOutcome o = rapid::inject(c.control(), ev);
    if (c.json) {
        std::cout << rapid::outcome_to_json(o).dump() << "\n";
    } else if (o.matched) {
        std::cout << o.device << ": " << o.state;
        if (!o.note.empty()) std::cout << " (" << o.note << ")";
        std::cout << "\n";
    } else if (o.note == "orphan detach") {
        std::cout << "warning: orphan detach for " << rapid::to_string(ev.identity) << "\n";
    } else {
        std::cout << "NoMatch: " << rapid::to_string(ev.identity) << (o.note.empty() ? "" : " (" + o.note + ")")
                  << "\n";
    }
    return kOk;
}

// ---- monitor ------------------------------------------------------------------------------

struct MonitorArgs {
    int interval_ms = 500;
    bool once = false;
};

std::string plain_snapshot(const rapid::StatusSnapshot& s) {
    std::ostringstream os;
    os << "mask " << rapid::format_mask_hex(s.mask_word, s.device_count) << " "
       << rapid::format_mask_binary(s.mask_word, s.device_count) << "\n";
    os << "device_count " << s.device_count << "\n";
    for (const auto& d : s.devices) {
        os << "device " << d.name << " bit=" << d.bit << " state=" << rapid::to_string(d.state)
           << " attached=" << (d.attached ? "yes" : "no") << " restarts=" << d.restart_count << "\n";
    }
    os << "sequence " << s.sequence << "\n";
    return os.str();
}

const char* colour_for(rapid::DeviceState st) {
    switch (st) {
        case rapid::DeviceState::Online: return "\033[32m";
        case rapid::DeviceState::AttachedStarting:
        case rapid::DeviceState::Backoff: return "\033[33m";
        default: return "\033[31m";
    }
}

std::string render_screen(const std::optional<rapid::StatusSnapshot>& s, const std::string& banner, bool colour) {
    std::ostringstream os;
    const char* reset = colour ? "\033[0m" : "";
    if (colour) os << "\033[H\033[2J";
    os << "rapid monitor (read-only, q to quit)\n\n";
    if (!banner.empty()) os << (colour ? "\033[41;97m" : "") << " " << banner << " " << reset << "\n\n";
    if (s) {
        os << "mask " << rapid::format_mask_hex(s->mask_word, s->device_count) << "  "
           << rapid::format_mask_binary(s->mask_word, s->device_count) << "   sequence " << s->sequence << "\n\n";
        char line[256];
        std::snprintf(line, sizeof line, "%-4s %-20s %-18s %-9s %-8s\n", "BIT", "DEVICE", "STATE", "ATTACHED",
                      "RESTARTS");
        os << line;
        for (const auto& d : s->devices) {
            std::snprintf(line, sizeof line, "%-4u %-20s %-18s %-9s %-8d", d.bit, d.name.c_str(),
                          std::string(rapid::to_string(d.state)).c_str(), d.attached ? "yes" : "no", d.restart_count);
            os << (colour ? colour_for(d.state) : "") << line << reset << "\n";
        }
        os << "\nlog:\n";
        std::size_t from = s->log.size() > 10 ? s->log.size() - 10 : 0;
        for (std::size_t i = from; i < s->log.size(); ++i) os << "  " << s->log[i] << "\n";
    }
    return os.str();
}

rapid::StatusSnapshot fetch_status(const std::filesystem::path& control) {
    rapid::LineClient client(control, std::chrono::seconds(2));
    auto reply = client.request({{"cmd", "status"}});
    if (!reply.value("ok", false)) throw Error(Errc::DaemonUnreachable, reply.value("error", "status failed"));
    return rapid::StatusSnapshot::from_json(reply);
}

int cmd_monitor(const MonitorArgs& a, const Common& c) {
    if (a.once) {
        rapid::StatusSnapshot s = fetch_status(c.control());
        if (c.json) {
            std::cout << s.to_json().dump(2) << "\n";
        } else if (c.plain) {
            std::cout << plain_snapshot(s);
        } else {
            std::cout << render_screen(s, "", false);
        }
        return kOk;
    }
    install_interrupt_handler();
    const bool tty_out = ::isatty(STDOUT_FILENO) != 0;
    const bool colour = tty_out && !c.plain && !c.json;
    termios saved{};
    const bool tty_in = ::isatty(STDIN_FILENO) != 0 && ::tcgetattr(STDIN_FILENO, &saved) == 0;
    if (tty_in) {
        termios raw = saved;
        raw.c_lflag &= static_cast<tcflag_t>(~(ICANON | ECHO));
        ::tcsetattr(STDIN_FILENO, TCSANOW, &raw);
    }
    std::optional<rapid::StatusSnapshot> last;
    while (!g_interrupted.load()) {
        std::string banner;
        try {
            last = fetch_status(c.control());
        } catch (const Error& e) {
            banner = std::string("DaemonUnreachable: ") + e.what();
        }
        if (c.json) {
            std::cout << (banner.empty() ? last->to_json().dump() : nlohmann::json{{"ok", false}, {"error", banner}}.dump())
                      << std::endl;
        } else if (c.plain) {
            std::cout << (banner.empty() ? plain_snapshot(*last) : banner + "\n") << "--" << std::endl;
        } else {
            std::cout << render_screen(last, banner, colour) << std::flush;
        }
        pollfd p{STDIN_FILENO, POLLIN, 0};
        if (::poll(&p, tty_in ? 1 : 0, a.interval_ms) > 0 && (p.revents & POLLIN)) {
            char ch = 0;
            if (::read(STDIN_FILENO, &ch, 1) == 1 && (ch == 'q' || ch == 'Q')) break;
        }
    }
    if (tty_in) ::tcsetattr(STDIN_FILENO, TCSANOW, &saved);
    return kOk;
}

// ---- record / replay / audit -------------------------------------------------------------

struct RecordArgs {
    std::string out;
    std::string topics;
    double duration_s = 10;
    std::optional<std::string> connect;
    std::string registry;
    double rate_hz = 30;
};

int cmd_record(const RecordArgs& a, const Common& c) {
    rapid::RecordConfig rc;
    rc.out = a.out;
    rc.topics = split_list(a.topics);
    rc.duration = seconds(a.duration_s);
    rc.default_rate_hz = a.rate_hz;
    rc.mask_path = c.mask();
    if (a.connect) {
        rc.connect = a.connect;
        if (a.registry.empty()) throw Error(Errc::TopicUnavailable, "--connect needs --registry for channel shapes");
        rc.registry = load_any_registry(a.registry);
    } else {
        rc.control_socket = c.control();
    }
    install_interrupt_handler();
    std::stop_source stop;
    std::jthread watcher([&](std::stop_token st) {
        while (!st.stop_requested()) {
            if (g_interrupted.load()) stop.request_stop();
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
    });
    rapid::RecordSummary sum = rapid::record_session(rc, stop.get_token());
    watcher.request_stop();
    if (c.json) {
        std::cout << nlohmann::json{{"out", a.out},
                                    {"mask_records", sum.mask_records},
                                    {"records_by_channel", sum.records_by_channel},
                                    {"out_of_order_dropped", sum.out_of_order_dropped},
                                    {"elapsed_s", std::chrono::duration<double>(sum.elapsed).count()}}
                         .dump()
                  << "\n";
    } else {
        std::cout << "recorded " << a.out << " (" << std::chrono::duration<double>(sum.elapsed).count() << " s)\n";
        std::cout << "  mask: " << sum.mask_records << " records\n";
        for (const auto& [name, n] : sum.records_by_channel) std::cout << "  " << name << ": " << n << " records\n";
    }
    return kOk;
}

struct ReplayArgs {
    std::string in;
    double speed = 1.0;
    std::string bind = "127.0.0.1:0";
    std::size_t wait_subscribers = 0;
};

int cmd_replay(const ReplayArgs& a, const Common& c) {
    rapid::ReplayConfig rc;
    rc.in = a.in;
    rc.speed = a.speed;
    rc.bind = a.bind;
    rc.wait_for_subscribers = a.wait_subscribers;
    rc.on_ready = [&](const std::string& ep) {
        if (c.json) {
            std::cout << nlohmann::json{{"endpoint", ep}}.dump() << std::endl;
        } else {
            std::cout << "endpoint " << ep << std::endl;
        }
    };
    install_interrupt_handler();
    std::stop_source stop;
    std::jthread watcher([&](std::stop_token st) {
        while (!st.stop_requested()) {
            if (g_interrupted.load()) stop.request_stop();
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
    });
    rapid::ReplaySummary sum = rapid::replay_episode(rc, stop.get_token());
    watcher.request_stop();
    if (c.json) {
        std::cout << nlohmann::json{{"published", sum.published},
                                    {"mask_published", sum.mask_published},
                                    {"elapsed_s", std::chrono::duration<double>(sum.elapsed).count()}}
                         .dump()
                  << "\n";
    } else {
        std::cout << "replayed " << sum.published << " records (" << sum.mask_published << " mask)\n";
    }
    return kOk;
}

struct AuditArgs {
    std::string in;
    std::string require;
    bool tolerate = false;
};

int cmd_audit(const AuditArgs& a, const Common& c) {
    rapid::Episode ep = rapid::read_episode(a.in, a.tolerate);
    rapid::AuditReport rep = rapid::audit_episode(ep, split_list(a.require));
    if (c.json) {
        auto j = rep.to_json();
        if (ep.damaged_at) j["damaged_at"] = *ep.damaged_at;
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << rep.to_text();
        if (ep.damaged_at) std::cout << "damaged from byte " << *ep.damaged_at << "; audited the intact prefix\n";
    }
    return kOk;
}

// ---- scenario / bench --------------------------------------------------------------------

struct ScenarioArgs {
    std::string condition;
    std::string mode;
    bool grid = false;
    double duration_s = 6;
    std::string report;
};

int cmd_scenario(const ScenarioArgs& a, const Common& c) {
    std::vector<std::pair<rapid::Condition, rapid::ConsumerMode>> cells;
    if (a.grid) {
        for (auto m : {rapid::ConsumerMode::MaskAware, rapid::ConsumerMode::StaticConfig}) {
            for (auto cond : {rapid::Condition::Full, rapid::Condition::NoTactile, rapid::Condition::HotUnplug,
                              rapid::Condition::HotReplug}) {
                cells.emplace_back(cond, m);
            }
        }
    } else {
        if (a.condition.empty() || a.mode.empty()) {
            throw Error(Errc::ParseError, "--condition and --mode are required (or use --grid)");
        }
        cells.emplace_back(rapid::parse_condition(a.condition), rapid::parse_mode(a.mode));
    }
    nlohmann::json all = nlohmann::json::array();
    for (auto [cond, mode] : cells) {
        rapid::ScenarioOutcome o = rapid::run_scenario(rapid::make_scenario(cond, mode, seconds(a.duration_s)));
        all.push_back(o.to_json());
        if (c.json) continue;
        std::cout << rapid::to_string(cond) << " " << rapid::to_string(mode) << ": " << rapid::to_string(o.status);
        if (const auto* t = o.channel(rapid::kScenarioTactile)) {
            std::cout << " (observations " << o.observations_emitted << ", tactile zero-filled "
                      << static_cast<int>(t->zero_filled_fraction * 100 + 0.5) << "%)";
        }
        if (!o.crash_reason.empty()) std::cout << " [" << o.crash_reason << "]";
        std::cout << std::endl;
    }
    nlohmann::json doc = a.grid ? nlohmann::json{{"cells", all}} : all[0];
    if (c.json) std::cout << doc.dump(2) << "\n";
    if (!a.report.empty()) write_text(a.report, doc.dump(2) + "\n");
    return kOk;
}

struct BenchArgs {
    int transitions = 1000;
    int devices = 16;
    int first_data_trials = 3;
    std::string report;
};

int cmd_bench(const BenchArgs& a, const Common& c) {
    rapid::BenchConfig bc;
    bc.transitions = a.transitions;
    bc.devices = a.devices;
    bc.first_data_trials = a.first_data_trials;
    rapid::BenchReport rep = rapid::run_bench(bc);
    if (c.json) {
        std::cout << rep.to_json().dump(2) << "\n";
    } else {
        std::cout << rep.to_text();
    }
    if (!a.report.empty()) write_text(a.report, rep.to_json().dump(2) + "\n");
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rapidctl: hardware-grounded modality presence daemon and tools"};
    app.require_subcommand(1);
    Common common;
    app.add_flag("-v,--verbose", common.verbose, "debug logging on stderr");

    RunArgs run;
    auto* s_run = app.add_subcommand("run", "run the daemon in the foreground");
    s_run->add_option("--config,config", run.config, "registration file")->required();
    s_run->add_option("--mask-topic-bind", run.mask_topic_bind, "bind address of the /rapid/mask topic");
    s_run->add_flag("--no-mask-topic", run.no_mask_topic, "do not publish the mask topic");
    s_run->add_flag("--no-uevents", run.no_uevents, "ignore kernel hot-plug events (injection only)");
    s_run->add_option("--cooldown-ms", run.cooldown_ms, "override the post-detach cooldown");
    add_endpoints(s_run, common);
    add_output_flags(s_run, common);

    RegisterArgs reg;
    auto* s_reg = app.add_subcommand("register", "validate a registration file and write derived artifacts");
    s_reg->add_option("--config,config", reg.config, "registration file (.toml) or descriptor (.json)")->required();
    s_reg->add_option("--out-dir", reg.out_dir, "artifact directory (default: next to the file)");
    add_output_flags(s_reg, common);

    InjectArgs inj;
    auto* s_inj = app.add_subcommand("inject", "send one hot-plug event to the daemon");
    s_inj->add_option("kind", inj.kind, "attach | detach")->required()->check(CLI::IsMember({"attach", "detach"}));
    s_inj->add_option("--vid", inj.vid, "vendor id, e.g. 0x1234")->required();
    s_inj->add_option("--pid", inj.pid, "product id, e.g. 0x5678")->required();
    s_inj->add_option("--serial", inj.serial, "serial number");
    s_inj->add_option("--device-path", inj.device_path, "kernel device path");
    add_endpoints(s_inj, common);
    add_output_flags(s_inj, common);

    MonitorArgs mon;
    auto* s_mon = app.add_subcommand("monitor", "read-only status view");
    s_mon->add_option("--interval-ms", mon.interval_ms, "refresh interval");
    s_mon->add_flag("--once", mon.once, "print one snapshot and exit");
    add_endpoints(s_mon, common);
    add_output_flags(s_mon, common);

    RecordArgs rec;
    auto* s_rec = app.add_subcommand("record", "record an episode");
    s_rec->add_option("--out", rec.out, "episode file")->required();
    s_rec->add_option("--topics", rec.topics, "comma-separated topics or device names (default: all)");
    s_rec->add_option("--duration", rec.duration_s, "seconds");
    s_rec->add_option("--connect", rec.connect, "record a single publisher endpoint instead of the daemon");
    s_rec->add_option("--registry", rec.registry, "registration file for --connect");
    s_rec->add_option("--rate-hz", rec.rate_hz, "nominal channel rate stored in the manifest");
    add_endpoints(s_rec, common);
    add_output_flags(s_rec, common);

    ReplayArgs rep;
    auto* s_rep = app.add_subcommand("replay", "republish an episode");
    s_rep->add_option("file", rep.in, "episode file")->required();
    s_rep->add_option("--speed", rep.speed, "time scale, 0 = as fast as possible");
    s_rep->add_option("--bind", rep.bind, "publisher bind address");
    s_rep->add_option("--wait-subscribers", rep.wait_subscribers, "subscribers to wait for before starting");
    add_output_flags(s_rep, common);

    AuditArgs aud;
    auto* s_aud = app.add_subcommand("audit", "report mask dropouts in an episode");
    s_aud->add_option("file", aud.in, "episode file")->required();
    s_aud->add_option("--require", aud.require, "comma-separated modalities that must be present");
    s_aud->add_flag("--tolerate-damage", aud.tolerate, "audit the intact prefix of a damaged file");
    add_output_flags(s_aud, common);

    ScenarioArgs sc;
    auto* s_sc = app.add_subcommand("scenario", "run a modality-change scenario");
    s_sc->add_option("--condition", sc.condition, "full | no-tactile | hot-unplug | hot-replug");
    s_sc->add_option("--mode", sc.mode, "mask-aware | static");
    s_sc->add_flag("--grid", sc.grid, "run all eight condition/mode cells");
    s_sc->add_option("--duration", sc.duration_s, "seconds per run");
    s_sc->add_option("--report", sc.report, "write the JSON report here");
    add_output_flags(s_sc, common);

    BenchArgs be;
    auto* s_be = app.add_subcommand("bench", "measure mask latency and rate");
    s_be->add_option("--transitions", be.transitions, "detach transitions to measure");
    s_be->add_option("--devices", be.devices, "simulated devices");
    s_be->add_option("--first-data-trials", be.first_data_trials, "attach-to-first-frame trials with a real sensor");
    s_be->add_option("--report", be.report, "write the JSON report here");
    add_output_flags(s_be, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kConfig;
    }
    rapid::set_log_level(common.verbose ? spdlog::level::debug
                                        : (s_run->parsed() ? spdlog::level::info : spdlog::level::warn));

    try {
        if (s_run->parsed()) return cmd_run(run, common);
        if (s_reg->parsed()) return cmd_register(reg, common);
        if (s_inj->parsed()) return cmd_inject(inj, common);
        if (s_mon->parsed()) return cmd_monitor(mon, common);
        if (s_rec->parsed()) return cmd_record(rec, common);
        if (s_rep->parsed()) return cmd_replay(rep, common);
        if (s_aud->parsed()) return cmd_audit(aud, common);
        if (s_sc->parsed()) return cmd_scenario(sc, common);
        if (s_be->parsed()) return cmd_bench(be, common);
    } catch (const Error& e) {
        if (common.json) {
            std::cout << nlohmann::json{{"ok", false}, {"error", std::string(rapid::to_string(e.code()))}, {"message", e.what()}}
                             .dump()
                      << "\n";
        }
        std::cerr << "rapidctl: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "rapidctl: " << e.what() << "\n";
        return kRuntime;
    }
    return kRuntime;
}
