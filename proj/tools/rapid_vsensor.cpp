// Synthetic sensor publisher, normally started by the daemon as a device's on_attach command.

#include <csignal>
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "rapid/error.hpp"
#include "rapid/log.hpp"
#include "rapid/virtual_sensor.hpp"

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

std::string env_or(const char* name, std::string fallback) {
    const char* v = std::getenv(name);
    return v != nullptr && *v != '\0' ? std::string(v) : fallback;
}

std::vector<std::size_t> parse_shape(const std::string& text) {
    std::vector<std::size_t> out;
    std::size_t start = 0;
    while (start < text.size()) {
        auto comma = text.find(',', start);
        if (comma == std::string::npos) comma = text.size();
        out.push_back(std::stoul(text.substr(start, comma - start)));
        start = comma + 1;
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    rapid::VirtualSensorConfig cfg;
    cfg.name = env_or("RAPID_DEVICE", cfg.name);
    cfg.topic = env_or("RAPID_TOPIC", cfg.topic);
    cfg.heartbeat_socket = env_or("RAPID_HEARTBEAT_SOCKET", "");
    std::string shape = env_or("RAPID_SHAPE", "");
    std::string kind = "camera";
    std::string misbehave = "none";
    std::optional<std::uint64_t> contact;
    std::optional<std::string> beacon;
    double duration_s = 0;
    int heartbeat_ms = 1000;
    bool print_endpoint = false;
    bool verbose = false;

    CLI::App app{"rapid-vsensor: synthetic camera, tactile or motor publisher"};
    app.add_option("--name", cfg.name, "device name used in heartbeats (default $RAPID_DEVICE)");
    app.add_option("--topic", cfg.topic, "topic to publish (default $RAPID_TOPIC)");
    app.add_option("--rate", cfg.rate_hz, "frames per second, (0, 120]");
    app.add_option("--kind", kind, "camera | tactile | motor");
    app.add_option("--shape", shape, "comma-separated dimensions (default $RAPID_SHAPE or the kind's default)");
    app.add_option("--seed", cfg.seed, "pattern seed");
    app.add_option("--misbehave", misbehave, "none | ignore-term | crash-after:N | freeze-after:N");
    app.add_option("--contact-frame", contact, "tactile: first frame of a contact event");
    app.add_option("--bind", cfg.bind, "publisher bind address");
    app.add_option("--heartbeat-socket", cfg.heartbeat_socket, "daemon heartbeat socket (default $RAPID_HEARTBEAT_SOCKET)");
    app.add_option("--heartbeat-ms", heartbeat_ms, "heartbeat period");
    app.add_option("--beacon", beacon, "announce a discovery beacon to host:port");
    app.add_option("--duration", duration_s, "stop after this many seconds (0: run until signalled)");
    app.add_flag("--print-endpoint", print_endpoint, "print 'endpoint <host:port>' once bound");
    app.add_flag("-v,--verbose", verbose, "debug logging");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }
    if (verbose) rapid::set_log_level(spdlog::level::debug);

    try {
        cfg.kind = rapid::parse_payload_kind(kind);
        cfg.misbehavior = rapid::parse_misbehavior(misbehave);
        if (!shape.empty()) cfg.shape = parse_shape(shape);
        cfg.contact_frame = contact;
        cfg.beacon_destination = beacon;
        cfg.heartbeat_period = std::chrono::milliseconds(heartbeat_ms);
        cfg.run_for = std::chrono::duration_cast<rapid::Duration>(std::chrono::duration<double>(duration_s));
        rapid::validate(cfg);
    } catch (const std::exception& e) {
        std::cerr << "rapid-vsensor: " << e.what() << "\n";
        return 2;
    }

    struct sigaction sa {};
    sa.sa_handler = on_signal;
    sigemptyset(&sa.sa_mask);
    ::sigaction(SIGINT, &sa, nullptr);
    if (cfg.misbehavior.mode == rapid::Misbehavior::IgnoreTermination) {
        std::signal(SIGTERM, SIG_IGN);
    } else {
        ::sigaction(SIGTERM, &sa, nullptr);
    }
    std::signal(SIGPIPE, SIG_IGN);

    try {
        auto result = rapid::run_virtual_sensor(cfg, g_stop, [&](const std::string& ep) {
            if (print_endpoint) std::cout << "endpoint " << ep << std::endl;
        });
        if (result.exit_code != 0) {
            std::cerr << "rapid-vsensor: " << cfg.name << " crashing on purpose after " << result.frames << " frames\n";
        }
        return result.exit_code;
    } catch (const rapid::Error& e) {
        std::cerr << "rapid-vsensor: " << e.what() << "\n";
        return e.code() == rapid::Errc::ConnectFailure ? 3 : 1;
    }
}
