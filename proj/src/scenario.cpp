#include "rapid/scenario.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>
#include <thread>

#include <poll.h>
#include <unistd.h>

#include "rapid/daemon.hpp"
#include "rapid/error.hpp"
#include "rapid/log.hpp"
#include "rapid/mask_channel.hpp"
#include "rapid/sync.hpp"
#include "rapid/transport.hpp"

namespace rapid {

namespace {

std::string normalise(std::string_view t) {
    std::string s;
    for (char c : t) s.push_back(c == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return s;
}

double to_ms(Duration d) { return std::chrono::duration<double, std::milli>(d).count(); }

std::filesystem::path make_work_dir(const std::filesystem::path& requested, const char* tag) {
    if (!requested.empty()) {
        std::filesystem::create_directories(requested);
        return requested;
    }
    std::string tmpl = (std::filesystem::temp_directory_path() / (std::string(tag) + "-XXXXXX")).string();
    if (::mkdtemp(tmpl.data()) == nullptr) throw Error(Errc::HarnessError, "cannot create a work directory");
    return tmpl;
}

/// Removes the directory on scope exit when it was created here.
struct WorkDir {
    std::filesystem::path path;
    bool owned;
    WorkDir(const std::filesystem::path& requested, const char* tag)
        : path(make_work_dir(requested, tag)), owned(requested.empty()) {}
    ~WorkDir() {
        if (!owned) return;
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

std::string quoted(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

HotplugEvent event_for(const DeviceDescriptor& d, HotplugKind kind) {
    HotplugEvent ev;
    ev.kind = kind;
    ev.identity = d.identity;
    ev.timestamp_ns = to_ns(mono_now());
    return ev;
}

StatusSnapshot query_status(LineClient& client) {
    auto reply = client.request({{"cmd", "status"}});
    if (!reply.value("ok", false)) throw Error(Errc::HarnessError, "status request failed: " + reply.dump());
    return StatusSnapshot::from_json(reply);
}

void wait_online(LineClient& client, const std::vector<std::string>& names, Duration timeout) {
    const MonoTime deadline = mono_now() + timeout;
    for (;;) {
        StatusSnapshot s = query_status(client);
        bool all = std::all_of(names.begin(), names.end(), [&](const std::string& n) {
            return std::any_of(s.devices.begin(), s.devices.end(), [&](const DeviceStatus& d) {
                return d.name == n && d.state == DeviceState::Online && !d.endpoint.empty();
            });
        });
        if (all) return;
        if (mono_now() > deadline) throw Error(Errc::HarnessError, "devices did not come online in time");
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
}

struct Stream {
    std::size_t channel;
    std::string endpoint;
    std::unique_ptr<Subscriber> sub;
};

/// Scores observations as they are emitted.
class Scorer {
public:
    Scorer(ScenarioOutcome& out, const std::vector<ChannelSpec>& specs, std::int64_t t0_ns)
        : out_(out), specs_(specs), t0_(t0_ns), last_present_(specs.size()) {
        for (const auto& s : specs) out_.channels.push_back(ChannelOutcome{s.name});
        std::size_t len = 0;
        for (const auto& s : specs) len += s.element_count();
        out_.vector_length = len;
    }

    void add(const SyncedObservation& obs) {
        ++out_.observations_emitted;
        if (assemble_observation_vector(obs).values.size() != out_.vector_length) out_.fixed_dimension = false;
        if (last_t_ref_) out_.max_gap = std::max(out_.max_gap, Duration(obs.t_ref - *last_t_ref_));
        last_t_ref_ = obs.t_ref;
        bool tactile_present = false;
        for (std::size_t c = 0; c < specs_.size(); ++c) {
            const auto& ch = obs.channels[c];
            auto& co = out_.channels[c];
            if (ch.present) {
                ++co.present;
            } else if (ch.stale) {
                ++co.stale;
            } else {
                ++co.absent;
            }
            if (!ch.present && std::any_of(ch.payload.begin(), ch.payload.end(), [](float v) { return v != 0.0f; })) {
                out_.fixed_dimension = false;
            }
            if (!last_present_[c] || *last_present_[c] != ch.present) {
                out_.transitions.push_back(PresenceChange{Duration(obs.t_ref - t0_), specs_[c].name, ch.present});
                last_present_[c] = ch.present;
            }
            if (specs_[c].name == kScenarioTactile) tactile_present = ch.present;
        }
        // Stand-in policy: only a tactile reading supports a confident decision.
        if (tactile_present) {
            ++out_.confident_decisions;
        } else {
            ++out_.degraded_decisions;
        }
    }

    void finish() {
        for (std::size_t c = 0; c < specs_.size(); ++c) {
            auto& co = out_.channels[c];
            auto total = co.present + co.absent + co.stale;
            co.zero_filled_fraction = total == 0 ? 1.0 : static_cast<double>(co.absent + co.stale) / static_cast<double>(total);
        }
    }

private:
    ScenarioOutcome& out_;
    const std::vector<ChannelSpec>& specs_;
    std::int64_t t0_;
    std::vector<std::optional<bool>> last_present_;
    std::optional<std::int64_t> last_t_ref_;
};

void wait_streams(std::vector<Stream*> streams, Duration timeout) {
    std::vector<pollfd> fds;
    for (Stream* s : streams) {
        if (s->sub && s->sub->connected()) fds.push_back({s->sub->fd(), POLLIN, 0});
    }
    if (fds.empty()) {
        std::this_thread::sleep_for(timeout);
        return;
    }
    ::poll(fds.data(), fds.size(), static_cast<int>(std::chrono::ceil<std::chrono::milliseconds>(timeout).count()));
}

}  // namespace

std::string_view to_string(Condition c) noexcept {
    switch (c) {
        case Condition::Full: return "Full";
        case Condition::NoTactile: return "NoTactile";
        case Condition::HotUnplug: return "HotUnplug";
        case Condition::HotReplug: return "HotReplug";
    }
    return "?";
}

std::string_view to_string(ConsumerMode m) noexcept {
    return m == ConsumerMode::MaskAware ? "MaskAware" : "StaticConfig";
}

std::string_view to_string(ScenarioStatus s) noexcept {
    switch (s) {
        case ScenarioStatus::Normal: return "Normal";
        case ScenarioStatus::Degraded: return "Degraded";
        case ScenarioStatus::Crash: return "Crash";
    }
    return "?";
}

Condition parse_condition(std::string_view text) {
    const std::string t = normalise(text);
    if (t == "full") return Condition::Full;
    if (t == "no-tactile" || t == "notactile") return Condition::NoTactile;
    if (t == "hot-unplug" || t == "hotunplug") return Condition::HotUnplug;
    if (t == "hot-replug" || t == "hotreplug") return Condition::HotReplug;
    throw Error(Errc::ParseError, "unknown condition '" + std::string(text) + "' (full, no-tactile, hot-unplug, hot-replug)");
}

ConsumerMode parse_mode(std::string_view text) {
    const std::string t = normalise(text);
    if (t == "mask-aware" || t == "maskaware") return ConsumerMode::MaskAware;
    if (t == "static" || t == "static-config" || t == "staticconfig") return ConsumerMode::StaticConfig;
    throw Error(Errc::ParseError, "unknown mode '" + std::string(text) + "' (mask-aware, static)");
}

ScenarioSpec make_scenario(Condition condition, ConsumerMode mode, Duration duration) {
    ScenarioSpec s;
    s.condition = condition;
    s.mode = mode;
    s.duration = duration;
    const Duration unplug = duration / 4;
    if (condition == Condition::HotUnplug || condition == Condition::HotReplug) {
        s.timeline.push_back({unplug, HotplugKind::Detach, std::string(kScenarioTactile)});
    }
    if (condition == Condition::HotReplug) {
        s.timeline.push_back({unplug + duration / 12, HotplugKind::Attach, std::string(kScenarioTactile)});
    }
    return s;
}

const ChannelOutcome* ScenarioOutcome::channel(std::string_view name) const {
    for (const auto& c : channels) {
        if (c.name == name) return &c;
    }
    return nullptr;
}

std::vector<int> ScenarioOutcome::presence_pattern(std::string_view ch) const {
    std::vector<int> out;
    for (const auto& t : transitions) {
        if (t.channel != ch) continue;
        int v = t.present ? 1 : 0;
        if (out.empty() || out.back() != v) out.push_back(v);
    }
    return out;
}

nlohmann::json ScenarioOutcome::to_json() const {
    nlohmann::json j;
    j["condition"] = std::string(to_string(condition));
    j["mode"] = std::string(to_string(mode));
    j["status"] = std::string(to_string(status));
    j["observations_emitted"] = observations_emitted;
    j["confident_decisions"] = confident_decisions;
    j["degraded_decisions"] = degraded_decisions;
    j["vector_length"] = vector_length;
    j["fixed_dimension"] = fixed_dimension;
    j["max_gap_ms"] = to_ms(max_gap);
    j["elapsed_ms"] = to_ms(elapsed);
    if (!crash_reason.empty()) j["crash_reason"] = crash_reason;
    j["channels"] = nlohmann::json::array();
    for (const auto& c : channels) {
        j["channels"].push_back({{"name", c.name},
                                 {"present", c.present},
                                 {"absent", c.absent},
                                 {"stale", c.stale},
                                 {"zero_filled_fraction", c.zero_filled_fraction},
                                 {"presence_pattern", presence_pattern(c.name)}});
    }
    j["transitions"] = nlohmann::json::array();
    for (const auto& t : transitions) {
        j["transitions"].push_back({{"at_ms", to_ms(t.at)}, {"channel", t.channel}, {"present", t.present}});
    }
    return j;
}

std::filesystem::path find_vsensor() {
    if (const char* env = std::getenv("RAPID_VSENSOR"); env != nullptr && *env != '\0') return env;
    std::error_code ec;
    auto self = std::filesystem::read_symlink("/proc/self/exe", ec);
    if (!ec) {
        for (auto candidate : {self.parent_path() / "rapid-vsensor", self.parent_path() / ".." / "tools" / "rapid-vsensor"}) {
            if (std::filesystem::exists(candidate, ec)) return std::filesystem::weakly_canonical(candidate, ec);
        }
    }
    return "rapid-vsensor";
}

ScenarioOutcome run_scenario(const ScenarioSpec& spec, const HarnessConfig& harness) {
    const auto vsensor = harness.vsensor.empty() ? find_vsensor() : harness.vsensor;
    WorkDir dir(harness.work_dir, "rapid-scenario");

    Registry registry;
    DeviceDescriptor cam{std::string(kScenarioCamera), {0x2b03, 0x0001, std::string("CAM001")},
                         quoted(vsensor) + " --kind camera --rate 30 --seed 11", std::nullopt,
                         "/rapid/camera/wrist", 0, {16, 16}};
    DeviceDescriptor tac{std::string(kScenarioTactile), {0x1234, 0x5678, std::string("TACL001")},
                         quoted(vsensor) + " --kind tactile --rate 60 --seed 12", std::nullopt,
                         "/rapid/tactile/left", 1, {8, 8}};
    registry.add(cam);
    registry.add(tac);

    const std::vector<ChannelSpec> specs{{cam.name, cam.topic, cam.shape, cam.bit, 30.0},
                                         {tac.name, tac.topic, tac.shape, tac.bit, 60.0}};

    ScenarioOutcome out;
    out.condition = spec.condition;
    out.mode = spec.mode;

    std::unique_ptr<Daemon> daemon;
    try {
        DaemonConfig dc;
        dc.registry = registry;
        dc.supervisor = harness.supervisor;
        dc.mask.path = dir.path / "mask";
        dc.control_socket = dir.path / "control.sock";
        dc.os_events = false;
        dc.mask_topic_bind.reset();
        daemon = std::make_unique<Daemon>(dc);
        daemon->start();
    } catch (const Error& e) {
        throw Error(Errc::HarnessError, std::string("daemon setup failed: ") + e.what());
    }

    const auto control = daemon->config().control_socket;
    const auto mask_path = daemon->config().mask.path;
    std::vector<std::string> initial{cam.name};
    if (spec.condition != Condition::NoTactile) initial.push_back(tac.name);

    try {
        LineClient client(control);
        for (const auto& name : initial) {
            auto o = inject(control, event_for(*registry.find(name), HotplugKind::Attach));
            if (!o.matched) throw Error(Errc::HarnessError, "attach of " + name + " was not matched");
        }
        wait_online(client, initial, harness.startup_timeout);

        std::map<std::string, Stream> streams;
        auto connect_streams = [&](const StatusSnapshot& s, bool only_new) {
            for (const auto& d : s.devices) {
                if (d.state != DeviceState::Online || d.endpoint.empty()) continue;
                auto idx = d.name == cam.name ? 0u : 1u;
                Stream& st = streams[d.name];
                if (only_new && st.sub && st.sub->connected() && st.endpoint == d.endpoint) continue;
                try {
                    st = Stream{idx, d.endpoint,
                                std::make_unique<Subscriber>(d.endpoint, std::vector<std::string>{d.topic},
                                                             std::chrono::milliseconds(500))};
                } catch (const Error& e) {
                    log()->debug("scenario: {} not reachable yet: {}", d.name, e.what());
                }
            }
        };
        connect_streams(query_status(client), false);

        Synchronizer sync(specs, spec.window);
        std::uint64_t expected_bits = 0;
        for (const auto& name : initial) expected_bits |= std::uint64_t{1} << registry.find(name)->bit;

        const MonoTime t_start = mono_now();
        Scorer scorer(out, specs, to_ns(t_start));
        std::size_t next_event = 0;
        MonoTime next_status = t_start;
        std::uint64_t last_mask_seq = 0;
        std::map<std::string, MonoTime> last_sample;
        for (const auto& name : initial) last_sample[name] = t_start;
        const Duration lag = std::chrono::milliseconds(60);
        bool crashed = false;

        while (!crashed) {
            const MonoTime now = mono_now();
            if (now - t_start >= spec.duration) break;
            while (next_event < spec.timeline.size() && now - t_start >= spec.timeline[next_event].offset) {
                const auto& te = spec.timeline[next_event++];
                const DeviceDescriptor* d = registry.find(te.device);
                if (d == nullptr) throw Error(Errc::HarnessError, "timeline names unknown device " + te.device);
                auto o = inject(control, event_for(*d, te.kind));
                log()->info("scenario t={:.0f}ms: {} {} -> {} {}", to_ms(now - t_start), to_string(te.kind), te.device,
                            o.state, o.note);
            }

            if (spec.mode == ConsumerMode::MaskAware) {
                if (now >= next_status) {
                    next_status = now + std::chrono::milliseconds(50);
                    connect_streams(query_status(client), true);
                }
                try {
                    PhysicalMask m = read_mask(mask_path);
                    if (m.sequence != last_mask_seq) {
                        sync.push_mask(m);
                        last_mask_seq = m.sequence;
                    }
                } catch (const Error& e) {
                    log()->debug("scenario: mask read: {}", e.what());
                }
            } else {
                // The baseline believes its configuration file: the expected set is always there.
                PhysicalMask m;
                m.device_count = static_cast<std::uint8_t>(registry.size());
                m.mask = expected_bits;
                m.timestamp_ns = static_cast<std::uint64_t>(to_ns(now));
                sync.push_mask(m);
            }

            for (auto& [name, st] : streams) {
                if (!st.sub) continue;
                while (auto ev = st.sub->next(Duration::zero())) {
                    if (auto* gone = std::get_if<Disconnected>(&*ev)) {
                        if (spec.mode == ConsumerMode::StaticConfig) {
                            crashed = true;
                            out.crash_reason = "stream " + name + " ended: " + gone->reason;
                        }
                        st.sub.reset();
                        break;
                    }
                    auto& env = std::get<MessageEnvelope>(*ev);
                    try {
                        sync.push_sample(st.channel, env.timestamp_ns,
                                         decode_payload(env.payload, specs[st.channel].element_count()));
                        last_sample[name] = mono_now();
                    } catch (const Error& e) {
                        if (spec.mode == ConsumerMode::StaticConfig) {
                            crashed = true;
                            out.crash_reason = std::string("malformed frame: ") + e.what();
                        }
                    }
                }
            }
            if (spec.mode == ConsumerMode::StaticConfig && !crashed) {
                for (const auto& [name, at] : last_sample) {
                    if (mono_now() - at > std::chrono::milliseconds(500)) {
                        crashed = true;
                        out.crash_reason = "expected stream " + name + " silent for more than 500 ms";
                    }
                }
            }

            for (const auto& obs : sync.advance(to_ns(mono_now() - lag))) scorer.add(obs);
            std::vector<Stream*> ptrs;
            for (auto& [n, st] : streams) ptrs.push_back(&st);
            wait_streams(ptrs, std::chrono::milliseconds(2));
        }
        for (const auto& obs : sync.flush()) scorer.add(obs);
        scorer.finish();
        out.elapsed = mono_now() - t_start;

        if (crashed) {
            out.status = ScenarioStatus::Crash;
        } else {
            const ChannelOutcome* t = out.channel(kScenarioTactile);
            bool mostly_missing = out.observations_emitted == 0 || t == nullptr || t->zero_filled_fraction > 0.5;
            out.status = mostly_missing ? ScenarioStatus::Degraded : ScenarioStatus::Normal;
        }
    } catch (const Error& e) {
        daemon->stop();
        if (e.code() == Errc::HarnessError) throw;
        throw Error(Errc::HarnessError, e.what());
    }
    daemon->stop();
    return out;
}

// ---- bench --------------------------------------------------------------------------------

LatencyStats LatencyStats::from(std::vector<double> v) {
    LatencyStats s;
    s.count = v.size();
    if (v.empty()) return s;
    std::sort(v.begin(), v.end());
    // nearest-rank percentiles
    auto rank = [&](double p) {
        auto k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size())));
        return v[std::min(v.size(), std::max<std::size_t>(k, 1)) - 1];
    };
    s.min_ms = v.front();
    s.max_ms = v.back();
    s.p50_ms = rank(0.50);
    s.p90_ms = rank(0.90);
    s.p99_ms = rank(0.99);
    s.mean_ms = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    return s;
}

nlohmann::json LatencyStats::to_json() const {
    return {{"count", count}, {"min_ms", min_ms}, {"p50_ms", p50_ms}, {"p90_ms", p90_ms},
            {"p99_ms", p99_ms}, {"max_ms", max_ms}, {"mean_ms", mean_ms}};
}

nlohmann::json BenchReport::to_json() const {
    nlohmann::json j;
    j["mask_publish_rate_hz"] = publish_rate_hz;
    j["detach_to_bit_cleared"] = detach_visible.to_json();
    j["attach_to_bit_set"] = attach_visible.to_json();
    j["attach_to_first_data"] = first_data ? first_data->to_json() : nlohmann::json(nullptr);
    j["read_failures"] = read_failures;
    return j;
}

std::string BenchReport::to_text() const {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    auto row = [&](const char* stage, const LatencyStats& s) {
        os << "  " << stage << ": n=" << s.count << " p50 " << s.p50_ms << " ms, p99 " << s.p99_ms << " ms, max "
           << s.max_ms << " ms\n";
    };
    os << "mask publish rate: " << publish_rate_hz << " Hz\n";
    row("detach -> bit cleared in shared file", detach_visible);
    row("attach -> bit set (first heartbeat)", attach_visible);
    if (first_data) {
        row("attach -> first camera frame", *first_data);
    } else {
        os << "  attach -> first camera frame: not measured\n";
    }
    return os.str();
}

namespace {

/// Polls the shared file until pred holds; returns the time it was first observed.
template <typename Pred>
std::optional<MonoTime> watch_mask(const std::filesystem::path& path, Pred pred, Duration timeout,
                                   std::uint64_t& failures) {
    const MonoTime deadline = mono_now() + timeout;
    while (mono_now() < deadline) {
        try {
            if (pred(read_mask(path))) return mono_now();
        } catch (const Error&) {
            ++failures;
        }
        std::this_thread::sleep_for(std::chrono::microseconds(100));
    }
    return std::nullopt;
}

}  // namespace

BenchReport run_bench(const BenchConfig& cfg) {
    WorkDir dir(cfg.work_dir, "rapid-bench");
    BenchReport rep;
    try {
        Registry reg;
        for (int i = 0; i < cfg.devices; ++i) {
            char serial[16];
            std::snprintf(serial, sizeof serial, "B%03d", i);
            reg.add(DeviceDescriptor{"bench_" + std::to_string(i),
                                     {static_cast<std::uint16_t>(0x1000 + i), 0x0001, std::string(serial)},
                                     "simulated", std::nullopt, "/rapid/bench/" + std::to_string(i),
                                     static_cast<unsigned>(i), {1}});
        }
        DaemonConfig dc;
        dc.registry = reg;
        dc.supervisor.cooldown = cfg.cooldown;
        dc.mask.path = dir.path / "mask";
        dc.control_socket = dir.path / "control.sock";
        dc.os_events = false;
        dc.mask_topic_bind.reset();
        dc.backend = ProcessBackend::Simulated;
        Daemon daemon(dc);
        daemon.start();

        {
            const auto s0 = read_mask(dc.mask.path);
            const MonoTime t0 = mono_now();
            std::this_thread::sleep_for(cfg.rate_window);
            const auto s1 = read_mask(dc.mask.path);
            const MonoTime t1 = mono_now();
            rep.publish_rate_hz = static_cast<double>(s1.sequence - s0.sequence) /
                                  std::chrono::duration<double>(t1 - t0).count();
        }

        LineClient client(dc.control_socket);
        auto send_event = [&](const DeviceDescriptor& d, HotplugKind kind) {
            client.send_line(injection_to_json(event_for(d, kind)).dump());
        };
        std::vector<double> detach_ms, attach_ms;
        const auto& descs = reg.descriptors();
        while (static_cast<int>(detach_ms.size()) < cfg.transitions) {
            for (const auto& d : descs) {
                const MonoTime t0 = mono_now();
                send_event(d, HotplugKind::Attach);
                auto seen = watch_mask(dc.mask.path, [&](const PhysicalMask& m) { return m.online(d.bit); },
                                       std::chrono::seconds(5), rep.read_failures);
                client.read_line();
                if (!seen) throw Error(Errc::HarnessError, d.name + " never came online");
                attach_ms.push_back(to_ms(*seen - t0));
            }
            const MonoTime round_start = mono_now();
            for (const auto& d : descs) {
                if (static_cast<int>(detach_ms.size()) >= cfg.transitions) break;
                const MonoTime t0 = mono_now();
                send_event(d, HotplugKind::Detach);
                auto seen = watch_mask(dc.mask.path, [&](const PhysicalMask& m) { return !m.online(d.bit); },
                                       std::chrono::seconds(2), rep.read_failures);
                client.read_line();
                if (!seen) throw Error(Errc::HarnessError, d.name + " bit never cleared");
                detach_ms.push_back(to_ms(*seen - t0));
            }
            // Let every device leave its cooldown before the next round re-attaches it.
            std::this_thread::sleep_until(round_start + cfg.cooldown + std::chrono::milliseconds(20));
            for (const auto& d : descs) {
                if (daemon.presence_word() & (std::uint64_t{1} << d.bit)) {
                    send_event(d, HotplugKind::Detach);
                    client.read_line();
                }
            }
        }
        rep.detach_visible = LatencyStats::from(detach_ms);
        rep.attach_visible = LatencyStats::from(attach_ms);
        daemon.stop();
    } catch (const Error& e) {
        if (e.code() == Errc::HarnessError) throw;
        throw Error(Errc::HarnessError, std::string("bench: ") + e.what());
    }

    const auto vsensor = cfg.vsensor.empty() ? find_vsensor() : cfg.vsensor;
    std::error_code ec;
    if (cfg.first_data_trials > 0 && std::filesystem::exists(vsensor, ec)) {
        try {
            Registry reg;
            DeviceDescriptor cam{"bench_cam", {0x2b03, 0x0001, std::string("CAMBENCH")},
                                 quoted(vsensor) + " --kind camera --rate 30", std::nullopt, "/rapid/bench/camera", 0,
                                 {16, 16}};
            reg.add(cam);
            DaemonConfig dc;
            dc.registry = reg;
            dc.supervisor.cooldown = std::chrono::milliseconds(200);
            dc.mask.path = dir.path / "mask_cam";
            dc.control_socket = dir.path / "control_cam.sock";
            dc.os_events = false;
            dc.mask_topic_bind.reset();
            Daemon daemon(dc);
            daemon.start();
            LineClient client(dc.control_socket);
            std::vector<double> samples;
            for (int trial = 0; trial < cfg.first_data_trials; ++trial) {
                const MonoTime t0 = mono_now();
                inject(dc.control_socket, event_for(cam, HotplugKind::Attach));
                std::optional<MonoTime> first;
                std::unique_ptr<Subscriber> sub;
                while (!first && mono_now() - t0 < std::chrono::seconds(5)) {
                    if (!sub) {
                        StatusSnapshot s = query_status(client);
                        if (!s.devices.empty() && !s.devices[0].endpoint.empty()) {
                            try {
                                sub = std::make_unique<Subscriber>(s.devices[0].endpoint,
                                                                   std::vector<std::string>{cam.topic});
                            } catch (const Error&) {
                            }
                        }
                        if (!sub) std::this_thread::sleep_for(std::chrono::milliseconds(5));
                        continue;
                    }
                    auto ev = sub->next(std::chrono::milliseconds(50));
                    if (ev && std::holds_alternative<MessageEnvelope>(*ev)) first = mono_now();
                }
                if (!first) throw Error(Errc::HarnessError, "no camera frame within 5 s of attach");
                samples.push_back(to_ms(*first - t0));
                sub.reset();
                inject(dc.control_socket, event_for(cam, HotplugKind::Detach));
                const MonoTime settle = mono_now() + std::chrono::seconds(5);
                while (mono_now() < settle) {
                    StatusSnapshot s = query_status(client);
                    if (s.devices[0].state == DeviceState::Offline) break;
                    std::this_thread::sleep_for(std::chrono::milliseconds(10));
                }
                std::this_thread::sleep_for(dc.supervisor.cooldown + std::chrono::milliseconds(20));
            }
            rep.first_data = LatencyStats::from(samples);
            daemon.stop();
        } catch (const Error& e) {
            if (e.code() == Errc::HarnessError) throw;
            throw Error(Errc::HarnessError, std::string("bench first-data: ") + e.what());
        }
    }
    return rep;
}

}  // namespace rapid
