#include "rapid/recorder.hpp"

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <set>
#include <sstream>

#include <fcntl.h>
#include <poll.h>
#include <unistd.h>

#include "rapid/eventbus.hpp"
#include "rapid/log.hpp"
#include "rapid/mask.hpp"
#include "rapid/mask_channel.hpp"
#include "rapid/transport.hpp"

namespace rapid {

namespace {

constexpr std::size_t kMaxRecordPayload = 64u << 20;
constexpr std::size_t kWriteBuffer = 64u << 10;

template <typename T>
void append_le(std::vector<std::uint8_t>& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(v) >> (8 * i)));
}

template <typename T>
T load_le(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return static_cast<T>(v);
}

std::string now_wall_iso() { return iso8601_utc(std::chrono::system_clock::now()); }

}  // namespace

// ---- manifest -----------------------------------------------------------------------------

const EpisodeChannel* EpisodeManifest::channel(std::uint8_t id) const {
    for (const auto& c : channels) {
        if (c.id == id) return &c;
    }
    return nullptr;
}

const EpisodeChannel* EpisodeManifest::channel_by_topic(std::string_view topic) const {
    for (const auto& c : channels) {
        if (c.topic == topic) return &c;
    }
    return nullptr;
}

nlohmann::json EpisodeManifest::to_json() const {
    nlohmann::json j;
    j["format_version"] = format_version;
    j["start_wall_time"] = start_wall_time;
    j["device_count"] = device_count;
    nlohmann::json bits = nlohmann::json::object();
    for (const auto& [bit, name] : bit_map) bits[std::to_string(bit)] = name;
    j["bit_map"] = bits;
    j["channels"] = nlohmann::json::array();
    for (const auto& c : channels) {
        j["channels"].push_back({{"id", c.id},
                                 {"name", c.name},
                                 {"topic", c.topic},
                                 {"shape", c.shape},
                                 {"rate_hz", c.rate_hz},
                                 {"bit", c.bit ? nlohmann::json(*c.bit) : nlohmann::json(nullptr)}});
    }
    return j;
}

EpisodeManifest EpisodeManifest::from_json(const nlohmann::json& j) {
    try {
        EpisodeManifest m;
        m.format_version = j.at("format_version").get<int>();
        if (m.format_version != 1) {
            throw Error(Errc::CorruptContainer, "unsupported manifest version " + std::to_string(m.format_version));
        }
        m.start_wall_time = j.at("start_wall_time").get<std::string>();
        m.device_count = j.at("device_count").get<unsigned>();
        for (const auto& [k, v] : j.at("bit_map").items()) m.bit_map[static_cast<unsigned>(std::stoul(k))] = v.get<std::string>();
        std::set<std::uint8_t> ids;
        for (const auto& c : j.at("channels")) {
            EpisodeChannel ch;
            ch.id = c.at("id").get<std::uint8_t>();
            ch.name = c.at("name").get<std::string>();
            ch.topic = c.at("topic").get<std::string>();
            ch.shape = c.at("shape").get<std::vector<std::size_t>>();
            ch.rate_hz = c.at("rate_hz").get<double>();
            if (!c.at("bit").is_null()) ch.bit = c.at("bit").get<unsigned>();
            if (!ids.insert(ch.id).second) throw Error(Errc::CorruptContainer, "duplicate channel id");
            m.channels.push_back(std::move(ch));
        }
        if (m.channel(kMaskChannelId) == nullptr) throw Error(Errc::CorruptContainer, "manifest lacks channel 0");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::CorruptContainer, std::string("bad manifest: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw Error(Errc::CorruptContainer, "bad manifest bit_map key");
    }
}

EpisodeManifest manifest_for_registry(const Registry& registry, const std::vector<std::string>& topics,
                                      double default_rate_hz, const std::string& start_wall_time) {
    EpisodeManifest m;
    m.start_wall_time = start_wall_time;
    m.device_count = static_cast<unsigned>(registry.size());
    m.channels.push_back(EpisodeChannel{kMaskChannelId, "mask", std::string(kMaskTopic), {kMaskRecordSize}, 500.0, std::nullopt});
    std::set<std::string> wanted;
    for (const auto& t : topics) {
        const DeviceDescriptor* d = registry.by_topic(t);
        if (d == nullptr) d = registry.find(t);
        if (d == nullptr) throw Error(Errc::TopicUnavailable, "'" + t + "' is neither a registered topic nor a device");
        wanted.insert(d->topic);
    }
    std::vector<const DeviceDescriptor*> devs;
    for (const auto& d : registry.descriptors()) devs.push_back(&d);
    std::sort(devs.begin(), devs.end(), [](auto* a, auto* b) { return a->bit < b->bit; });
    for (const DeviceDescriptor* d : devs) {
        m.bit_map[d->bit] = d->name;
        if (!wanted.empty() && !wanted.count(d->topic)) continue;
        m.channels.push_back(EpisodeChannel{static_cast<std::uint8_t>(m.channels.size()), d->name, d->topic, d->shape,
                                            default_rate_hz, d->bit});
    }
    return m;
}

// ---- writer -------------------------------------------------------------------------------

EpisodeWriter::EpisodeWriter(const std::filesystem::path& path, EpisodeManifest manifest)
    : manifest_(std::move(manifest)) {
    fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error(Errc::IoError, "open " + path.string() + ": " + std::strerror(errno));
    std::string doc = manifest_.to_json().dump();
    for (std::uint8_t b : kEpisodeMagic) pending_.push_back(b);
    pending_.push_back(kEpisodeVersion);
    append_le(pending_, static_cast<std::uint32_t>(doc.size()));
    pending_.insert(pending_.end(), doc.begin(), doc.end());
    flush();
}

EpisodeWriter::~EpisodeWriter() {
    try {
        close();
    } catch (const Error& e) {
        log()->error("episode close: {}", e.what());
    }
}

std::uint64_t EpisodeWriter::records_on(std::uint8_t channel) const {
    auto it = counts_.find(channel);
    return it == counts_.end() ? 0 : it->second;
}

void EpisodeWriter::append(const EpisodeRecord& r) {
    if (fd_ < 0) throw Error(Errc::IoError, "episode writer closed");
    if (manifest_.channel(r.channel_id) == nullptr) {
        throw Error(Errc::InvariantViolation, "record for undeclared channel " + std::to_string(r.channel_id));
    }
    auto last = last_ts_.find(r.channel_id);
    if (last != last_ts_.end() && r.timestamp_ns < last->second) {
        throw Error(Errc::InvariantViolation, "timestamp went backwards on channel " + std::to_string(r.channel_id));
    }
    last_ts_[r.channel_id] = r.timestamp_ns;
    pending_.push_back(r.channel_id);
    append_le(pending_, static_cast<std::uint64_t>(r.timestamp_ns));
    append_le(pending_, static_cast<std::uint32_t>(r.payload.size()));
    pending_.insert(pending_.end(), r.payload.begin(), r.payload.end());
    ++counts_[r.channel_id];
    ++written_;
    if (pending_.size() >= kWriteBuffer) flush();
}

void EpisodeWriter::write_bytes(const void* data, std::size_t len) {
    auto p = static_cast<const std::uint8_t*>(data);
    while (len > 0) {
        ssize_t n = ::write(fd_, p, len);
        if (n < 0) {
            if (errno == EINTR) continue;
            if (errno == ENOSPC || errno == EDQUOT) throw Error(Errc::DiskFull, "episode write: no space left");
            throw Error(Errc::IoError, std::string("episode write: ") + std::strerror(errno));
        }
        p += n;
        len -= static_cast<std::size_t>(n);
    }
}

void EpisodeWriter::flush() {
    if (fd_ < 0 || pending_.empty()) return;
    std::vector<std::uint8_t> out;
    out.swap(pending_);
    write_bytes(out.data(), out.size());
}

void EpisodeWriter::close() {
    if (fd_ < 0) return;
    try {
        flush();
    } catch (...) {
        ::close(fd_);
        fd_ = -1;
        throw;
    }
    ::close(fd_);
    fd_ = -1;
}

// ---- reader -------------------------------------------------------------------------------

EpisodeReader::EpisodeReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw Error(Errc::IoError, "cannot open " + path.string());
    std::uint8_t head[9];
    in_.read(reinterpret_cast<char*>(head), sizeof head);
    if (in_.gcount() < 4 || std::memcmp(head, kEpisodeMagic, 4) != 0) throw ContainerDamage(0, "missing REPI header");
    if (in_.gcount() < 5) throw ContainerDamage(4, "truncated header");
    if (head[4] != kEpisodeVersion) throw ContainerDamage(4, "unsupported container version " + std::to_string(head[4]));
    if (in_.gcount() < 9) throw ContainerDamage(5, "truncated header");
    std::uint32_t len = load_le<std::uint32_t>(head + 5);
    if (len > kMaxRecordPayload) throw ContainerDamage(5, "implausible manifest length");
    std::string doc(len, '\0');
    in_.read(doc.data(), len);
    if (static_cast<std::uint32_t>(in_.gcount()) != len) throw ContainerDamage(9, "truncated manifest");
    try {
        manifest_ = EpisodeManifest::from_json(nlohmann::json::parse(doc));
    } catch (const nlohmann::json::exception& e) {
        throw ContainerDamage(9, std::string("manifest is not JSON: ") + e.what());
    } catch (const Error& e) {
        throw ContainerDamage(9, e.what());
    }
    offset_ = 9 + len;
}

std::optional<EpisodeRecord> EpisodeReader::next() {
    std::uint8_t head[kRecordHeaderSize];
    in_.read(reinterpret_cast<char*>(head), sizeof head);
    auto got = static_cast<std::size_t>(in_.gcount());
    if (got == 0) return std::nullopt;
    if (got < sizeof head) throw ContainerDamage(offset_, "truncated record header");
    EpisodeRecord r;
    r.channel_id = head[0];
    r.timestamp_ns = static_cast<std::int64_t>(load_le<std::uint64_t>(head + 1));
    std::uint32_t len = load_le<std::uint32_t>(head + 9);
    if (manifest_.channel(r.channel_id) == nullptr) {
        throw ContainerDamage(offset_, "record for undeclared channel " + std::to_string(r.channel_id));
    }
    if (len > kMaxRecordPayload) throw ContainerDamage(offset_, "implausible payload length");
    r.payload.resize(len);
    in_.read(reinterpret_cast<char*>(r.payload.data()), len);
    if (static_cast<std::uint32_t>(in_.gcount()) != len) throw ContainerDamage(offset_, "truncated record payload");
    offset_ += sizeof head + len;
    return r;
}

Episode read_episode(const std::filesystem::path& path, bool tolerate_damage) {
    EpisodeReader reader(path);
    Episode ep;
    ep.manifest = reader.manifest();
    for (;;) {
        try {
            auto r = reader.next();
            if (!r) break;
            ep.records.push_back(std::move(*r));
        } catch (const ContainerDamage& d) {
            if (!tolerate_damage) throw;
            ep.damaged_at = d.offset();
            break;
        }
    }
    return ep;
}

// ---- audit --------------------------------------------------------------------------------

AuditReport audit_episode(const Episode& ep, const std::vector<std::string>& required) {
    AuditReport rep;
    rep.required = required;
    std::uint64_t required_bits = 0;
    for (const auto& name : required) {
        std::optional<unsigned> bit;
        for (const auto& [b, n] : ep.manifest.bit_map) {
            if (n == name) bit = b;
        }
        if (!bit) {
            if (const EpisodeChannel* c = ep.manifest.channel_by_topic(name); c != nullptr && c->bit) bit = c->bit;
        }
        if (!bit) throw Error(Errc::TopicUnavailable, "unknown modality '" + name + "'");
        required_bits |= std::uint64_t{1} << *bit;
    }

    std::vector<std::pair<std::int64_t, std::uint64_t>> masks;
    for (const auto& r : ep.records) {
        if (r.channel_id != kMaskChannelId) continue;
        try {
            masks.emplace_back(r.timestamp_ns, decode_mask(r.payload).mask);
        } catch (const Error& e) {
            log()->warn("audit: skipping undecodable mask record: {}", e.what());
        }
    }
    std::stable_sort(masks.begin(), masks.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    rep.mask_records = masks.size();
    if (!masks.empty()) rep.span = TimeInterval{masks.front().first, masks.back().first};

    // Walks the mask sequence and reports the maximal stretches where pred holds.
    auto stretches = [&](auto pred) {
        std::vector<TimeInterval> out;
        std::optional<std::int64_t> open;
        for (const auto& [ts, word] : masks) {
            bool on = pred(word);
            if (on && !open) open = ts;
            if (!on && open) {
                out.push_back({*open, ts});
                open.reset();
            }
        }
        if (open) out.push_back({*open, masks.back().first});
        return out;
    };

    for (const auto& [bit, name] : ep.manifest.bit_map) {
        ModalityDropouts m;
        m.name = name;
        m.bit = bit;
        m.offline = stretches([bit = bit](std::uint64_t w) { return ((w >> bit) & 1u) == 0; });
        rep.modalities.push_back(std::move(m));
    }
    rep.usable = stretches([&](std::uint64_t w) { return (w & required_bits) == required_bits; });
    return rep;
}

nlohmann::json AuditReport::to_json() const {
    nlohmann::json j;
    j["mask_records"] = mask_records;
    j["span"] = span ? nlohmann::json{{"start_ns", span->start_ns}, {"end_ns", span->end_ns}} : nlohmann::json(nullptr);
    j["modalities"] = nlohmann::json::array();
    for (const auto& m : modalities) {
        nlohmann::json iv = nlohmann::json::array();
        for (const auto& i : m.offline) iv.push_back({{"start_ns", i.start_ns}, {"end_ns", i.end_ns}});
        j["modalities"].push_back({{"name", m.name}, {"bit", m.bit}, {"offline", iv}});
    }
    j["required"] = required;
    j["usable"] = nlohmann::json::array();
    for (const auto& i : usable) j["usable"].push_back({{"start_ns", i.start_ns}, {"end_ns", i.end_ns}});
    return j;
}

std::string AuditReport::to_text() const {
    std::ostringstream os;
    auto secs = [&](std::int64_t ns) {
        std::ostringstream s;
        s.setf(std::ios::fixed);
        s.precision(3);
        s << (span ? static_cast<double>(ns - span->start_ns) / 1e9 : 0.0) << "s";
        return s.str();
    };
    os << mask_records << " mask records";
    if (span) os << " over " << secs(span->end_ns);
    os << "\n";
    for (const auto& m : modalities) {
        os << "  " << m.name << " (bit " << m.bit << "): ";
        if (m.offline.empty()) {
            os << "no dropouts\n";
            continue;
        }
        os << m.offline.size() << " dropout(s)";
        for (const auto& i : m.offline) os << " [" << secs(i.start_ns) << ", " << secs(i.end_ns) << "]";
        os << "\n";
    }
    if (!required.empty()) {
        os << "usable with {";
        for (std::size_t i = 0; i < required.size(); ++i) os << (i ? ", " : "") << required[i];
        os << "}: " << usable.size() << " segment(s)";
        for (const auto& i : usable) os << " [" << secs(i.start_ns) << ", " << secs(i.end_ns) << "]";
        os << "\n";
    }
    return os.str();
}

std::vector<SyncedObservation> synchronize_episode(const Episode& ep, Duration window) {
    std::vector<ChannelSpec> specs;
    std::map<std::uint8_t, std::size_t> index;
    for (const auto& c : ep.manifest.channels) {
        if (c.id == kMaskChannelId || !c.bit) continue;
        index[c.id] = specs.size();
        specs.push_back(ChannelSpec{c.name, c.topic, c.shape, *c.bit, c.rate_hz});
    }
    Synchronizer sync(specs, window);
    std::vector<const EpisodeRecord*> masks;
    for (const auto& r : ep.records) {
        if (r.channel_id == kMaskChannelId) masks.push_back(&r);
    }
    std::stable_sort(masks.begin(), masks.end(), [](auto* a, auto* b) { return a->timestamp_ns < b->timestamp_ns; });
    for (const EpisodeRecord* r : masks) {
        try {
            sync.push_mask(decode_mask(r->payload));
        } catch (const Error&) {
        }
    }
    for (const auto& r : ep.records) {
        auto it = index.find(r.channel_id);
        if (it == index.end()) continue;
        try {
            sync.push_sample(it->second, r.timestamp_ns, decode_payload(r.payload, specs[it->second].element_count()));
        } catch (const Error& e) {
            log()->debug("synchronize_episode: {}", e.what());
        }
    }
    return sync.flush();
}

// ---- live recording -----------------------------------------------------------------------

namespace {

struct LiveChannel {
    std::uint8_t id;
    std::string endpoint;
    std::unique_ptr<Subscriber> sub;
};

void drain(Subscriber& sub, std::uint8_t id, EpisodeWriter& w, RecordSummary& sum, bool& disconnected) {
    while (auto ev = sub.next(Duration::zero())) {
        if (std::holds_alternative<Disconnected>(*ev)) {
            disconnected = true;
            return;
        }
        auto& env = std::get<MessageEnvelope>(*ev);
        std::uint8_t ch = id;
        if (id == 0xFF) {
            const EpisodeChannel* c = w.manifest().channel_by_topic(env.topic);
            if (c == nullptr) continue;
            ch = c->id;
        }
        try {
            w.append(EpisodeRecord{ch, env.timestamp_ns, std::move(env.payload)});
        } catch (const Error& e) {
            if (e.code() != Errc::InvariantViolation) throw;
            ++sum.out_of_order_dropped;
        }
    }
}

void wait_any(const std::vector<int>& fds, Duration timeout) {
    if (fds.empty()) {
        std::this_thread::sleep_for(timeout);
        return;
    }
    std::vector<pollfd> p;
    for (int fd : fds) p.push_back({fd, POLLIN, 0});
    ::poll(p.data(), p.size(), static_cast<int>(std::chrono::ceil<std::chrono::milliseconds>(timeout).count()));
}

void fill_summary(RecordSummary& sum, const EpisodeWriter& w) {
    for (const auto& c : w.manifest().channels) {
        if (c.id == kMaskChannelId) {
            sum.mask_records = w.records_on(c.id);
        } else {
            sum.records_by_channel[c.name] = w.records_on(c.id);
        }
    }
}

RecordSummary record_static(const RecordConfig& cfg, std::stop_token stop) {
    if (!cfg.registry) throw Error(Errc::TopicUnavailable, "static recording needs a registration file");
    EpisodeWriter w(cfg.out, manifest_for_registry(*cfg.registry, cfg.topics, cfg.default_rate_hz, now_wall_iso()));
    Subscriber sub(*cfg.connect, {});
    RecordSummary sum;
    const MonoTime start = mono_now();
    bool gone = false;
    while (!stop.stop_requested() && !gone && mono_now() - start < cfg.duration) {
        wait_any({sub.fd()}, std::chrono::milliseconds(5));
        drain(sub, 0xFF, w, sum, gone);
    }
    if (gone) log()->info("record: publisher at {} went away", *cfg.connect);
    sum.elapsed = mono_now() - start;
    w.close();
    fill_summary(sum, w);
    return sum;
}

RecordSummary record_daemon(const RecordConfig& cfg, std::stop_token stop) {
    LineClient client(*cfg.control_socket);
    auto status = client.request({{"cmd", "status"}});
    if (!status.value("ok", false)) throw Error(Errc::DaemonUnreachable, "status request failed");
    Registry reg = registry_from_json(status.at("registry"));
    EpisodeWriter w(cfg.out, manifest_for_registry(reg, cfg.topics, cfg.default_rate_hz, now_wall_iso()));

    std::map<std::string, LiveChannel> live;  // by topic
    for (const auto& c : w.manifest().channels) {
        if (c.id != kMaskChannelId) live[c.topic] = LiveChannel{c.id, {}, nullptr};
    }

    RecordSummary sum;
    const MonoTime start = mono_now();
    MonoTime next_status = start;
    std::optional<std::uint64_t> last_word;
    std::uint64_t last_seq = 0;
    MonoTime last_mask_write{};
    bool first = true;
    while (first || (!stop.stop_requested() && mono_now() - start < cfg.duration)) {
        first = false;
        const MonoTime now = mono_now();
        if (now >= next_status) {
            next_status = now + cfg.status_poll;
            try {
                status = client.request({{"cmd", "status"}});
            } catch (const Error& e) {
                throw Error(Errc::DaemonUnreachable, std::string("daemon went away: ") + e.what());
            }
            for (const auto& d : status.value("devices", nlohmann::json::array())) {
                auto it = live.find(d.value("topic", ""));
                if (it == live.end() || d.value("state", "") != "Online" || !d["endpoint"].is_string()) continue;
                std::string ep = d["endpoint"].get<std::string>();
                LiveChannel& lc = it->second;
                if (lc.sub && lc.sub->connected() && lc.endpoint == ep) continue;
                try {
                    lc.sub = std::make_unique<Subscriber>(ep, std::vector<std::string>{it->first},
                                                          std::chrono::milliseconds(500));
                    lc.endpoint = ep;
                } catch (const Error& e) {
                    log()->debug("record: {} not reachable yet: {}", it->first, e.what());
                }
            }
        }

        try {
            PhysicalMask m = read_mask(cfg.mask_path);
            bool changed = !last_word || m.mask != *last_word;
            if (m.sequence != last_seq && (changed || now - last_mask_write >= cfg.mask_keepalive)) {
                auto rec = encode_mask(m);
                w.append(EpisodeRecord{kMaskChannelId, static_cast<std::int64_t>(m.timestamp_ns),
                                       std::vector<std::uint8_t>(rec.begin(), rec.end())});
                last_word = m.mask;
                last_seq = m.sequence;
                last_mask_write = now;
            }
        } catch (const Error& e) {
            if (e.code() == Errc::DiskFull || e.code() == Errc::IoError) throw;
        }

        std::vector<int> fds;
        for (auto& [topic, lc] : live) {
            if (!lc.sub) continue;
            bool gone = false;
            drain(*lc.sub, lc.id, w, sum, gone);
            if (gone) {
                lc.sub.reset();
                lc.endpoint.clear();
            } else {
                fds.push_back(lc.sub->fd());
            }
        }
        wait_any(fds, std::chrono::milliseconds(1));
    }
    sum.elapsed = mono_now() - start;
    w.close();
    fill_summary(sum, w);
    return sum;
}

}  // namespace

RecordSummary record_session(const RecordConfig& cfg, std::stop_token stop) {
    if (cfg.connect) return record_static(cfg, stop);
    if (!cfg.control_socket) throw Error(Errc::DaemonUnreachable, "neither a control socket nor an endpoint given");
    return record_daemon(cfg, stop);
}

ReplaySummary replay_episode(const ReplayConfig& cfg, std::stop_token stop) {
    Episode ep = read_episode(cfg.in);
    Publisher pub(cfg.bind, 256, OverflowPolicy::Block);
    if (cfg.on_ready) cfg.on_ready(pub.endpoint());
    if (cfg.wait_for_subscribers > 0 && !pub.wait_for_subscribers(cfg.wait_for_subscribers, cfg.subscriber_timeout)) {
        log()->warn("replay: only {} of {} subscribers connected", pub.subscriber_count(), cfg.wait_for_subscribers);
    }
    ReplaySummary sum;
    const MonoTime start = mono_now();
    std::optional<std::int64_t> ts0;
    std::int64_t max_offset = 0;
    for (const auto& r : ep.records) {
        if (stop.stop_requested()) break;
        if (!ts0) ts0 = r.timestamp_ns;
        if (cfg.speed > 0) {
            max_offset = std::max<std::int64_t>(max_offset, r.timestamp_ns - *ts0);
            auto target = start + Duration(static_cast<std::int64_t>(static_cast<double>(max_offset) / cfg.speed));
            std::this_thread::sleep_until(target);
        }
        const EpisodeChannel* c = ep.manifest.channel(r.channel_id);
        pub.publish(c->id == kMaskChannelId ? kMaskTopic : std::string_view(c->topic), r.timestamp_ns, r.payload);
        ++sum.published;
        if (r.channel_id == kMaskChannelId) ++sum.mask_published;
    }
    pub.flush(std::chrono::seconds(5));
    sum.elapsed = mono_now() - start;
    return sum;
}

}  // namespace rapid
