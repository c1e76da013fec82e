#include "rapid/registry.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>
#include <unordered_set>
#include <variant>

namespace rapid {

namespace {

// ---- registration text: the TOML subset used by registry files ----------------------------

using IntList = std::vector<std::int64_t>;
using Value = std::variant<std::string, std::int64_t, bool, IntList>;

struct Entry {
    std::string key;
    Value value;
    std::size_t line = 0;
};

struct Table {
    std::string name;  // the part after "device."
    std::size_t line = 0;
    std::vector<Entry> entries;
};

struct ParseResult {
    std::vector<Table> tables;
    std::vector<Finding> findings;
};

bool is_bare_key_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

class LineParser {
public:
    LineParser(std::string_view text, std::size_t line) : text_(text), line_(line) {}

    void skip_ws() {
        while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
    }

    bool at_end_or_comment() {
        skip_ws();
        return pos_ >= text_.size() || text_[pos_] == '#';
    }

    std::string bare_key() {
        std::size_t start = pos_;
        while (pos_ < text_.size() && is_bare_key_char(text_[pos_])) ++pos_;
        if (start == pos_) fail("expected a key");
        return std::string(text_.substr(start, pos_ - start));
    }

    void expect(char c) {
        skip_ws();
        if (pos_ >= text_.size() || text_[pos_] != c) fail(std::string("expected '") + c + "'");
        ++pos_;
    }

    Value value() {
        skip_ws();
        if (pos_ >= text_.size()) fail("missing value");
        char c = text_[pos_];
        if (c == '"') return basic_string();
        if (c == '\'') return literal_string();
        if (c == '[') return int_list();
        if (text_.substr(pos_, 4) == "true") { pos_ += 4; return true; }
        if (text_.substr(pos_, 5) == "false") { pos_ += 5; return false; }
        return integer();
    }

    [[noreturn]] void fail(const std::string& msg) {
        throw Finding{Severity::Error, line_, Errc::ParseError, msg};
    }

private:
    std::string basic_string() {
        ++pos_;
        std::string out;
        while (pos_ < text_.size()) {
            char c = text_[pos_++];
            if (c == '"') return out;
            if (c == '\\') {
                if (pos_ >= text_.size()) break;
                char e = text_[pos_++];
                switch (e) {
                    case '"': out += '"'; break;
                    case '\\': out += '\\'; break;
                    case 'n': out += '\n'; break;
                    case 't': out += '\t'; break;
                    default: fail(std::string("unsupported escape \\") + e);
                }
                continue;
            }
            out += c;
        }
        fail("unterminated string");
    }

    std::string literal_string() {
        ++pos_;
        auto end = text_.find('\'', pos_);
        if (end == std::string_view::npos) fail("unterminated string");
        std::string out(text_.substr(pos_, end - pos_));
        pos_ = end + 1;
        return out;
    }

    std::int64_t integer() {
        std::size_t start = pos_;
        if (pos_ < text_.size() && (text_[pos_] == '-' || text_[pos_] == '+')) ++pos_;
        while (pos_ < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) ++pos_;
        std::string digits;
        for (char c : text_.substr(start, pos_ - start)) {
            if (c != '_' && c != '+') digits += c;
        }
        std::int64_t v = 0;
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
        if (digits.empty() || ec != std::errc() || ptr != digits.data() + digits.size()) {
            fail("unsupported value");
        }
        return v;
    }

    IntList int_list() {
        ++pos_;
        IntList out;
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == ']') { ++pos_; return out; }
        for (;;) {
            skip_ws();
            out.push_back(integer());
            skip_ws();
            if (pos_ >= text_.size()) fail("unterminated list");
            if (text_[pos_] == ',') {
                ++pos_;
                skip_ws();
                if (pos_ < text_.size() && text_[pos_] == ']') { ++pos_; return out; }
                continue;
            }
            if (text_[pos_] == ']') { ++pos_; return out; }
            fail("expected ',' or ']' in list");
        }
    }

    std::string_view text_;
    std::size_t line_;
    std::size_t pos_ = 0;
};

ParseResult parse_text(std::string_view text) {
    ParseResult result;
    std::size_t line_no = 0;
    std::size_t start = 0;
    Table* current = nullptr;
    bool current_valid = false;
    std::unordered_set<std::string> keys_in_table;

    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view raw = text.substr(start, end - start);
        if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
        ++line_no;
        start = end + 1;

        std::string_view line = trim(raw);
        if (line.empty() || line.front() == '#') {
            if (end == text.size()) break;
            continue;
        }
        try {
            LineParser p(line, line_no);
            if (line.front() == '[') {
                p.expect('[');
                p.skip_ws();
                std::string head = p.bare_key();
                if (head != "device") p.fail("unknown table '" + head + "' (expected device.<name>)");
                p.expect('.');
                std::string name = p.bare_key();
                p.expect(']');
                if (!p.at_end_or_comment()) p.fail("trailing characters after table header");
                result.tables.push_back(Table{name, line_no, {}});
                current = &result.tables.back();
                current_valid = true;
                keys_in_table.clear();
            } else {
                std::string key = p.bare_key();
                p.expect('=');
                Value v = p.value();
                if (!p.at_end_or_comment()) p.fail("trailing characters after value");
                if (current == nullptr) p.fail("key '" + key + "' outside of a [device.<name>] table");
                if (!keys_in_table.insert(key).second) p.fail("duplicate key '" + key + "'");
                if (current_valid) current->entries.push_back(Entry{key, std::move(v), line_no});
            }
        } catch (const Finding& f) {
            result.findings.push_back(f);
        }
        if (end == text.size()) break;
    }
    return result;
}

// ---- descriptor construction -----------------------------------------------------------

struct BuildResult {
    Registry registry;
    std::vector<Finding> findings;
};

const std::string* as_string(const Value& v) { return std::get_if<std::string>(&v); }

BuildResult build(const ParseResult& parsed) {
    BuildResult out;
    out.findings = parsed.findings;
    std::unordered_set<std::string> names;
    std::unordered_set<std::string> topics;
    std::vector<std::pair<DeviceIdentity, std::string>> exact_ids;
    unsigned next_bit = 0;
    bool overflow_reported = false;

    auto error = [&](std::size_t line, Errc code, std::string msg) {
        out.findings.push_back(Finding{Severity::Error, line, code, std::move(msg)});
    };

    for (const Table& t : parsed.tables) {
        bool ok = true;
        if (!names.insert(t.name).second) {
            error(t.line, Errc::DuplicateName, "device '" + t.name + "' declared more than once");
            ok = false;
        }
        if (names.size() > kMaxDevices && !overflow_reported) {
            error(t.line, Errc::TooManyDevices,
                  "more than " + std::to_string(kMaxDevices) + " devices (64-bit mask)");
            overflow_reported = true;
            ok = false;
        }

        DeviceDescriptor d;
        d.name = t.name;
        bool have_vid = false, have_pid = false, have_node = false, have_topic = false;
        auto want_string = [&](const Entry& e) -> const std::string* {
            const std::string* s = as_string(e.value);
            if (s == nullptr) {
                error(e.line, Errc::ParseError, "key '" + e.key + "' must be a string");
                ok = false;
            }
            return s;
        };

        for (const Entry& e : t.entries) {
            if (e.key == "vid" || e.key == "pid") {
                const std::string* s = want_string(e);
                if (s == nullptr) continue;
                try {
                    std::uint16_t id = parse_hex_id(*s);
                    (e.key == "vid" ? d.identity.vid : d.identity.pid) = id;
                    (e.key == "vid" ? have_vid : have_pid) = true;
                } catch (const Error& err) {
                    error(e.line, Errc::BadIdentity, "device '" + t.name + "': " + err.what());
                    ok = false;
                    (e.key == "vid" ? have_vid : have_pid) = true;  // present, just unusable
                }
            } else if (e.key == "serial") {
                const std::string* s = want_string(e);
                if (s == nullptr) continue;
                if (s->empty()) {
                    error(e.line, Errc::BadIdentity, "serial must not be empty (omit the key instead)");
                    ok = false;
                } else {
                    d.identity.serial = *s;
                }
            } else if (e.key == "node") {
                const std::string* s = want_string(e);
                if (s == nullptr) continue;
                have_node = true;
                if (trim(*s).empty()) {
                    error(e.line, Errc::ParseError, "node command must not be empty");
                    ok = false;
                }
                d.on_attach = *s;
            } else if (e.key == "on_detach") {
                const std::string* s = want_string(e);
                if (s != nullptr && !s->empty()) d.on_detach = *s;
            } else if (e.key == "topic") {
                const std::string* s = want_string(e);
                if (s == nullptr) continue;
                have_topic = true;
                if (s->empty()) {
                    error(e.line, Errc::ParseError, "topic must not be empty");
                    ok = false;
                } else if (!topics.insert(*s).second) {
                    error(e.line, Errc::DuplicateTopic, "topic '" + *s + "' already used");
                    ok = false;
                }
                d.topic = *s;
            } else if (e.key == "shape") {
                const auto* list = std::get_if<IntList>(&e.value);
                if (list == nullptr || list->empty()) {
                    error(e.line, Errc::ParseError, "shape must be a non-empty integer list");
                    ok = false;
                    continue;
                }
                d.shape.clear();
                for (auto dim : *list) {
                    if (dim <= 0) {
                        error(e.line, Errc::ParseError, "shape dimensions must be positive");
                        ok = false;
                        break;
                    }
                    d.shape.push_back(static_cast<std::size_t>(dim));
                }
            } else {
                error(e.line, Errc::ParseError, "unknown key '" + e.key + "'");
                ok = false;
            }
        }
        auto missing = [&](bool have, const char* key) {
            if (!have) {
                error(t.line, Errc::ParseError, "device '" + t.name + "' is missing key '" + key + "'");
                ok = false;
            }
        };
        missing(have_vid, "vid");
        missing(have_pid, "pid");
        missing(have_node, "node");
        missing(have_topic, "topic");

        if (!ok) continue;
        if (d.identity.serial) {
            for (const auto& [id, other] : exact_ids) {
                if (id == d.identity) {
                    out.findings.push_back(Finding{Severity::Warning, t.line, Errc::DuplicateName,
                                                   "device '" + t.name + "' has the same vid/pid/serial as '" +
                                                       other + "' and can never be matched"});
                }
            }
            exact_ids.emplace_back(d.identity, d.name);
        }
        d.bit = next_bit++;
        out.registry.add(std::move(d));
    }
    return out;
}

std::string quote(std::string_view s) {
    std::string out = "\"";
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            default: out += c;
        }
    }
    out += '"';
    return out;
}

}  // namespace

std::uint16_t parse_hex_id(std::string_view text) {
    std::string_view s = trim(text);
    if (s.size() >= 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) s.remove_prefix(2);
    if (s.empty() || s.size() > 4) {
        throw Error(Errc::BadIdentity, "not a 16-bit hex id: '" + std::string(text) + "'");
    }
    unsigned value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value, 16);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw Error(Errc::BadIdentity, "not a 16-bit hex id: '" + std::string(text) + "'");
    }
    return static_cast<std::uint16_t>(value);
}

std::string format_hex_id(std::uint16_t id) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out = "0x";
    for (int shift = 12; shift >= 0; shift -= 4) out += digits[(id >> shift) & 0xF];
    return out;
}

std::string to_string(const DeviceIdentity& id) {
    std::string out = format_hex_id(id.vid) + ":" + format_hex_id(id.pid);
    if (id.serial) out += " serial=" + *id.serial;
    return out;
}

std::size_t DeviceDescriptor::element_count() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

void Registry::add(DeviceDescriptor d) {
    if (descriptors_.size() >= kMaxDevices) {
        throw Error(Errc::TooManyDevices, "registry holds at most 64 devices");
    }
    if (d.bit >= kMaxDevices) throw Error(Errc::InvariantViolation, "bit out of range for '" + d.name + "'");
    if (d.name.empty()) throw Error(Errc::ParseError, "device name must not be empty");
    if (d.topic.empty()) throw Error(Errc::ParseError, "topic must not be empty for '" + d.name + "'");
    if (d.shape.empty() || d.element_count() == 0) {
        throw Error(Errc::ParseError, "shape of '" + d.name + "' must have positive dimensions");
    }
    for (const auto& other : descriptors_) {
        if (other.name == d.name) throw Error(Errc::DuplicateName, "device '" + d.name + "' declared twice");
        if (other.topic == d.topic) throw Error(Errc::DuplicateTopic, "topic '" + d.topic + "' already used");
        if (other.bit == d.bit) {
            throw Error(Errc::DuplicateBit, "bit " + std::to_string(d.bit) + " used by '" + other.name +
                                                "' and '" + d.name + "'");
        }
    }
    descriptors_.push_back(std::move(d));
    ++version_stamp_;
}

const DeviceDescriptor* Registry::find(std::string_view name) const {
    for (const auto& d : descriptors_) {
        if (d.name == name) return &d;
    }
    return nullptr;
}

const DeviceDescriptor* Registry::by_bit(unsigned bit) const {
    for (const auto& d : descriptors_) {
        if (d.bit == bit) return &d;
    }
    return nullptr;
}

const DeviceDescriptor* Registry::by_topic(std::string_view topic) const {
    for (const auto& d : descriptors_) {
        if (d.topic == topic) return &d;
    }
    return nullptr;
}

std::uint64_t Registry::assigned_bits() const noexcept {
    std::uint64_t word = 0;
    for (const auto& d : descriptors_) word |= std::uint64_t{1} << d.bit;
    return word;
}

Registry load_registry(std::string_view config_text) {
    BuildResult built = build(parse_text(config_text));
    for (const Finding& f : built.findings) {
        if (f.severity == Severity::Error) {
            throw Error(f.code, "line " + std::to_string(f.line) + ": " + f.message);
        }
    }
    return std::move(built.registry);
}

ValidationReport validate_registration(std::string_view config_text) {
    ValidationReport report;
    report.findings = build(parse_text(config_text)).findings;
    std::stable_sort(report.findings.begin(), report.findings.end(),
                     [](const Finding& a, const Finding& b) { return a.line < b.line; });
    return report;
}

bool ValidationReport::has_errors() const { return error_count() > 0; }

std::size_t ValidationReport::error_count() const {
    return static_cast<std::size_t>(std::count_if(findings.begin(), findings.end(), [](const Finding& f) {
        return f.severity == Severity::Error;
    }));
}

std::string ValidationReport::to_text() const {
    std::ostringstream os;
    for (const Finding& f : findings) {
        os << (f.severity == Severity::Error ? "error" : "warning") << ": line " << f.line << ": "
           << to_string(f.code) << ": " << f.message << '\n';
    }
    return os.str();
}

std::string serialize_registry(const Registry& registry) {
    std::ostringstream os;
    bool first = true;
    for (const auto& d : registry.descriptors()) {
        if (!first) os << '\n';
        first = false;
        os << "[device." << d.name << "]\n";
        os << "vid = " << quote(format_hex_id(d.identity.vid)) << '\n';
        os << "pid = " << quote(format_hex_id(d.identity.pid)) << '\n';
        if (d.identity.serial) os << "serial = " << quote(*d.identity.serial) << '\n';
        os << "node = " << quote(d.on_attach) << '\n';
        if (d.on_detach) os << "on_detach = " << quote(*d.on_detach) << '\n';
        os << "topic = " << quote(d.topic) << '\n';
        os << "shape = [";
        for (std::size_t i = 0; i < d.shape.size(); ++i) os << (i ? ", " : "") << d.shape[i];
        os << "]\n";
    }
    return os.str();
}

nlohmann::json registry_to_json(const Registry& registry) {
    nlohmann::ordered_json devices = nlohmann::ordered_json::array();
    for (const auto& d : registry.descriptors()) {
        nlohmann::ordered_json j;
        j["name"] = d.name;
        j["bit"] = d.bit;
        j["vid"] = format_hex_id(d.identity.vid);
        j["pid"] = format_hex_id(d.identity.pid);
        j["serial"] = d.identity.serial ? nlohmann::ordered_json(*d.identity.serial) : nlohmann::ordered_json();
        j["on_attach"] = d.on_attach;
        j["on_detach"] = d.on_detach ? nlohmann::ordered_json(*d.on_detach) : nlohmann::ordered_json();
        j["topic"] = d.topic;
        j["shape"] = d.shape;
        j["symlink"] = "/dev/rapid/" + d.name;
        devices.push_back(std::move(j));
    }
    nlohmann::ordered_json doc;
    doc["format_version"] = 1;
    doc["device_count"] = registry.size();
    doc["devices"] = std::move(devices);
    return nlohmann::json::parse(doc.dump());
}

Registry registry_from_json(const nlohmann::json& doc) {
    Registry registry;
    try {
        if (!doc.contains("devices") || !doc["devices"].is_array()) {
            throw Error(Errc::ParseError, "descriptor file lacks a 'devices' array");
        }
        if (doc["devices"].size() > kMaxDevices) throw Error(Errc::TooManyDevices, "more than 64 devices");
        for (const auto& j : doc["devices"]) {
            DeviceDescriptor d;
            d.name = j.at("name").get<std::string>();
            d.bit = j.at("bit").get<unsigned>();
            d.identity.vid = parse_hex_id(j.at("vid").get<std::string>());
            d.identity.pid = parse_hex_id(j.at("pid").get<std::string>());
            if (j.contains("serial") && !j["serial"].is_null()) d.identity.serial = j["serial"].get<std::string>();
            d.on_attach = j.at("on_attach").get<std::string>();
            if (j.contains("on_detach") && !j["on_detach"].is_null()) d.on_detach = j["on_detach"].get<std::string>();
            d.topic = j.at("topic").get<std::string>();
            if (j.contains("shape")) d.shape = j["shape"].get<std::vector<std::size_t>>();
            registry.add(std::move(d));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, std::string("descriptor file: ") + e.what());
    }
    return registry;
}

const DeviceDescriptor* match_device(const DeviceIdentity& identity, const Registry& registry,
                                     const Occupancy& occupied) {
    if (identity.serial) {
        for (const auto& d : registry.descriptors()) {
            if (d.identity.serial && d.identity.vid == identity.vid && d.identity.pid == identity.pid &&
                *d.identity.serial == *identity.serial) {
                return &d;
            }
        }
    }
    for (const auto& d : registry.descriptors()) {
        if (!d.identity.serial && d.identity.vid == identity.vid && d.identity.pid == identity.pid &&
            occupied.count(d.name) == 0) {
            return &d;
        }
    }
    return nullptr;
}

std::string generate_hotplug_rules(const Registry& registry) {
    auto bare_hex = [](std::uint16_t id) { return format_hex_id(id).substr(2); };
    std::ostringstream os;
    os << "# rapid device rules, install as /etc/udev/rules.d/99-rapid.rules\n";
    os << "# generated by `rapidctl register`; edit the registration file instead\n";
    for (const auto& d : registry.descriptors()) {
        os << "SUBSYSTEM==\"usb\", ATTRS{idVendor}==\"" << bare_hex(d.identity.vid) << "\", ATTRS{idProduct}==\""
           << bare_hex(d.identity.pid) << "\", ";
        if (d.identity.serial) os << "ATTRS{serial}==" << quote(*d.identity.serial) << ", ";
        os << "SYMLINK+=\"rapid/" << d.name << "\"\n";
    }
    return os.str();
}

}  // namespace rapid
