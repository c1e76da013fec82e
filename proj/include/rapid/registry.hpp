#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rapid/error.hpp"

namespace rapid {

inline constexpr std::size_t kMaxDevices = 64;

struct DeviceIdentity {
    std::uint16_t vid = 0;
    std::uint16_t pid = 0;
    std::optional<std::string> serial;

    friend bool operator==(const DeviceIdentity&, const DeviceIdentity&) = default;
};

/// Parses "0x1234", "0X1234" or "1234" (case-insensitive hex). Throws Error{BadIdentity}.
std::uint16_t parse_hex_id(std::string_view text);

/// Lower-case, four digits, "0x" prefixed.
std::string format_hex_id(std::uint16_t id);

std::string to_string(const DeviceIdentity& id);

struct DeviceDescriptor {
    std::string name;
    DeviceIdentity identity;
    std::string on_attach;
    std::optional<std::string> on_detach;
    std::string topic;
    unsigned bit = 0;
    std::vector<std::size_t> shape{1};

    std::size_t element_count() const;

    friend bool operator==(const DeviceDescriptor&, const DeviceDescriptor&) = default;
};

/// Ordered catalog of registered modules. Declaration order is bit order for loaded files;
/// descriptor files may carry explicit bits, which must still be unique.
class Registry {
public:
    Registry() = default;

    /// Appends a descriptor, enforcing unique name/topic/bit and the 64-device ceiling.
    void add(DeviceDescriptor descriptor);

    const std::vector<DeviceDescriptor>& descriptors() const noexcept { return descriptors_; }
    std::size_t size() const noexcept { return descriptors_.size(); }
    bool empty() const noexcept { return descriptors_.empty(); }
    std::uint64_t version_stamp() const noexcept { return version_stamp_; }

    const DeviceDescriptor* find(std::string_view name) const;
    const DeviceDescriptor* by_bit(unsigned bit) const;
    const DeviceDescriptor* by_topic(std::string_view topic) const;

    /// Bits that are assigned, as a word.
    std::uint64_t assigned_bits() const noexcept;

private:
    std::vector<DeviceDescriptor> descriptors_;
    std::uint64_t version_stamp_ = 0;
};

/// Parses registration text (`[device.<name>]` tables). Throws Error with the first failing
/// finding's code: ParseError, DuplicateName, DuplicateTopic, TooManyDevices or BadIdentity.
Registry load_registry(std::string_view config_text);

/// Registration text that load_registry maps back to the same descriptors.
std::string serialize_registry(const Registry& registry);

/// Resolved-registry descriptor file (carries explicit bits).
nlohmann::json registry_to_json(const Registry& registry);
/// Throws Error{ParseError | DuplicateName | DuplicateTopic | DuplicateBit | BadIdentity | ...}.
Registry registry_from_json(const nlohmann::json& doc);

/// Names of descriptors currently bound to a live device.
using Occupancy = std::set<std::string>;

/// Two-pass lookup: exact vid+pid+serial first, then a serial-less model entry with matching
/// vid+pid that is not already occupied. Returns nullptr when neither pass matches.
const DeviceDescriptor* match_device(const DeviceIdentity& identity, const Registry& registry,
                                     const Occupancy& occupied = {});

/// udev rule text, one line per descriptor, creating /dev/rapid/<name> symlinks.
std::string generate_hotplug_rules(const Registry& registry);

enum class Severity { Error, Warning };

struct Finding {
    Severity severity = Severity::Error;
    std::size_t line = 0;  // 1-based; 0 when not tied to a line
    Errc code = Errc::ParseError;
    std::string message;
};

struct ValidationReport {
    std::vector<Finding> findings;

    bool has_errors() const;
    std::size_t error_count() const;
    std::string to_text() const;
};

/// Never throws. Error findings are non-empty exactly when load_registry would throw.
ValidationReport validate_registration(std::string_view config_text);

}  // namespace rapid
