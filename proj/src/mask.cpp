#include "rapid/mask.hpp"

#include <algorithm>
#include <bit>
#include <ctime>

#include <nlohmann/json.hpp>

namespace rapid {

namespace {

template <typename T>
void put_le(MaskRecord& out, std::size_t offset, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out[offset + i] = static_cast<std::uint8_t>(static_cast<std::uint64_t>(value) >> (8 * i));
    }
}

template <typename T>
T get_le(std::span<const std::uint8_t> in, std::size_t offset) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(in[offset + i]) << (8 * i);
    return static_cast<T>(v);
}

}  // namespace

unsigned PhysicalMask::online_count() const noexcept {
    return static_cast<unsigned>(std::popcount(mask & ~unassigned_bits(device_count)));
}

std::uint64_t unassigned_bits(unsigned device_count) noexcept {
    if (device_count >= 64) return 0;
    return ~std::uint64_t{0} << device_count;
}

void check_invariants(const PhysicalMask& m) {
    if (m.magic != kMaskMagic) throw Error(Errc::InvariantViolation, "magic must be 0x52415044");
    if (m.version != kMaskVersion) throw Error(Errc::InvariantViolation, "version must be 1");
    if (m.device_count > kMaxDevices) throw Error(Errc::InvariantViolation, "device_count above 64");
    if (m.padding != 0) throw Error(Errc::InvariantViolation, "padding must be zero");
    if ((m.mask & unassigned_bits(m.device_count)) != 0) {
        throw Error(Errc::InvariantViolation, "mask has bits set at or above device_count");
    }
}

MaskRecord encode_mask(const PhysicalMask& m) {
    check_invariants(m);
    MaskRecord out{};
    put_le(out, mask_offset::magic, m.magic);
    put_le(out, mask_offset::version, m.version);
    put_le(out, mask_offset::device_count, m.device_count);
    put_le(out, mask_offset::padding, std::uint16_t{0});
    put_le(out, mask_offset::mask, m.mask);
    put_le(out, mask_offset::timestamp_ns, m.timestamp_ns);
    put_le(out, mask_offset::sequence, m.sequence);
    return out;
}

PhysicalMask decode_mask(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kMaskRecordSize) {
        throw Error(Errc::ShortBuffer, "mask record needs 32 bytes, got " + std::to_string(bytes.size()));
    }
    PhysicalMask m;
    m.magic = get_le<std::uint32_t>(bytes, mask_offset::magic);
    if (m.magic != kMaskMagic) throw Error(Errc::BadMagic, "mask record magic mismatch");
    m.version = get_le<std::uint8_t>(bytes, mask_offset::version);
    if (m.version != kMaskVersion) {
        throw Error(Errc::UnsupportedVersion, "mask record version " + std::to_string(m.version));
    }
    m.device_count = get_le<std::uint8_t>(bytes, mask_offset::device_count);
    m.padding = get_le<std::uint16_t>(bytes, mask_offset::padding);
    m.mask = get_le<std::uint64_t>(bytes, mask_offset::mask);
    m.timestamp_ns = get_le<std::uint64_t>(bytes, mask_offset::timestamp_ns);
    m.sequence = get_le<std::uint64_t>(bytes, mask_offset::sequence);
    return m;
}

unsigned mask_binary_width(unsigned device_count) noexcept {
    if (device_count <= 8) return 8;
    return (device_count + 7) / 8 * 8;
}

std::string format_mask_hex(std::uint64_t word, unsigned device_count) {
    static constexpr char digits[] = "0123456789abcdef";
    unsigned width = mask_binary_width(device_count) / 4;
    std::string out(width, '0');
    for (unsigned i = 0; i < width; ++i) out[width - 1 - i] = digits[(word >> (4 * i)) & 0xF];
    return "0x" + out;
}

std::string format_mask_binary(std::uint64_t word, unsigned device_count) {
    unsigned width = mask_binary_width(device_count);
    std::string out(width, '0');
    for (unsigned j = 0; j < width; ++j) {
        if ((word >> j) & 1u) out[width - 1 - j] = '1';
    }
    return out;
}

std::string iso8601_utc(std::chrono::system_clock::time_point t) {
    std::time_t secs = std::chrono::system_clock::to_time_t(t);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string render_debug(const PhysicalMask& m, const Registry& registry, const std::string& wall_clock) {
    if (registry.size() != m.device_count) {
        throw Error(Errc::RegistryMismatch, "mask reports " + std::to_string(m.device_count) +
                                                " devices, registry has " + std::to_string(registry.size()));
    }
    std::vector<const DeviceDescriptor*> by_bit;
    for (const auto& d : registry.descriptors()) by_bit.push_back(&d);
    std::sort(by_bit.begin(), by_bit.end(), [](auto* a, auto* b) { return a->bit < b->bit; });

    nlohmann::ordered_json doc;
    doc["timestamp"] = wall_clock;
    doc["device_count"] = m.device_count;
    doc["online_count"] = m.online_count();
    doc["mask"] = format_mask_hex(m.mask, m.device_count);
    doc["mask_binary"] = format_mask_binary(m.mask, m.device_count);
    doc["sequence"] = m.sequence;
    doc["devices"] = nlohmann::ordered_json::array();
    for (const auto* d : by_bit) {
        nlohmann::ordered_json dev;
        dev["name"] = d->name;
        dev["bit"] = d->bit;
        dev["online"] = m.online(d->bit);
        doc["devices"].push_back(std::move(dev));
    }
    return doc.dump(2) + "\n";
}

}  // namespace rapid
