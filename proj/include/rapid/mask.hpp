#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include "rapid/registry.hpp"

namespace rapid {

inline constexpr std::uint32_t kMaskMagic = 0x52415044;  // "RAPD"
inline constexpr std::uint8_t kMaskVersion = 1;
inline constexpr std::size_t kMaskRecordSize = 32;

// Field offsets of the shared record. All multi-byte fields are little-endian.
namespace mask_offset {
inline constexpr std::size_t magic = 0;
inline constexpr std::size_t version = 4;
inline constexpr std::size_t device_count = 5;
inline constexpr std::size_t padding = 6;
inline constexpr std::size_t mask = 8;
inline constexpr std::size_t timestamp_ns = 16;
inline constexpr std::size_t sequence = 24;
}  // namespace mask_offset

using MaskRecord = std::array<std::uint8_t, kMaskRecordSize>;

struct PhysicalMask {
    std::uint32_t magic = kMaskMagic;
    std::uint8_t version = kMaskVersion;
    std::uint8_t device_count = 0;
    std::uint16_t padding = 0;
    std::uint64_t mask = 0;
    std::uint64_t timestamp_ns = 0;
    std::uint64_t sequence = 0;

    bool online(unsigned bit) const noexcept { return bit < 64 && ((mask >> bit) & 1u) != 0; }
    unsigned online_count() const noexcept;

    friend bool operator==(const PhysicalMask&, const PhysicalMask&) = default;
};

/// Bits at or above device_count, as a word.
std::uint64_t unassigned_bits(unsigned device_count) noexcept;

/// Throws Error{InvariantViolation} when the value breaks the record invariants.
void check_invariants(const PhysicalMask& m);

MaskRecord encode_mask(const PhysicalMask& m);

/// Throws Error{ShortBuffer | BadMagic | UnsupportedVersion}.
PhysicalMask decode_mask(std::span<const std::uint8_t> bytes);

/// Digits in the debug view's binary rendering: 8 for up to 8 devices, else rounded up to
/// a multiple of 8.
unsigned mask_binary_width(unsigned device_count) noexcept;

std::string format_mask_hex(std::uint64_t word, unsigned device_count);
std::string format_mask_binary(std::uint64_t word, unsigned device_count);

/// "2026-02-05T10:30:00Z"
std::string iso8601_utc(std::chrono::system_clock::time_point t);

/// Debug JSON view of a mask. Throws Error{RegistryMismatch} when the registry size does not
/// match device_count.
std::string render_debug(const PhysicalMask& m, const Registry& registry, const std::string& wall_clock);

}  // namespace rapid
