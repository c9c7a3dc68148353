#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace rbfvae {

inline constexpr std::uint64_t fnv_offset = 0xcbf29ce484222325ULL;

/// 64-bit FNV-1a. Used for config hashes and parameter fingerprints, not security.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t state = fnv_offset) noexcept;
std::uint64_t fnv1a(std::span<const double> values, std::uint64_t state = fnv_offset) noexcept;

std::string to_hex(std::uint64_t value);

}  // namespace rbfvae
