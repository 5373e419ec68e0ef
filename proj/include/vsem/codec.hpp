#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vsem {

using Bytes = std::vector<std::uint8_t>;

inline std::span<const std::uint8_t> as_bytes(std::string_view s) noexcept {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

/// Lowercase hex SHA-1 of the payload (40 chars).
std::string sha1_hex(std::span<const std::uint8_t> data);

std::array<std::uint8_t, 32> sha256(std::span<const std::uint8_t> data);

std::string base64_encode(std::span<const std::uint8_t> data);

/// Strict RFC 4648 decoding (padding required, no whitespace). nullopt on any
/// malformed input.
std::optional<Bytes> base64_decode(std::string_view text);

}  // namespace vsem
