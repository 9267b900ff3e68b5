// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fedforget/types.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fedforget {

/// Lowercase hex SHA-256 of raw bytes.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

/// Git-style content hash: SHA-256 over "blob <size>\0" followed by the content.
std::string content_checksum(std::string_view content);

/// Little-endian float64 byte image of a parameter vector.
std::vector<std::uint8_t> to_le_bytes(std::span<const double> values);
std::vector<double> from_le_bytes(std::span<const std::uint8_t> bytes);

/// First 16 hex digits of the SHA-256 of the little-endian parameter bytes.
std::string params_checksum(const FlatParams& params);

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws IntegrityError on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace fedforget
