// Byte-level helpers shared by checkpoint and report writers: base64 packing
// of little-endian f64 arrays and a stable 64-bit content hash.
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace lmot {

std::string base64_encode(const std::uint8_t* data, std::size_t len);
std::vector<std::uint8_t> base64_decode(std::string_view s);

/// Base64 of the values' little-endian IEEE-754 bytes.
std::string pack_f64(const std::vector<double>& values);
std::vector<double> unpack_f64(std::string_view b64);

std::uint64_t fnv1a64(std::string_view bytes);
/// 16 hex digits of fnv1a64.
std::string content_hash(std::string_view bytes);

}  // namespace lmot
