#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace tracer {

/// Lower-case hex SHA-256 digest.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& file);

/// 64-bit FNV-1a; a stable string hash for deriving per-item seeds.
constexpr std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace tracer
