#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace synthqa {

/// Lowercase hex SHA-256 of the input bytes.
std::string sha256_hex(std::string_view data);

/// SHA-256 of a file's contents; throws IoError when unreadable.
std::string file_sha256(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis = 0xcbf29ce484222325ULL);

std::uint64_t splitmix64(std::uint64_t x);

/// Mixes a base seed with a stream of integers into a new independent seed.
template <typename... Ts>
std::uint64_t derive_seed(std::uint64_t base, Ts... parts) {
  std::uint64_t s = splitmix64(base);
  ((s = splitmix64(s ^ static_cast<std::uint64_t>(parts))), ...);
  return s;
}

}  // namespace synthqa
