#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace s2d4d {

/// splitmix64 finalizer; used to derive independent seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed of the named sub-stream of `root` (e.g. "gan-init", "s2d-batches").
constexpr std::uint64_t substream_seed(std::uint64_t root, std::string_view name) {
  return mix64(root ^ mix64(fnv1a(name)));
}

constexpr std::uint64_t substream_seed(std::uint64_t root, std::uint64_t index) {
  return mix64(root ^ mix64(index + 0x51ed27ULL));
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t root, std::string_view name) { return Rng(substream_seed(root, name)); }

}  // namespace s2d4d
