// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace medlite {

inline constexpr std::uint64_t kFnvOffset64 = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime64 = 0x100000001b3ULL;

constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = kFnvOffset64) noexcept {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime64;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t seed = kFnvOffset64) noexcept {
  std::uint64_t h = seed;
  for (std::uint8_t c : bytes) {
    h ^= c;
    h *= kFnvPrime64;
  }
  return h;
}

constexpr std::uint32_t fnv1a32(std::string_view bytes) noexcept {
  std::uint32_t h = 0x811c9dc5U;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x01000193U;
  }
  return h;
}

// splitmix64 finalizer; spreads a 64-bit key over all output bits.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace medlite
