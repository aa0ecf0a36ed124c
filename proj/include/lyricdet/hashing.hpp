#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace lyricdet {

/// 64-bit FNV-1a. Stable across processes and platforms, unlike std::hash.
constexpr std::uint64_t fnv1a64(std::string_view data,
                                std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept {
  std::uint64_t h = basis;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Avalanche mixer (splitmix64 finalizer).
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

/// 16 lowercase hex digits.
std::string hex64(std::uint64_t value);

/// Fingerprint of an arbitrary configuration string, rendered as hex.
inline std::string fingerprint(std::string_view config) { return hex64(fnv1a64(config)); }

}  // namespace lyricdet
