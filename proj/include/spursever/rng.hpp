#pragma once

// Seed derivation and portable draws.
//
// Engines are std::mt19937_64, whose output sequence is fixed by the standard.
// The distribution adaptors in <random> are not, so uniform/normal/bounded
// draws are implemented here to keep datasets and shuffles bit-identical
// across standard libraries.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

namespace spursever::rng {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view text) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Independent substream seed for (root seed, stream name, counter).
constexpr std::uint64_t derive(std::uint64_t seed, std::string_view stream,
                               std::uint64_t counter = 0) noexcept {
  return splitmix64(splitmix64(seed ^ fnv1a(stream)) + splitmix64(counter + 1));
}

using Engine = std::mt19937_64;

inline Engine engine(std::uint64_t seed, std::string_view stream,
                     std::uint64_t counter = 0) {
  return Engine(derive(seed, stream, counter));
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Engine& e) {
  return static_cast<double>(e() >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller; consumes two engine outputs per call.
inline double normal(Engine& e) {
  const double u1 = 1.0 - uniform01(e);  // (0, 1]
  const double u2 = uniform01(e);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Unbiased integer in [0, bound) by rejection. bound must be > 0.
inline std::uint64_t below(Engine& e, std::uint64_t bound) {
  const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % bound);
  std::uint64_t v;
  do {
    v = e();
  } while (v >= limit);
  return v % bound;
}

template <class It>
void shuffle(It first, It last, Engine& e) {
  const auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    const auto j = below(e, i);
    std::iter_swap(first + (i - 1), first + j);
  }
}

}  // namespace spursever::rng
