#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace blastoseg {

/// SplitMix64 finalizer; used to derive independent seeds and counter-based noise.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return mix64(seed ^ mix64(stream));
}

constexpr std::uint64_t hash_name(std::string_view name) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char ch : name) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Uniform double in [0, 1) from the top 53 bits.
constexpr double unit_from_bits(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Uniform double in [0, 1) drawn from any 64-bit engine; stable across standard libraries.
template <typename Engine>
double uniform01(Engine& engine) {
  return unit_from_bits(static_cast<std::uint64_t>(engine()));
}

template <typename Engine>
double uniform(Engine& engine, double lo, double hi) {
  return lo + (hi - lo) * uniform01(engine);
}

/// Standard normal via Box-Muller (one draw per call).
template <typename Engine>
double normal01(Engine& engine) {
  double u1 = uniform01(engine);
  const double u2 = uniform01(engine);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace blastoseg
