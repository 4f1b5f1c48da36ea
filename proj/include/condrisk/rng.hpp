#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>

namespace condrisk::rng {

// std::uniform_real_distribution and std::normal_distribution are
// implementation-defined; these helpers pin the exact bit stream so seeded
// runs reproduce byte-for-byte across standard libraries.

/// Canonical uniform in [0, 1) from the top 53 bits of the engine output.
inline double uniform01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& gen, double lo, double hi) {
  return lo + (hi - lo) * uniform01(gen);
}

/// Standard normal via Box-Muller.
inline double normal(std::mt19937_64& gen) {
  double u1 = uniform01(gen);
  while (u1 <= 0.0) u1 = uniform01(gen);
  const double u2 = uniform01(gen);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.28318530717958647692 * u2);
}

/// Uniform index in [0, n).
inline std::size_t index(std::mt19937_64& gen, std::size_t n) {
  std::size_t i = static_cast<std::size_t>(uniform01(gen) * static_cast<double>(n));
  return i < n ? i : n - 1;
}

}  // namespace condrisk::rng
