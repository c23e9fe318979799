#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

namespace usermodel::util {

// Distribution helpers with fixed formulas. The standard distributions are
// implementation-defined, which would make seeded artifacts depend on the
// standard library build.

inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// [0, bound)
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t bound) {
  return static_cast<std::uint64_t>(uniform01(rng) * static_cast<double>(bound));
}

// Box-Muller.
inline double normal(std::mt19937_64& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Fisher-Yates with uniform_index.
template <typename It>
void shuffle(It first, It last, std::mt19937_64& rng) {
  const auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    const auto j = uniform_index(rng, i);
    std::iter_swap(first + (i - 1), first + j);
  }
}

}  // namespace usermodel::util
