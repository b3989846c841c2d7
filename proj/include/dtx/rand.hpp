// rand.hpp -- small deterministic sampling helpers over std::mt19937_64.
// Distribution classes from <random> are implementation-defined, so anything
// that feeds reproducible runs goes through these instead.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace dtx {

inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);  // 2^-53
}

// Uniform integer in [0, n).
inline int uniform_int(std::mt19937_64& rng, int n) {
  return static_cast<int>(rng() % static_cast<std::uint64_t>(n));
}

// Box-Muller; the spare draw is discarded to keep the stream stateless.
inline double normal01(std::mt19937_64& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace dtx
