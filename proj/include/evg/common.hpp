#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace evg {

inline constexpr double kPi = 3.14159265358979323846;

// Bad inputs: malformed files, invalid configs, violated preconditions on
// user-supplied data. The CLI maps these to exit code 2.
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numeric breakdown at runtime (non-finite loss, diverging scan). Exit code 3.
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// mt19937_64 output is pinned by the standard. The distributions below are
// hand-rolled because std::*_distribution is implementation-defined, which
// would break same-seed reproducibility across toolchains.
using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Independent per-item stream derived from (seed, a, b).
inline Rng make_rng(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0) {
  return Rng(splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b));
}

// [0, 1) with 53 random bits.
inline double uniform01(Rng& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& g, double lo, double hi) {
  return lo + (hi - lo) * uniform01(g);
}

inline double normal01(Rng& g) {
  // Box-Muller, one draw per call so the stream position stays predictable.
  double u1 = uniform01(g);
  double u2 = uniform01(g);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

inline std::uint64_t uniform_below(Rng& g, std::uint64_t n) {
  return n ? g() % n : 0;  // modulo bias irrelevant at these ranges
}

// Exponential-gap sampler; O(lambda) but free of the underflow that kills
// the multiplicative Knuth method for large rates.
inline std::size_t poisson(Rng& g, double lambda) {
  if (lambda <= 0.0) return 0;
  std::size_t k = 0;
  double acc = 0.0;
  for (;;) {
    acc += -std::log(1.0 - uniform01(g));
    if (acc > lambda) return k;
    ++k;
  }
}

// Bounds the OpenMP thread pool. n <= 0 leaves the runtime default.
void set_thread_limit(int n);
int max_threads();

}  // namespace evg
