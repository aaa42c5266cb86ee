// Shared helpers for the test suites: seeded randomness and tensor fills.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "nwrap/tensor.hpp"

namespace testutil {

inline std::mt19937_64 rng(uint64_t seed) { return std::mt19937_64(seed); }

inline double uniform(std::mt19937_64& g, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(g() >> 11) * 0x1.0p-53);
}

inline std::vector<double> random_values(std::mt19937_64& g, size_t n, double lo,
                                         double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = uniform(g, lo, hi);
  return v;
}

// values in [lo,hi] that keep away from zero, for checking kinked ops
inline std::vector<double> random_values_off_zero(std::mt19937_64& g, size_t n,
                                                  double lo, double hi,
                                                  double margin = 1e-3) {
  std::vector<double> v(n);
  for (auto& x : v) {
    do {
      x = uniform(g, lo, hi);
    } while (std::abs(x) < margin);
  }
  return v;
}

inline nwrap::Tensor random_tensor(std::mt19937_64& g, nwrap::Shape s, double lo = -2.0,
                                   double hi = 2.0) {
  return nwrap::Tensor(s, random_values(g, static_cast<size_t>(nwrap::shape_size(s)), lo, hi));
}

}  // namespace testutil
