#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "gain/ops.hpp"
#include "gain/rng.hpp"

namespace gain::testing {

// Max elementwise |a-b| / max(|a|, |b|, floor).
inline double max_rel_error(std::span<const double> a, std::span<const double> b,
                            double floor = 1e-12) {
  double worst = a.size() == b.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    const double d = std::abs(a[i] - b[i]) /
                     std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, d);
  }
  return worst;
}

// Reduces a tensor to a scalar through fixed random weights so every output
// element contributes a distinct gradient.
inline Tensor weighted_sum(const Tensor& t, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(t, randn(t.shape(), rng)));
}

inline bool bit_identical(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
}

}  // namespace gain::testing
