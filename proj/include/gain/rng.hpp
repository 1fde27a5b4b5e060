#pragma once

#include <cstdint>

#include "gain/tensor.hpp"

namespace gain {

// xoshiro256** (Blackman & Vigna) seeded by expanding the 64-bit seed with
// SplitMix64. Normals use the Box-Muller transform on two uniform draws.
// Everything here is integer arithmetic plus std::log/sqrt/cos, so a given seed
// produces the same stream on every IEEE-754 platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();

  // Independent generator for a named sub-stream.
  Rng fork(std::uint64_t stream);

 private:
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

Tensor randn(const Shape& shape, Rng& rng, double stddev = 1.0,
             bool requires_grad = false);
Tensor rand_uniform(const Shape& shape, Rng& rng, double lo, double hi,
                    bool requires_grad = false);

}  // namespace gain
