#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "gain/tensor.hpp"

namespace gain {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor);
  // the floor keeps near-zero gradients from amplifying round-off.
  double denominator_floor = 1e-6;
  // Total number of input elements to probe, sampled without replacement
  // across all inputs. Negative means every element.
  std::int64_t sample_count = -1;
  std::uint64_t sample_seed = 0;
};

struct GradCheckEntry {
  std::size_t input = 0;
  std::int64_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  bool passed = true;
};

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

// Compares reverse-mode gradients of `fn` with central finite differences.
// Inputs must be leaves; they are perturbed in place and restored.
GradCheckReport grad_check(const ScalarFn& fn, const std::vector<Tensor>& inputs,
                           const GradCheckOptions& options = {});

}  // namespace gain
