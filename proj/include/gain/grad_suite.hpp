#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace gain {

struct GradSuiteEntry {
  std::string name;
  std::size_t checked = 0;  // number of probed elements
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct GradSuiteResult {
  std::vector<GradSuiteEntry> entries;
  double seconds = 0.0;
  bool passed() const;
};

using GradSuiteProgress = std::function<void(const GradSuiteEntry&)>;

// Central finite-difference checks (step 1e-5) of every differentiable
// operator, every gai_forward variant and a 50-parameter spot check of the
// full network. Operators and GAI use tolerance 1e-4, the network 1e-3.
GradSuiteResult run_gradient_suite(std::uint64_t seed, const GradSuiteProgress& progress = {});

}  // namespace gain
