#include "gain/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gain/error.hpp"
#include "gain/rng.hpp"

namespace gain {

GradCheckReport grad_check(const ScalarFn& fn, const std::vector<Tensor>& inputs,
                           const GradCheckOptions& options) {
  if (options.step <= 0.0) throw ValidationError("grad_check step must be > 0");

  std::vector<Tensor> work = inputs;
  for (auto& t : work) {
    if (!t.is_leaf()) throw ValidationError("grad_check inputs must be leaves");
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tensor loss = fn(work);
  backward(loss);

  // (input, element) pairs to probe.
  std::vector<std::pair<std::size_t, std::int64_t>> probes;
  for (std::size_t i = 0; i < work.size(); ++i) {
    for (std::int64_t e = 0; e < work[i].numel(); ++e) probes.emplace_back(i, e);
  }
  if (options.sample_count >= 0 &&
      options.sample_count < static_cast<std::int64_t>(probes.size())) {
    Rng rng(options.sample_seed);
    // Partial Fisher-Yates.
    for (std::size_t k = 0; k < static_cast<std::size_t>(options.sample_count); ++k) {
      const auto j = k + rng.below(probes.size() - k);
      std::swap(probes[k], probes[j]);
    }
    probes.resize(static_cast<std::size_t>(options.sample_count));
    std::sort(probes.begin(), probes.end());
  }

  GradCheckReport report;
  NoGradGuard no_grad;
  for (const auto& [i, e] : probes) {
    auto values = work[i].mutable_data();
    const double saved = values[e];
    values[e] = saved + options.step;
    const double f_plus = fn(work).item();
    values[e] = saved - options.step;
    const double f_minus = fn(work).item();
    values[e] = saved;

    GradCheckEntry entry;
    entry.input = i;
    entry.index = e;
    entry.analytic = work[i].has_grad() ? work[i].grad()[e] : 0.0;
    entry.numeric = (f_plus - f_minus) / (2.0 * options.step);
    const double denom = std::max({std::abs(entry.analytic), std::abs(entry.numeric),
                                   options.denominator_floor});
    entry.rel_error = std::abs(entry.analytic - entry.numeric) / denom;
    entry.passed = std::isfinite(entry.rel_error) && entry.rel_error < options.tolerance;
    report.max_rel_error = std::max(report.max_rel_error, entry.rel_error);
    report.passed = report.passed && entry.passed;
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace gain
