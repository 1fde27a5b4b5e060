#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gain/attention.hpp"
#include "gain/flops.hpp"
#include "json.hpp"

namespace gain {

struct BenchOptions {
  int repeats = 5;  // >= 5
  int warmups = 2;  // >= 2
  std::uint64_t seed = 0;

  void validate() const;
};

struct BenchResult {
  std::string id;
  GaiShapes shapes;
  int repeats = 0;
  int warmups = 0;
  std::vector<double> samples_ms;
  double median_ms = 0.0;
  double mean_ms = 0.0;
  double min_ms = 0.0;
  double stddev_ms = 0.0;
  std::int64_t keys_per_query = 0;
  std::int64_t affinity_elements_per_step = 0;
  std::int64_t affinity_elements = 0;  // all recurrence steps
  std::int64_t flops = 0;
};

// e.g. "criss_cross/low_res/concat/R2/d_k8/d_v64"
std::string config_id(const GaiConfig& cfg);

// Forward-only wall time of one GAI module at batch 1 with seeded inputs and
// parameters.
BenchResult bench_gai_time(const GaiConfig& cfg, const GaiShapes& shapes,
                           const BenchOptions& options);

// Median of a non-empty sample.
double median(std::vector<double> values);

nlohmann::ordered_json to_json(const FlopsReport& report);
// Timing fields are grouped under "timing" so determinism checks can drop them.
nlohmann::ordered_json to_json(const BenchResult& result);

}  // namespace gain
