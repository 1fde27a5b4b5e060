#include "gain/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "gain/error.hpp"
#include "gain/rng.hpp"

namespace gain {

void BenchOptions::validate() const {
  if (repeats < 5) throw ValidationError("bench.repeats must be >= 5");
  if (warmups < 2) throw ValidationError("bench.warmups must be >= 2");
}

std::string config_id(const GaiConfig& cfg) {
  return to_string(cfg.attention) + "/" + to_string(cfg.key_source) + "/" +
         to_string(cfg.query_mode) + "/R" + std::to_string(cfg.recurrence) + "/d_k" +
         std::to_string(cfg.d_k) + "/d_v" + std::to_string(cfg.d_v);
}

double median(std::vector<double> values) {
  if (values.empty()) throw ValidationError("median of an empty sample");
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

BenchResult bench_gai_time(const GaiConfig& cfg, const GaiShapes& shapes,
                           const BenchOptions& options) {
  options.validate();
  const auto flops = count_gai_flops(cfg, shapes);

  Rng rng(options.seed);
  auto params = GaiParams::make(cfg, shapes.high_channels, shapes.low_channels, rng);
  auto f_high = randn({1, shapes.high_channels, shapes.high_h, shapes.high_w}, rng);
  auto f_low = randn({1, shapes.low_channels, shapes.low_h, shapes.low_w}, rng);

  NoGradGuard no_grad;
  BenchResult r;
  r.id = config_id(cfg);
  r.shapes = shapes;
  r.repeats = options.repeats;
  r.warmups = options.warmups;
  for (int i = 0; i < options.warmups + options.repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    auto out = gai_forward(f_high, f_low, params, cfg);
    const auto t1 = std::chrono::steady_clock::now();
    if (i >= options.warmups) {
      r.samples_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
  }
  r.median_ms = median(r.samples_ms);
  r.mean_ms = std::accumulate(r.samples_ms.begin(), r.samples_ms.end(), 0.0) /
              static_cast<double>(r.samples_ms.size());
  r.min_ms = *std::min_element(r.samples_ms.begin(), r.samples_ms.end());
  double var = 0.0;
  for (double s : r.samples_ms) var += (s - r.mean_ms) * (s - r.mean_ms);
  r.stddev_ms = std::sqrt(var / static_cast<double>(r.samples_ms.size()));

  const bool low_keys = cfg.key_source == KeySource::low_res;
  r.keys_per_query = keys_per_query(cfg.attention, low_keys ? shapes.low_h : shapes.high_h,
                                    low_keys ? shapes.low_w : shapes.high_w);
  r.affinity_elements_per_step = shapes.high_h * shapes.high_w * r.keys_per_query;
  r.affinity_elements = flops.affinity_elements;
  r.flops = flops.total();
  return r;
}

nlohmann::ordered_json to_json(const FlopsReport& report) {
  nlohmann::ordered_json j;
  j["convention"] = FlopsReport::convention();
  j["total_flops"] = report.total();
  j["total_flops_excluding_resize"] = report.total_excluding_resize();
  j["resize_flops"] = report.total(OpKind::resize);
  j["attention_flops"] = report.attention_flops();
  j["affinity_elements"] = report.affinity_elements;
  auto modules = nlohmann::ordered_json::array();
  for (const auto& [name, flops] : report.module_totals()) modules.push_back({{"module", name}, {"flops", flops}});
  j["modules"] = modules;
  auto records = nlohmann::ordered_json::array();
  for (const auto& r : report.records) {
    records.push_back({{"module", r.module},
                       {"name", r.name},
                       {"kind", to_string(r.kind)},
                       {"input", r.input},
                       {"output", r.output},
                       {"mult_adds", r.mult_adds},
                       {"flops", r.flops}});
  }
  j["records"] = records;
  return j;
}

nlohmann::ordered_json to_json(const BenchResult& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["high"] = {r.shapes.high_channels, r.shapes.high_h, r.shapes.high_w};
  j["low"] = {r.shapes.low_channels, r.shapes.low_h, r.shapes.low_w};
  j["repeats"] = r.repeats;
  j["warmups"] = r.warmups;
  j["keys_per_query"] = r.keys_per_query;
  j["affinity_elements_per_step"] = r.affinity_elements_per_step;
  j["affinity_elements"] = r.affinity_elements;
  j["flops"] = r.flops;
  j["timing"] = {{"median_ms", r.median_ms},
                 {"mean_ms", r.mean_ms},
                 {"min_ms", r.min_ms},
                 {"stddev_ms", r.stddev_ms},
                 {"samples_ms", r.samples_ms}};
  return j;
}

}  // namespace gain
