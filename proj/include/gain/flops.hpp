#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "gain/attention.hpp"
#include "gain/gain_net.hpp"
#include "gain/tensor.hpp"

namespace gain {

enum class OpKind { conv, affinity, softmax, aggregate, resize, elementwise, pool };

std::string to_string(OpKind kind);

struct FlopsRecord {
  std::string module;
  std::string name;
  OpKind kind = OpKind::conv;
  Shape input;   // NCHW (batch 1) of the main operand
  Shape output;
  std::int64_t mult_adds = 0;  // 0 for ops that are not multiply-accumulate
  std::int64_t flops = 0;
};

// Analytic operation counts for one forward pass at batch 1.
struct FlopsReport {
  std::vector<FlopsRecord> records;
  std::int64_t affinity_elements = 0;  // summed over recurrence steps and modules

  static const char* convention();

  std::int64_t total() const;
  std::int64_t total(OpKind kind) const;
  std::int64_t total_excluding_resize() const;
  // Affinity plus aggregation terms.
  std::int64_t attention_flops() const;
  // Ordered by first appearance.
  std::vector<std::pair<std::string, std::int64_t>> module_totals() const;

  void append(const FlopsReport& other);
};

struct GaiShapes {
  std::int64_t high_channels = 0, high_h = 0, high_w = 0;
  std::int64_t low_channels = 0, low_h = 0, low_w = 0;
};

FlopsReport count_gai_flops(const GaiConfig& cfg, const GaiShapes& shapes,
                            const std::string& module = "gai");

// Whole network at an H x W input.
FlopsReport count_gain_flops(const GainConfig& cfg, std::int64_t height, std::int64_t width);

// Only the GAI modules (or the bilinear baseline's reduce + resize) of a
// network at an H x W input.
FlopsReport count_upsampling_flops(const GainConfig& cfg, std::int64_t height, std::int64_t width);

// Number of keys each query sees.
std::int64_t keys_per_query(AttentionKind kind, std::int64_t key_h, std::int64_t key_w);

void write_flops_text(std::ostream& os, const FlopsReport& report);

}  // namespace gain
