#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "gain/gain_net.hpp"
#include "gain/train_eval.hpp"

namespace gain {

// Boolean axes (use_gai, use_aux, use_spatial_c2, use_gap) are toggled
// cumulatively in the order given: with n of them the matrix starts from the
// base config with all n switched off and adds one per row, giving n + 1 rows.
// Enumerated axes (query_mode, attention_kind, key_source) contribute one row
// per value. The row set is the product of the two.
std::vector<std::string> parse_axes(const std::string& csv);
void validate_axes(std::span<const std::string> axes);

// Components of the cumulative axis chain used when no axes are given.
std::vector<std::string> default_ablation_axes();

struct AblationRow {
  std::string id;
  GainConfig config;
  std::int64_t flops = 0;
  double miou = 0.0;
  bool ok = false;
  std::string error;  // set when training or evaluation failed
};

std::vector<AblationRow> ablation_rows(const GainConfig& base, std::span<const std::string> axes);

// Short key=value summary of the ablated fields of a config.
std::string describe(const GainConfig& cfg);

using AblationProgress = std::function<void(const AblationRow&)>;

// Trains every row with the same schedule and seed. A failing row is recorded
// and the remaining rows still run.
std::vector<AblationRow> run_ablation(const GainConfig& base, std::span<const std::string> axes,
                                      const TrainConfig& tc,
                                      const std::vector<SegSample>& train_set,
                                      const std::vector<SegSample>& val_set,
                                      const AblationProgress& progress = {});

// Header row,config,flops,miou,status,error
void write_ablation_csv(std::ostream& os, std::span<const AblationRow> rows);

}  // namespace gain
