#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "gain/bench.hpp"
#include "gain/flops.hpp"
#include "gain/gain_net.hpp"
#include "gain/train_eval.hpp"

namespace gain {

enum class FlopsScope { network, upsampling };

// Everything a CLI invocation can be configured with.
struct RunConfig {
  std::uint64_t seed = 0;
  GainConfig model;
  TrainConfig train;
  DatasetSpec train_data;
  DatasetSpec val_data;
  GaiShapes bench_shapes{128, 64, 128, 128, 32, 64};
  BenchOptions bench;
  std::int64_t flops_height = 1024;
  std::int64_t flops_width = 2048;
  FlopsScope flops_scope = FlopsScope::upsampling;
  std::vector<std::string> ablate_axes;  // empty selects default_ablation_axes()
  long ablate_iters = 300;
  std::string dump_module = "gai4";
  std::vector<QueryPoint> dump_points{{0, 0}};
  int dump_sample = 0;

  RunConfig();
  void validate() const;
};

struct ConfigKey {
  std::string name;
  std::string doc;
};

// Every accepted key, in file order.
const std::vector<ConfigKey>& config_keys();

// Sets one dotted key from its text form. Unknown keys and malformed values
// raise ValidationError naming the key.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& cfg, const std::string& key);

// Plain-text "key = value" lines; '#' starts a comment. A key may appear at
// most once per file.
void parse_config(RunConfig& cfg, std::istream& is, const std::string& source = "<config>");
void load_config_file(RunConfig& cfg, const std::filesystem::path& path);

// "key=value" override, as passed to --set.
void apply_override(RunConfig& cfg, const std::string& assignment);

// All keys with their current values, loadable by parse_config.
void write_config(std::ostream& os, const RunConfig& cfg);

}  // namespace gain
