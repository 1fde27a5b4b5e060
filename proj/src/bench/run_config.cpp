#include "gain/run_config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "gain/ablation.hpp"
#include "gain/error.hpp"

namespace gain {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ValidationError("invalid value '" + value + "' for " + key + " (expected " + expected + ")");
}

template <class T>
T parse_integer(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(key, value, "an integer");
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || !std::isfinite(out)) bad_value(key, value, "a finite number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "true or false");
}

template <class Fn>
auto wrap_enum(const std::string& key, const std::string& value, Fn parse) {
  try {
    return parse(value);
  } catch (const ValidationError& e) {
    throw ValidationError(key + ": " + e.what());
  }
}

// Shortest text that reads back to the same double.
std::string fmt_double(double v) {
  char buf[40];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

struct Entry {
  ConfigKey key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define GAIN_INT_KEY(NAME, FIELD, DOC)                                                          \
  Entry {                                                                                       \
    {NAME, DOC},                                                                                \
        [](RunConfig& c, const std::string& v) { c.FIELD = parse_integer<decltype(c.FIELD)>(NAME, v); }, \
        [](const RunConfig& c) { return std::to_string(c.FIELD); }                             \
  }
#define GAIN_DOUBLE_KEY(NAME, FIELD, DOC)                                                       \
  Entry {                                                                                       \
    {NAME, DOC}, [](RunConfig& c, const std::string& v) { c.FIELD = parse_double(NAME, v); },   \
        [](const RunConfig& c) { return fmt_double(c.FIELD); }                                 \
  }
#define GAIN_BOOL_KEY(NAME, FIELD, DOC)                                                         \
  Entry {                                                                                       \
    {NAME, DOC}, [](RunConfig& c, const std::string& v) { c.FIELD = parse_bool(NAME, v); },     \
        [](const RunConfig& c) { return std::string(c.FIELD ? "true" : "false"); }             \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table{
      GAIN_INT_KEY("seed", seed, "Seed for parameter init, batch order, benchmark inputs and gradient checks"),

      {{"backbone.channels", "Comma-separated widths of C2, C3, C4, C5"},
       [](RunConfig& c, const std::string& v) {
         std::vector<std::int64_t> ch;
         for (const auto& s : split(v, ',')) ch.push_back(parse_integer<std::int64_t>("backbone.channels", s));
         c.model.backbone.channels = ch;
       },
       [](const RunConfig& c) {
         std::vector<std::string> s;
         for (auto x : c.model.backbone.channels) s.push_back(std::to_string(x));
         return join(s);
       }},
      GAIN_INT_KEY("backbone.blocks", model.backbone.blocks, "Conv blocks per backbone stage, the first one strided"),
      GAIN_INT_KEY("num_classes", model.num_classes, "Classifier outputs"),
      GAIN_BOOL_KEY("use_gai", model.use_gai, "Upsample C4 and C5 with GAI modules instead of reduce + bilinear"),
      GAIN_BOOL_KEY("use_aux", model.use_aux, "Auxiliary heads on both upsampled maps"),
      GAIN_BOOL_KEY("use_spatial_c2", model.use_spatial_c2, "Fuse C2 before the classifier"),
      GAIN_BOOL_KEY("use_gap", model.use_gap, "Global-average-pool context added to C5"),
      GAIN_INT_KEY("fused_channels", model.fused_channels, "Width of the fusion convolutions"),
      GAIN_INT_KEY("aux_channels", model.aux_channels, "Width of the auxiliary head convolution"),
      GAIN_DOUBLE_KEY("aux_weight", model.aux_weight, "Weight of the summed auxiliary losses"),

      GAIN_INT_KEY("gai.channels", model.gai.channels, "Width C of the query, key and value sources"),
      GAIN_INT_KEY("gai.d_k", model.gai.d_k, "Query/key projection width"),
      GAIN_INT_KEY("gai.d_v", model.gai.d_v, "Value projection width"),
      {{"gai.attention", "criss_cross or full"},
       [](RunConfig& c, const std::string& v) { c.model.gai.attention = wrap_enum("gai.attention", v, parse_attention_kind); },
       [](const RunConfig& c) { return to_string(c.model.gai.attention); }},
      GAIN_INT_KEY("gai.recurrence", model.gai.recurrence, "Attention passes with shared weights"),
      {{"gai.query_mode", "concat, high_only or low_only"},
       [](RunConfig& c, const std::string& v) { c.model.gai.query_mode = wrap_enum("gai.query_mode", v, parse_query_mode); },
       [](const RunConfig& c) { return to_string(c.model.gai.query_mode); }},
      {{"gai.key_source", "low_res (keys on the low-resolution grid) or high_res"},
       [](RunConfig& c, const std::string& v) { c.model.gai.key_source = wrap_enum("gai.key_source", v, parse_key_source); },
       [](const RunConfig& c) { return to_string(c.model.gai.key_source); }},
      GAIN_INT_KEY("gai.out_channels", model.gai.out_channels, "Output width of each GAI module"),

      GAIN_INT_KEY("train.iters", train.iters, "SGD iterations"),
      GAIN_INT_KEY("train.batch", train.batch_size, "Images per iteration"),
      GAIN_DOUBLE_KEY("train.lr0", train.lr0, "Initial learning rate of the poly schedule"),
      GAIN_DOUBLE_KEY("train.power", train.power, "Poly schedule exponent"),
      GAIN_DOUBLE_KEY("train.momentum", train.sgd.momentum, "SGD momentum"),
      GAIN_DOUBLE_KEY("train.weight_decay", train.sgd.weight_decay, "L2 weight decay"),
      GAIN_DOUBLE_KEY("train.ohem_threshold", train.ohem.prob_threshold, "OHEM keeps pixels whose true-class probability is below this"),
      GAIN_DOUBLE_KEY("train.ohem_min_kept", train.ohem.min_kept_fraction, "Minimum fraction of valid pixels OHEM keeps"),
      GAIN_INT_KEY("train.eval_every", train.eval_every, "Validation interval in iterations; 0 evaluates only at the end"),

      GAIN_INT_KEY("data.train_seed", train_data.seed, "Seed of the synthetic training set"),
      GAIN_INT_KEY("data.train_samples", train_data.num_samples, "Training images"),
      GAIN_INT_KEY("data.val_seed", val_data.seed, "Seed of the synthetic validation set"),
      GAIN_INT_KEY("data.val_samples", val_data.num_samples, "Validation images"),
      {{"data.height", "Image height (multiple of 32)"},
       [](RunConfig& c, const std::string& v) { c.train_data.height = c.val_data.height = parse_integer<std::int64_t>("data.height", v); },
       [](const RunConfig& c) { return std::to_string(c.train_data.height); }},
      {{"data.width", "Image width (multiple of 32)"},
       [](RunConfig& c, const std::string& v) { c.train_data.width = c.val_data.width = parse_integer<std::int64_t>("data.width", v); },
       [](const RunConfig& c) { return std::to_string(c.train_data.width); }},
      {{"data.noise", "Colour jitter amplitude; pixel noise std is half of it"},
       [](RunConfig& c, const std::string& v) { c.train_data.noise = c.val_data.noise = parse_double("data.noise", v); },
       [](const RunConfig& c) { return fmt_double(c.train_data.noise); }},
      {{"data.min_shapes", "Fewest shapes per image"},
       [](RunConfig& c, const std::string& v) { c.train_data.min_shapes = c.val_data.min_shapes = parse_integer<int>("data.min_shapes", v); },
       [](const RunConfig& c) { return std::to_string(c.train_data.min_shapes); }},
      {{"data.max_shapes", "Most shapes per image"},
       [](RunConfig& c, const std::string& v) { c.train_data.max_shapes = c.val_data.max_shapes = parse_integer<int>("data.max_shapes", v); },
       [](const RunConfig& c) { return std::to_string(c.train_data.max_shapes); }},

      GAIN_INT_KEY("bench.high_channels", bench_shapes.high_channels, "Channels of the high-resolution GAI input"),
      GAIN_INT_KEY("bench.high_h", bench_shapes.high_h, "Height of the high-resolution GAI input"),
      GAIN_INT_KEY("bench.high_w", bench_shapes.high_w, "Width of the high-resolution GAI input"),
      GAIN_INT_KEY("bench.low_channels", bench_shapes.low_channels, "Channels of the low-resolution GAI input"),
      GAIN_INT_KEY("bench.low_h", bench_shapes.low_h, "Height of the low-resolution GAI input"),
      GAIN_INT_KEY("bench.low_w", bench_shapes.low_w, "Width of the low-resolution GAI input"),
      GAIN_INT_KEY("bench.repeats", bench.repeats, "Timed forward passes (>= 5)"),
      GAIN_INT_KEY("bench.warmups", bench.warmups, "Untimed forward passes first (>= 2)"),

      GAIN_INT_KEY("flops.height", flops_height, "Input height for the FLOPs report"),
      GAIN_INT_KEY("flops.width", flops_width, "Input width for the FLOPs report"),
      {{"flops.scope", "upsampling (GAI modules or the bilinear baseline only) or network"},
       [](RunConfig& c, const std::string& v) {
         if (v == "upsampling") {
           c.flops_scope = FlopsScope::upsampling;
         } else if (v == "network") {
           c.flops_scope = FlopsScope::network;
         } else {
           bad_value("flops.scope", v, "upsampling or network");
         }
       },
       [](const RunConfig& c) { return std::string(c.flops_scope == FlopsScope::network ? "network" : "upsampling"); }},

      {{"ablate.axes", "Comma-separated ablation axes; empty means use_gai,use_aux,use_spatial_c2,use_gap"},
       [](RunConfig& c, const std::string& v) { c.ablate_axes = parse_axes(v); },
       [](const RunConfig& c) { return join(c.ablate_axes); }},
      GAIN_INT_KEY("ablate.iters", ablate_iters, "Training iterations per ablation row"),

      {{"dump.module", "gai4 or gai5"},
       [](RunConfig& c, const std::string& v) {
         if (v != "gai4" && v != "gai5") bad_value("dump.module", v, "gai4 or gai5");
         c.dump_module = v;
       },
       [](const RunConfig& c) { return c.dump_module; }},
      {{"dump.points", "Comma-separated query pixels h:w on the stride-8 grid"},
       [](RunConfig& c, const std::string& v) {
         std::vector<QueryPoint> pts;
         for (const auto& item : split(v, ',')) {
           const auto colon = item.find(':');
           if (colon == std::string::npos) bad_value("dump.points", v, "h:w pairs");
           pts.push_back({parse_integer<std::int64_t>("dump.points", trim(item.substr(0, colon))),
                          parse_integer<std::int64_t>("dump.points", trim(item.substr(colon + 1)))});
         }
         c.dump_points = pts;
       },
       [](const RunConfig& c) {
         std::vector<std::string> s;
         for (const auto& p : c.dump_points) s.push_back(std::to_string(p.h) + ":" + std::to_string(p.w));
         return join(s);
       }},
      GAIN_INT_KEY("dump.sample", dump_sample, "Validation image whose attention is dumped"),
  };
  return table;
}

#undef GAIN_INT_KEY
#undef GAIN_DOUBLE_KEY
#undef GAIN_BOOL_KEY

const Entry& find_entry(const std::string& key) {
  for (const auto& e : entries())
    if (e.key.name == key) return e;
  throw ValidationError("unknown config key '" + key + "'");
}

}  // namespace

RunConfig::RunConfig() {
  train_data.seed = 1;
  train_data.num_samples = 512;
  val_data.seed = 2;
  val_data.num_samples = 64;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  train_data.validate();
  val_data.validate();
  bench.validate();
  validate_axes(ablate_axes);
  if (ablate_iters < 1) throw ValidationError("ablate.iters must be >= 1");
  if (dump_sample < 0 || dump_sample >= val_data.num_samples) {
    throw ValidationError("dump.sample must index a validation image");
  }
  if (dump_points.empty()) throw ValidationError("dump.points must not be empty");
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& e : entries()) k.push_back(e.key);
    return k;
  }();
  return keys;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  find_entry(key).set(cfg, value);
}

std::string get_config_value(const RunConfig& cfg, const std::string& key) {
  return find_entry(key).get(cfg);
}

void parse_config(RunConfig& cfg, std::istream& is, const std::string& source) {
  std::set<std::string> seen;
  std::string line;
  for (int n = 1; std::getline(is, line); ++n) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = source + ":" + std::to_string(n) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError(where + "expected 'key = value', got '" + line + "'");
    const auto key = trim(line.substr(0, eq));
    if (!seen.insert(key).second) throw ValidationError(where + "config key '" + key + "' set twice");
    try {
      set_config_value(cfg, key, trim(line.substr(eq + 1)));
    } catch (const ValidationError& e) {
      throw ValidationError(where + e.what());
    }
  }
}

void load_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open config file " + path.string());
  parse_config(cfg, is, path.string());
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + assignment + "'");
  set_config_value(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void write_config(std::ostream& os, const RunConfig& cfg) {
  for (const auto& e : entries()) os << e.key.name << " = " << e.get(cfg) << "\n";
}

}  // namespace gain
