#include "gain/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gain/ablation.hpp"
#include "gain/bench.hpp"
#include "gain/error.hpp"
#include "gain/flops.hpp"
#include "gain/grad_suite.hpp"
#include "gain/run_config.hpp"
#include "gain/train_eval.hpp"
#include "json.hpp"

namespace gain {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct Options {
  std::string config_path;
  std::string seed;
  std::string out_dir = "out";
  std::vector<std::string> overrides;
  std::string checkpoint;
  std::string axes;
  bool axes_given = false;
};

class Runtime : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::ofstream open_output(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Runtime("cannot write " + path.string());
  return os;
}

void write_json(const fs::path& path, const ordered_json& j) { open_output(path) << j.dump(2) << "\n"; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

ordered_json miou_json(const EvalResult& r) {
  ordered_json j;
  j["miou"] = r.miou.mean;
  auto per = ordered_json::array();
  for (double v : r.miou.per_class) per.push_back(std::isnan(v) ? ordered_json() : ordered_json(v));
  j["per_class_iou"] = per;
  auto cm = ordered_json::array();
  for (int t = 0; t < r.confusion.num_classes(); ++t) {
    auto row = ordered_json::array();
    for (int p = 0; p < r.confusion.num_classes(); ++p) row.push_back(r.confusion.at(t, p));
    cm.push_back(row);
  }
  j["confusion"] = cm;
  return j;
}

GainParams load_params(const RunConfig& cfg, const std::string& checkpoint) {
  auto params = initial_params(cfg.model, cfg.seed);
  if (!checkpoint.empty()) load_state_dict(params, load_checkpoint(checkpoint));
  return params;
}

int cmd_train(const RunConfig& cfg, const fs::path& out_dir, std::ostream& out) {
  auto train_set = generate_dataset(cfg.train_data);
  auto val_set = generate_dataset(cfg.val_data);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  auto result = train(cfg.model, train_set, val_set, tc, [&](const MetricsRow& row) {
    if (!row.evaluated) return;
    out << "iter " << row.iter + 1 << "  lr " << fmt("%.5f", row.lr) << "  loss "
        << fmt("%.4f", row.loss) << "  val mIoU " << fmt("%.4f", row.val_miou) << "\n";
  });
  {
    auto os = open_output(out_dir / "metrics.csv");
    write_metrics_csv(os, result.log);
  }
  save_checkpoint(out_dir / "model.ckpt", state_dict(result.params));
  ordered_json j;
  j["iterations"] = tc.iters;
  j["seed"] = cfg.seed;
  j["final_loss"] = result.log.empty() ? ordered_json() : ordered_json(result.log.back().loss);
  j["validation"] = miou_json(result.final_eval);
  write_json(out_dir / "train.json", j);
  out << "final val mIoU " << fmt("%.4f", result.final_eval.miou.mean) << "\n";
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, const Options& opt, const fs::path& out_dir, std::ostream& out) {
  if (opt.checkpoint.empty()) throw ValidationError("eval needs --checkpoint");
  auto params = load_params(cfg, opt.checkpoint);
  auto r = evaluate(params, cfg.model, generate_dataset(cfg.val_data));
  write_json(out_dir / "eval.json", miou_json(r));
  out << "val mIoU " << fmt("%.4f", r.miou.mean) << "\n";
  return kExitOk;
}

int cmd_bench(const RunConfig& cfg, const fs::path& out_dir, std::ostream& out) {
  BenchOptions bo = cfg.bench;
  bo.seed = cfg.seed;
  auto r = bench_gai_time(cfg.model.gai, cfg.bench_shapes, bo);
  write_json(out_dir / "bench.json", to_json(r));
  out << r.id << "  median " << fmt("%.3f", r.median_ms) << " ms  mean " << fmt("%.3f", r.mean_ms)
      << " ms  min " << fmt("%.3f", r.min_ms) << " ms  stddev " << fmt("%.3f", r.stddev_ms)
      << " ms  affinity elements " << r.affinity_elements << "  FLOPs " << r.flops << "\n";
  return kExitOk;
}

int cmd_flops(const RunConfig& cfg, const fs::path& out_dir, std::ostream& out) {
  const auto report = cfg.flops_scope == FlopsScope::network
                          ? count_gain_flops(cfg.model, cfg.flops_height, cfg.flops_width)
                          : count_upsampling_flops(cfg.model, cfg.flops_height, cfg.flops_width);
  std::ostringstream text;
  write_flops_text(text, report);
  out << text.str();
  open_output(out_dir / "flops.txt") << text.str();
  write_json(out_dir / "flops.json", to_json(report));
  return kExitOk;
}

int cmd_gradcheck(const RunConfig& cfg, const fs::path& out_dir, std::ostream& out) {
  auto r = run_gradient_suite(cfg.seed, [&](const GradSuiteEntry& e) {
    out << (e.passed ? "PASS " : "FAIL ") << e.name << "  max rel err "
        << fmt("%.3e", e.max_rel_error) << " (tol " << fmt("%.0e", e.tolerance) << ", "
        << e.checked << " elements)\n";
  });
  ordered_json j;
  j["seed"] = cfg.seed;
  j["passed"] = r.passed();
  auto entries = ordered_json::array();
  for (const auto& e : r.entries) {
    entries.push_back({{"name", e.name},
                       {"checked", e.checked},
                       {"max_rel_error", e.max_rel_error},
                       {"tolerance", e.tolerance},
                       {"passed", e.passed}});
  }
  j["checks"] = entries;
  j["timing"] = {{"seconds", r.seconds}};
  write_json(out_dir / "gradcheck.json", j);
  out << (r.passed() ? "all gradient checks passed" : "gradient checks FAILED") << " ("
      << r.entries.size() << " checks, " << fmt("%.1f", r.seconds) << " s)\n";
  return r.passed() ? kExitOk : kExitRuntime;
}

int cmd_ablate(const RunConfig& cfg, const fs::path& out_dir, std::ostream& out) {
  const auto axes = cfg.ablate_axes.empty() ? default_ablation_axes() : cfg.ablate_axes;
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  tc.iters = cfg.ablate_iters;
  tc.eval_every = 0;
  auto train_set = generate_dataset(cfg.train_data);
  auto val_set = generate_dataset(cfg.val_data);
  auto rows = run_ablation(cfg.model, axes, tc, train_set, val_set, [&](const AblationRow& r) {
    out << r.id << "  FLOPs " << r.flops << "  "
        << (r.ok ? "mIoU " + fmt("%.4f", r.miou) : "failed: " + r.error) << "\n";
  });
  auto os = open_output(out_dir / "ablation.csv");
  write_ablation_csv(os, rows);
  for (const auto& r : rows)
    if (!r.ok) return kExitRuntime;
  return kExitOk;
}

int cmd_dump_attention(const RunConfig& cfg, const Options& opt, const fs::path& out_dir,
                       std::ostream& out) {
  if (!cfg.model.use_gai) throw ValidationError("dump-attn needs use_gai = true");
  auto params = load_params(cfg, opt.checkpoint);
  auto val = generate_dataset(cfg.val_data);
  const std::vector<std::size_t> idx{static_cast<std::size_t>(cfg.dump_sample)};
  auto batch = make_batch(val, idx);

  NoGradGuard no_grad;
  auto pyr = backbone_forward(batch.images, params.backbone, false);
  Tensor low = pyr.c4;
  const GaiParams* gai = &*params.gai4;
  if (cfg.dump_module == "gai5") {
    low = cfg.model.use_gap ? gap_enhance(pyr.c5, *params.gap_conv) : pyr.c5;
    gai = &*params.gai5;
  }
  GaiTrace trace;
  gai_forward(pyr.c3, low, *gai, cfg.model.gai, &trace);
  for (std::size_t t = 0; t < trace.affinities.size(); ++t) {
    const auto path = out_dir / ("attention_step" + std::to_string(t) + ".csv");
    dump_attention(trace.affinities[t], cfg.dump_points, path);
    out << "wrote " << path.string() << "\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Guided attentive interpolation: training, evaluation and cost analysis", "gain"};
  app.fallthrough();
  app.require_subcommand(1);
  Options opt;
  app.add_option("--config", opt.config_path, "Config file of key = value lines");
  app.add_option("--seed", opt.seed, "Overrides the seed key");
  app.add_option("--out", opt.out_dir, "Output directory")->capture_default_str();
  app.add_option("--set", opt.overrides, "Override one config key, key=value (repeatable)");

  auto* train_cmd = app.add_subcommand("train", "Train GAIN on the synthetic dataset");
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the validation set");
  eval_cmd->add_option("--checkpoint", opt.checkpoint, "Checkpoint written by train")->required();
  auto* bench_cmd = app.add_subcommand("bench", "Time one GAI module");
  auto* flops_cmd = app.add_subcommand("flops", "Analytic FLOPs report");
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  auto* ablate_cmd = app.add_subcommand("ablate", "Train an ablation matrix");
  ablate_cmd->add_option("--axes", opt.axes, "Comma-separated axes, overrides ablate.axes");
  auto* dump_cmd = app.add_subcommand("dump-attn", "Write affinity weights of selected query pixels");
  dump_cmd->add_option("--checkpoint", opt.checkpoint, "Checkpoint written by train");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }
  opt.axes_given = ablate_cmd->count("--axes") > 0;

  try {
    RunConfig cfg;
    if (!opt.config_path.empty()) load_config_file(cfg, opt.config_path);
    for (const auto& s : opt.overrides) apply_override(cfg, s);
    if (!opt.seed.empty()) set_config_value(cfg, "seed", opt.seed);
    if (opt.axes_given) cfg.ablate_axes = parse_axes(opt.axes);
    cfg.validate();

    const fs::path out_dir = opt.out_dir;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw Runtime("cannot create output directory " + out_dir.string() + ": " + ec.message());
    {
      auto os = open_output(out_dir / "resolved.cfg");
      write_config(os, cfg);
    }

    if (*train_cmd) return cmd_train(cfg, out_dir, out);
    if (*eval_cmd) return cmd_eval(cfg, opt, out_dir, out);
    if (*bench_cmd) return cmd_bench(cfg, out_dir, out);
    if (*flops_cmd) return cmd_flops(cfg, out_dir, out);
    if (*grad_cmd) return cmd_gradcheck(cfg, out_dir, out);
    if (*ablate_cmd) return cmd_ablate(cfg, out_dir, out);
    if (*dump_cmd) return cmd_dump_attention(cfg, opt, out_dir, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}

}  // namespace gain
