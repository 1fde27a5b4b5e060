#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "doctest.h"
#include "gain/ablation.hpp"
#include "gain/bench.hpp"
#include "gain/error.hpp"
#include "gain/flops.hpp"
#include "gain/grad_suite.hpp"
#include "gain/run_config.hpp"
#include "test_util.hpp"

using namespace gain;

namespace {

const FlopsRecord& record(const FlopsReport& r, const std::string& name) {
  for (const auto& rec : r.records)
    if (rec.name == name) return rec;
  FAIL("no record " << name);
  throw 0;
}

GaiShapes cityscapes_gai1() { return {128, 128, 256, 256, 64, 128}; }

// Closed-form total of one GAI module, written out term by term.
std::int64_t gai_total_oracle(const GaiConfig& c, const GaiShapes& s) {
  const std::int64_t hw = s.high_h * s.high_w, lhw = s.low_h * s.low_w;
  const bool resized = lhw != hw;
  const std::int64_t khw = c.key_source == KeySource::low_res ? lhw : hw;
  const std::int64_t keys = c.attention == AttentionKind::full
                                ? khw
                                : (c.key_source == KeySource::low_res ? s.low_h + s.low_w - 1
                                                                      : s.high_h + s.high_w - 1);
  std::int64_t q_in = s.high_channels + c.channels;
  if (c.query_mode == QueryMode::high_only) q_in = s.high_channels;
  if (c.query_mode == QueryMode::low_only) q_in = c.channels;
  const std::int64_t r = c.recurrence;
  return 2 * s.low_channels * c.channels * lhw                       // reduce_low
         + (resized ? 8 * c.channels * hw : 0)                       // resize
         + 2 * q_in * c.channels * hw                                // reduce_query
         + 2 * c.channels * (c.d_k + c.d_v) * khw                    // w_k, w_v
         + r * (2 * c.channels * c.d_k * hw                          // w_q
                + 2 * (c.d_k + c.d_v) * hw * keys + 5 * hw * keys)   // attention
         + (r - 1) * (2 * c.d_v * c.channels * hw + c.channels * hw)  // feedback
         + 2 * (c.channels + c.d_v) * c.out_channels * hw;           // out_proj
}

GainConfig tiny_config() {
  GainConfig cfg;
  cfg.backbone.channels = {8, 12, 16, 16};
  cfg.gai.channels = 12;
  cfg.gai.d_k = 4;
  cfg.gai.d_v = 6;
  cfg.gai.out_channels = 12;
  cfg.fused_channels = 16;
  cfg.aux_channels = 8;
  return cfg;
}

}  // namespace

TEST_CASE("flops formula examples") {
  GaiConfig cfg;
  auto r = count_gai_flops(cfg, cityscapes_gai1(), "gai");
  CHECK(record(r, "gai.w_q.step0").flops == 67108864);
  CHECK(record(r, "gai.w_q.step0").mult_adds == 33554432);
  CHECK(record(r, "gai.affinity.step0").output == Shape{1, 32768, 191});
  CHECK(r.affinity_elements == 2 * 6258688);
  CHECK(keys_per_query(AttentionKind::criss_cross, 64, 128) == 191);
  CHECK(keys_per_query(AttentionKind::full, 64, 128) == 8192);
  CHECK(record(r, "gai.softmax.step1").flops == 5 * 6258688);
}

TEST_CASE("flops totals match a closed-form oracle and are additive") {
  Rng rng(1);
  for (int trial = 0; trial < 40; ++trial) {
    GaiConfig c;
    c.channels = 8 + static_cast<std::int64_t>(rng.below(9));
    c.d_k = 1 + static_cast<std::int64_t>(rng.below(8));
    c.d_v = 1 + static_cast<std::int64_t>(rng.below(8));
    c.out_channels = 1 + static_cast<std::int64_t>(rng.below(16));
    c.recurrence = 1 + static_cast<int>(rng.below(3));
    c.attention = rng.below(2) ? AttentionKind::full : AttentionKind::criss_cross;
    c.key_source = rng.below(2) ? KeySource::high_res : KeySource::low_res;
    c.query_mode = static_cast<QueryMode>(rng.below(3));
    GaiShapes s;
    s.high_channels = 1 + static_cast<std::int64_t>(rng.below(20));
    s.low_channels = 1 + static_cast<std::int64_t>(rng.below(20));
    s.low_h = 1 + static_cast<std::int64_t>(rng.below(6));
    s.low_w = 1 + static_cast<std::int64_t>(rng.below(6));
    s.high_h = s.low_h * (1 + static_cast<std::int64_t>(rng.below(3)));
    s.high_w = s.low_w * (1 + static_cast<std::int64_t>(rng.below(3)));
    auto r = count_gai_flops(c, s);
    INFO("trial " << trial);
    CHECK(r.total() == gai_total_oracle(c, s));
    std::int64_t parts = 0;
    for (const auto& [m, f] : r.module_totals()) parts += f;
    CHECK(parts == r.total());
  }

  GainConfig cfg;
  auto net = count_gain_flops(cfg, 64, 96);
  std::int64_t sum = 0;
  for (const auto& rec : net.records) sum += rec.flops;
  CHECK(sum == net.total());
  CHECK(net.total() == net.total_excluding_resize() + net.total(OpKind::resize));
  auto up = count_upsampling_flops(cfg, 64, 96);
  std::int64_t gai = 0;
  for (const auto& [m, f] : net.module_totals())
    if (m == "gai4" || m == "gai5") gai += f;
  CHECK(up.total() == gai);
  CHECK(up.affinity_elements == net.affinity_elements);
}

TEST_CASE("attention flops ratio is exactly Hk*Wk / (Hk+Wk-1)") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    GaiConfig c;
    c.channels = 8;
    c.d_k = 1 + static_cast<std::int64_t>(rng.below(8));
    c.d_v = 1 + static_cast<std::int64_t>(rng.below(8));
    c.recurrence = 1 + static_cast<int>(rng.below(3));
    GaiShapes s{3, 0, 0, 5, 1 + static_cast<std::int64_t>(rng.below(9)),
                1 + static_cast<std::int64_t>(rng.below(9))};
    s.high_h = s.low_h * 2;
    s.high_w = s.low_w * 2;
    c.attention = AttentionKind::full;
    const auto full = count_gai_flops(c, s).attention_flops();
    c.attention = AttentionKind::criss_cross;
    const auto cc = count_gai_flops(c, s);
    const auto hk = s.low_h, wk = s.low_w;
    CHECK(full * (hk + wk - 1) == cc.attention_flops() * hk * wk);
    CHECK(cc.affinity_elements == c.recurrence * s.high_h * s.high_w * (hk + wk - 1));
  }
  GaiConfig c;
  c.attention = AttentionKind::full;
  const auto full = count_gai_flops(c, cityscapes_gai1()).attention_flops();
  c.attention = AttentionKind::criss_cross;
  const auto cc = count_gai_flops(c, cityscapes_gai1()).attention_flops();
  CHECK(full * 191 == cc * 8192);
  CHECK(static_cast<double>(full) / cc == doctest::Approx(42.89).epsilon(1e-3));
}

TEST_CASE("flops records follow the real module shapes") {
  Rng rng(3);
  for (auto kind : {AttentionKind::criss_cross, AttentionKind::full}) {
    for (auto source : {KeySource::low_res, KeySource::high_res}) {
      GaiConfig c;
      c.channels = 6;
      c.d_k = 3;
      c.d_v = 4;
      c.out_channels = 5;
      c.attention = kind;
      c.key_source = source;
      auto p = GaiParams::make(c, 4, 7, rng);
      GaiTrace trace;
      auto out = gai_forward(randn({1, 4, 6, 8}, rng), randn({1, 7, 3, 4}, rng), p, c, &trace);
      auto r = count_gai_flops(c, {4, 6, 8, 7, 3, 4}, "m");
      CHECK(record(r, "m.reduce_query").output == trace.query.q.shape());
      CHECK(record(r, "m.w_k").input == trace.query.k_src.shape());
      CHECK(record(r, "m.aggregate.step1").output == trace.outputs[1].shape());
      CHECK(record(r, "m.out_proj").output == out.shape());
      CHECK(record(r, "m.affinity.step0").output[2] == trace.affinities[0].keys_per_query());
    }
  }

  // Every conv record corresponds to a parameter tensor of the same shape.
  for (bool use_gai : {true, false}) {
    GainConfig cfg;
    cfg.use_gai = use_gai;
    auto params = GainParams::make(cfg, rng);
    std::set<std::tuple<std::int64_t, std::int64_t, std::int64_t>> weights, convs;
    for (const auto& [name, t] : params.named_parameters())
      if (t.rank() == 4) weights.insert({t.dim(0), t.dim(1), t.dim(2)});
    for (const auto& rec : count_gain_flops(cfg, 64, 64).records) {
      if (rec.kind != OpKind::conv) continue;
      const auto k = static_cast<std::int64_t>(
          std::lround(std::sqrt(static_cast<double>(rec.mult_adds) /
                                (rec.input[1] * rec.output[1] * rec.output[2] * rec.output[3]))));
      convs.insert({rec.output[1], rec.input[1], k});
    }
    CHECK(convs == weights);
  }
}

TEST_CASE("flops report json") {
  auto r = count_gai_flops(GaiConfig{}, cityscapes_gai1());
  auto j = to_json(r);
  CHECK(j["total_flops"].get<std::int64_t>() == r.total());
  CHECK(j["records"].size() == r.records.size());
  CHECK(j["convention"].get<std::string>().find("1 multiply-add = 2 FLOPs") == 0);
  std::ostringstream os;
  write_flops_text(os, r);
  CHECK(os.str().find("gai.aggregate.step1") != std::string::npos);
  CHECK_THROWS_AS(count_gai_flops(GaiConfig{}, {4, 2, 2, 4, 3, 3}), ValidationError);
}

TEST_CASE("bench_time records exactly the requested repeats") {
  GaiConfig c;
  c.channels = 8;
  c.d_k = 2;
  c.d_v = 4;
  c.out_channels = 8;
  BenchOptions o;
  auto r = bench_gai_time(c, {8, 8, 16, 8, 4, 8}, o);
  CHECK(r.samples_ms.size() == 5u);
  CHECK(r.repeats == 5);
  CHECK(r.warmups == 2);
  CHECK(r.min_ms <= r.median_ms);
  CHECK(r.keys_per_query == 11);
  CHECK(r.affinity_elements_per_step == 128 * 11);
  CHECK(r.affinity_elements == 2 * 128 * 11);
  CHECK(r.id == "criss_cross/low_res/concat/R2/d_k2/d_v4");
  auto j = to_json(r);
  CHECK(j["timing"]["samples_ms"].size() == 5u);

  o.repeats = 4;
  CHECK_THROWS_AS(bench_gai_time(c, {8, 8, 16, 8, 4, 8}, o), ValidationError);
  o.repeats = 5;
  o.warmups = 1;
  CHECK_THROWS_AS(bench_gai_time(c, {8, 8, 16, 8, 4, 8}, o), ValidationError);
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
}

TEST_CASE("config files") {
  RunConfig cfg;
  std::istringstream is(
      "# comment\n"
      "gai.d_k = 16   # trailing comment\n"
      "\n"
      "backbone.channels = 16, 24, 32, 48\n"
      "use_gap = false\n"
      "gai.attention = full\n"
      "train.lr0 = 0.02\n"
      "dump.points = 1:2, 3:4\n");
  parse_config(cfg, is);
  CHECK(cfg.model.gai.d_k == 16);
  CHECK(cfg.model.backbone.channels == std::vector<std::int64_t>{16, 24, 32, 48});
  CHECK_FALSE(cfg.model.use_gap);
  CHECK(cfg.model.gai.attention == AttentionKind::full);
  CHECK(cfg.train.lr0 == 0.02);
  CHECK(cfg.dump_points.size() == 2u);
  CHECK(cfg.dump_points[1].w == 4);

  auto fails_with = [](const std::string& text, const std::string& needle) {
    RunConfig c;
    std::istringstream in(text);
    try {
      parse_config(c, in, "test.cfg");
    } catch (const ValidationError& e) {
      INFO(e.what());
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
      return;
    }
    FAIL("expected a validation error for " << text);
  };
  fails_with("gai.dk = 4\n", "unknown config key 'gai.dk'");
  fails_with("gai.d_k = four\n", "gai.d_k");
  fails_with("gai.d_k = 4\ngai.d_k = 5\n", "test.cfg:2");
  fails_with("use_gai = maybe\n", "use_gai");
  fails_with("gai.query_mode = both\n", "gai.query_mode");
  fails_with("just words\n", "key = value");
  fails_with("seed = -3\n", "seed");
  fails_with("ablate.axes = use_gai, colour\n", "colour");

  RunConfig bad;
  bad.bench.repeats = 3;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  RunConfig defaults;
  CHECK_NOTHROW(defaults.validate());
}

TEST_CASE("written configs load back to the same values") {
  RunConfig cfg;
  set_config_value(cfg, "gai.query_mode", "low_only");
  set_config_value(cfg, "data.noise", "0.1");
  set_config_value(cfg, "ablate.axes", "query_mode,use_aux");
  apply_override(cfg, "train.weight_decay=1e-4");
  std::ostringstream a;
  write_config(a, cfg);
  RunConfig back;
  std::istringstream is(a.str());
  parse_config(back, is);
  std::ostringstream b;
  write_config(b, back);
  CHECK(a.str() == b.str());
  CHECK(back.train.sgd.weight_decay == 1e-4);
  CHECK(get_config_value(back, "data.noise") == "0.1");
  CHECK(back.val_data.noise == 0.1);
  CHECK_THROWS_AS(apply_override(cfg, "gai.d_k"), ValidationError);
}

TEST_CASE("every config key is documented") {
  std::ifstream doc(GAIN_DOCS_DIR "/config.md");
  REQUIRE(doc);
  std::stringstream ss;
  ss << doc.rdbuf();
  for (const auto& k : config_keys()) {
    INFO(k.name);
    CHECK(ss.str().find("`" + k.name + "`") != std::string::npos);
    CHECK_FALSE(k.doc.empty());
  }
}

TEST_CASE("ablation row structure") {
  GainConfig base;
  auto tab4 = ablation_rows(base, default_ablation_axes());
  REQUIRE(tab4.size() == 5u);
  CHECK(tab4[0].id == "baseline");
  CHECK_FALSE(tab4[0].config.use_gai);
  CHECK_FALSE(tab4[0].config.use_gap);
  CHECK(tab4[1].config.use_gai);
  CHECK_FALSE(tab4[1].config.use_aux);
  CHECK(tab4[4].id == "baseline+use_gai+use_aux+use_spatial_c2+use_gap");
  for (int i = 0; i < 5; ++i) {
    const auto& c = tab4[i].config;
    CHECK(c.use_gai + c.use_aux + c.use_spatial_c2 + c.use_gap == i);
  }

  const std::vector<std::string> qm{"query_mode"};
  auto tab8 = ablation_rows(base, qm);
  REQUIRE(tab8.size() == 3u);
  CHECK(tab8[0].config.gai.query_mode == QueryMode::low_only);
  CHECK(tab8[1].config.gai.query_mode == QueryMode::high_only);
  CHECK(tab8[2].config.gai.query_mode == QueryMode::concat);
  CHECK(tab8[0].id == "query_mode=low_only");

  auto single = ablation_rows(base, {});
  REQUIRE(single.size() == 1u);
  CHECK(single[0].id == "base");
  CHECK(describe(single[0].config) == describe(base));

  const std::vector<std::string> mixed{"use_aux", "attention_kind", "key_source"};
  CHECK(ablation_rows(base, mixed).size() == 8u);

  CHECK(parse_axes(" use_gai ,query_mode") == std::vector<std::string>{"use_gai", "query_mode"});
  CHECK_THROWS_AS(parse_axes("use_gai,use_gai"), ValidationError);
  CHECK_THROWS_AS(parse_axes("depth"), ValidationError);
}

TEST_CASE("ablation records failing rows and continues") {
  DatasetSpec spec;
  spec.num_samples = 4;
  spec.height = spec.width = 32;
  auto train_set = generate_dataset(spec);
  spec.seed = 2;
  auto val_set = generate_dataset(spec);
  TrainConfig tc;
  tc.iters = 2;
  tc.batch_size = 2;
  const std::vector<std::string> qm{"query_mode"};

  auto ok = run_ablation(tiny_config(), qm, tc, train_set, val_set);
  REQUIRE(ok.size() == 3u);
  for (const auto& r : ok) {
    CHECK(r.ok);
    CHECK(std::isfinite(r.miou));
    CHECK(r.flops == count_gain_flops(r.config, 32, 32).total());
  }

  tc.lr0 = 1e300;
  int seen = 0;
  auto bad = run_ablation(tiny_config(), qm, tc, train_set, val_set, [&](const AblationRow&) { ++seen; });
  CHECK(seen == 3);
  for (const auto& r : bad) {
    CHECK_FALSE(r.ok);
    INFO(r.error);
    CHECK(r.error.find("diverged") != std::string::npos);
  }
  std::ostringstream os;
  write_ablation_csv(os, bad);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "row,config,flops,miou,status,error");
  int rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    CHECK(line.find(",,failed,") != std::string::npos);
  }
  CHECK(rows == 3);
}

TEST_CASE("gradient suite passes and is deterministic") {
  auto a = run_gradient_suite(7);
  CHECK(a.passed());
  CHECK(a.entries.size() > 30u);
  auto b = run_gradient_suite(7);
  REQUIRE(a.entries.size() == b.entries.size());
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    INFO(a.entries[i].name);
    CHECK(a.entries[i].passed);
    CHECK(a.entries[i].max_rel_error == b.entries[i].max_rel_error);
  }
}
