#include <cmath>
#include <set>
#include <sstream>
#include <string>

#include "doctest.h"
#include "gain/error.hpp"
#include "gain/train_eval.hpp"
#include "test_util.hpp"

using namespace gain;
using gain::testing::bit_identical;

namespace {

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

DatasetSpec small_spec(std::uint64_t seed, int n) {
  DatasetSpec s;
  s.seed = seed;
  s.num_samples = n;
  s.height = s.width = 32;
  return s;
}

}  // namespace

TEST_CASE("dataset is deterministic and labels are exact rasters") {
  DatasetSpec spec;
  spec.num_samples = 6;
  auto a = generate_dataset(spec);
  auto b = generate_dataset(spec);
  REQUIRE(a.size() == 6u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(bit_identical(a[i].image.data(), b[i].image.data()));
    CHECK(a[i].labels == b[i].labels);
    CHECK(a[i].image.shape() == Shape{3, 64, 64});
    for (auto v : a[i].image.data()) CHECK((v >= 0.0 && v <= 1.0));
  }
  spec.seed = 2;
  CHECK_FALSE(bit_identical(generate_dataset(spec)[0].image.data(), a[0].image.data()));

  spec.noise = 0.0;
  for (const auto& s : generate_dataset(spec)) {
    const auto area = s.height * s.width;
    for (std::int64_t p = 0; p < area; ++p) {
      const auto col = class_color(s.labels[p]);
      for (int c = 0; c < 3; ++c) REQUIRE(s.image.data()[c * area + p] == col[c]);
    }
  }
}

TEST_CASE("dataset covers every class") {
  DatasetSpec spec;
  spec.num_samples = 100;
  std::set<int> seen;
  for (const auto& s : generate_dataset(spec))
    for (auto l : s.labels) {
      REQUIRE(l >= 0);
      REQUIRE(l < kSyntheticClasses);
      seen.insert(l);
    }
  CHECK(seen.size() == static_cast<std::size_t>(kSyntheticClasses));

  DatasetSpec bad;
  bad.height = 48;
  CHECK_THROWS_AS(generate_dataset(bad), ValidationError);
}

TEST_CASE("miou examples") {
  ConfusionMatrix perfect(3);
  for (int c = 0; c < 3; ++c) perfect.add(c, c, 10 + c);
  CHECK(miou(perfect).mean == 1.0);

  ConfusionMatrix disjoint(2);
  disjoint.add(0, 1, 4);
  disjoint.add(1, 0, 2);
  CHECK(miou(disjoint).mean == 0.0);

  ConfusionMatrix cm(2);
  cm.add(0, 0, 3);
  cm.add(0, 1, 1);
  cm.add(1, 0, 1);
  cm.add(1, 1, 3);
  auto r = miou(cm);
  CHECK(r.per_class[0] == doctest::Approx(0.6));
  CHECK(r.per_class[1] == doctest::Approx(0.6));
  CHECK(r.mean == doctest::Approx(0.6));
  CHECK_FALSE(r.empty);

  auto empty = miou(ConfusionMatrix(4));
  CHECK(empty.empty);
  CHECK(empty.mean == 0.0);

  ConfusionMatrix partial(3);
  partial.add(0, 0, 5);
  partial.add(1, 0, 5);
  auto pr = miou(partial);
  CHECK(std::isnan(pr.per_class[2]));
  CHECK(pr.mean == doctest::Approx(0.25));
}

TEST_CASE("miou is permutation-equivariant") {
  Rng rng(3);
  ConfusionMatrix cm(4);
  for (int t = 0; t < 4; ++t)
    for (int p = 0; p < 4; ++p) cm.add(t, p, static_cast<std::int64_t>(rng.below(50)));
  const int perm[4] = {2, 0, 3, 1};
  ConfusionMatrix permuted(4);
  for (int t = 0; t < 4; ++t)
    for (int p = 0; p < 4; ++p) permuted.add(perm[t], perm[p], cm.at(t, p));
  auto a = miou(cm), b = miou(permuted);
  for (int c = 0; c < 4; ++c) CHECK(b.per_class[perm[c]] == a.per_class[c]);
  CHECK(b.mean == doctest::Approx(a.mean).epsilon(1e-15));
}

TEST_CASE("confusion accumulation is additive over batches") {
  Rng rng(4);
  auto logits = randn({4, 4, 5, 6}, rng);
  LabelMap labels{4, 5, 6, {}};
  for (int i = 0; i < 4 * 30; ++i)
    labels.labels.push_back(rng.uniform() < 0.1 ? kIgnoreIndex : static_cast<int>(rng.below(4)));

  ConfusionMatrix all(4), first(4), second(4);
  accumulate(all, logits, labels);
  LabelMap l1{2, 5, 6, {labels.labels.begin(), labels.labels.begin() + 60}};
  LabelMap l2{2, 5, 6, {labels.labels.begin() + 60, labels.labels.end()}};
  accumulate(first, slice(logits, 0, 0, 2), l1);
  accumulate(second, slice(logits, 0, 2, 2), l2);
  first += second;
  CHECK(first == all);

  std::int64_t valid = 0;
  for (auto l : labels.labels) valid += l != kIgnoreIndex;
  CHECK(all.total() == valid);
}

TEST_CASE("training with zero iterations returns the initialization") {
  auto cfg = tiny_config();
  auto train_set = generate_dataset(small_spec(1, 4));
  TrainConfig tc;
  tc.iters = 0;
  tc.seed = 5;
  auto r = train(cfg, train_set, {}, tc);
  CHECK(r.log.empty());
  auto init = initial_params(cfg, 5);
  auto a = r.params.named_parameters(), b = init.named_parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(bit_identical(a[i].second.data(), b[i].second.data()));
}

TEST_CASE("training is deterministic and logs the metrics schema") {
  auto cfg = tiny_config();
  auto train_set = generate_dataset(small_spec(1, 8));
  auto val_set = generate_dataset(small_spec(2, 4));
  TrainConfig tc;
  tc.iters = 4;
  tc.batch_size = 3;
  tc.eval_every = 2;
  std::string logs[2];
  for (auto& log : logs) {
    auto r = train(cfg, train_set, val_set, tc);
    std::ostringstream os;
    write_metrics_csv(os, r.log);
    log = os.str();
    CHECK(r.log.size() == 4u);
    CHECK(r.log[0].lr == 0.01);
    CHECK_FALSE(r.log[0].evaluated);
    CHECK(r.log[1].evaluated);
    CHECK(r.log[3].evaluated);
    CHECK(r.final_eval.miou.mean == r.log[3].val_miou);
  }
  CHECK(logs[0] == logs[1]);
  CHECK(logs[0].rfind("iter,lr,loss,aux_loss,val_miou\n0,0.01,", 0) == 0);
}

TEST_CASE("divergence aborts with the iteration index") {
  auto cfg = tiny_config();
  auto train_set = generate_dataset(small_spec(1, 4));
  TrainConfig tc;
  tc.iters = 5;
  tc.batch_size = 2;
  tc.lr0 = 1e300;
  try {
    train(cfg, train_set, {}, tc);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    // The first step leaves weights near 1e300 but finite; the next forward overflows.
    CHECK(e.iteration() == 1);
    CHECK(std::string(e.what()).find("iteration 1") != std::string::npos);
  }
}

TEST_CASE("evaluation of an untrained model") {
  GainConfig cfg;
  DatasetSpec spec;
  spec.seed = 9;
  spec.num_samples = 16;
  auto val = generate_dataset(spec);
  auto p = initial_params(cfg, 1);
  auto a = evaluate(p, cfg, val, 8);
  auto b = evaluate(p, cfg, val, 8);
  CHECK(a.confusion == b.confusion);
  CHECK(a.confusion.total() == 16 * 64 * 64);
  CHECK(a.miou.mean < 0.4);

  auto cfg5 = cfg;
  cfg5.num_classes = 5;
  CHECK_THROWS_AS(evaluate(p, cfg5, val), ValidationError);
}
