#include "gain/grad_suite.hpp"

#include <chrono>

#include "gain/attention.hpp"
#include "gain/gain_net.hpp"
#include "gain/grad_check.hpp"
#include "gain/nn.hpp"
#include "gain/ops.hpp"
#include "gain/rng.hpp"

namespace gain {

namespace {

// Projects onto fixed random weights so each output element gets a distinct
// upstream gradient.
Tensor weighted_sum(const Tensor& t, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(t, randn(t.shape(), rng)));
}

LabelMap random_labels(std::int64_t n, std::int64_t h, std::int64_t w, int classes, Rng& rng) {
  LabelMap l{n, h, w, {}};
  for (std::int64_t i = 0; i < n * h * w; ++i) {
    l.labels.push_back(rng.uniform() < 0.1 ? kIgnoreIndex : static_cast<int>(rng.below(classes)));
  }
  return l;
}

class Suite {
 public:
  Suite(GradSuiteResult& r, const GradSuiteProgress& progress) : r_(r), progress_(progress) {}

  void check(const std::string& name, const ScalarFn& fn, const std::vector<Tensor>& inputs,
             const GradCheckOptions& opt = {}) {
    const auto rep = grad_check(fn, inputs, opt);
    GradSuiteEntry e{name, rep.entries.size(), rep.max_rel_error, opt.tolerance, rep.passed};
    r_.entries.push_back(e);
    if (progress_) progress_(e);
  }

 private:
  GradSuiteResult& r_;
  const GradSuiteProgress& progress_;
};

void tensor_ops(Suite& s, Rng& rng) {
  const Shape shape{2, 3, 4};
  auto a = randn(shape, rng), b = randn(shape, rng);
  auto pos = rand_uniform(shape, rng, 0.5, 2.0);
  auto col = randn({2, 3, 1}, rng);
  s.check("add", [](const auto& in) { return weighted_sum(add(in[0], in[1]), 1); }, {a, b});
  s.check("sub", [](const auto& in) { return weighted_sum(sub(in[0], in[1]), 2); }, {a, b});
  s.check("mul", [](const auto& in) { return weighted_sum(mul(in[0], in[1]), 3); }, {a, b});
  s.check("div", [](const auto& in) { return weighted_sum(div(in[0], in[1]), 4); }, {a, pos});
  s.check("broadcast", [](const auto& in) { return weighted_sum(mul(add(in[0], in[1]), in[1]), 5); },
          {a, col});
  s.check("exp", [](const auto& in) { return weighted_sum(exp(in[0]), 6); }, {a});
  s.check("log", [](const auto& in) { return weighted_sum(log(in[0]), 7); }, {pos});
  s.check("relu", [](const auto& in) { return weighted_sum(relu(in[0]), 8); }, {a});
  s.check("sum", [](const auto& in) { return mul(sum(mul(in[0], in[0])), 0.5); }, {a});
  s.check("mean", [](const auto& in) { return mean(mul(in[0], in[0])); }, {a});
  for (std::size_t axis = 0; axis < 3; ++axis) {
    s.check("softmax axis " + std::to_string(axis),
            [axis](const auto& in) { return weighted_sum(softmax(in[0], axis), 9); }, {a});
    s.check("concat axis " + std::to_string(axis),
            [axis](const auto& in) { return weighted_sum(concat({in[0], in[1]}, axis), 10); }, {a, b});
    s.check("slice axis " + std::to_string(axis),
            [axis](const auto& in) { return weighted_sum(slice(in[0], axis, 1, 1), 11); }, {a});
  }
  s.check("reshape", [](const auto& in) { return weighted_sum(reshape(in[0], {4, -1}), 12); }, {a});
  s.check("transpose_last2", [](const auto& in) { return weighted_sum(transpose_last2(in[0]), 13); },
          {a});
  s.check("matmul", [](const auto& in) { return weighted_sum(matmul(in[0], in[1]), 14); },
          {randn({3, 5}, rng), randn({5, 2}, rng)});
  s.check("bmm", [](const auto& in) { return weighted_sum(bmm(in[0], in[1]), 15); },
          {randn({2, 3, 4}, rng), randn({2, 4, 3}, rng)});
}

void nn_ops(Suite& s, Rng& rng) {
  for (int k : {1, 3}) {
    for (int stride : {1, 2}) {
      auto p = make_conv(3, 4, k, stride, true, rng);
      p.bias = randn({4}, rng);
      s.check("conv2d " + std::to_string(k) + "x" + std::to_string(k) + " stride " + std::to_string(stride),
              [p](const auto& in) {
                ConvParams q = p;
                q.weight = in[1];
                q.bias = in[2];
                return weighted_sum(conv2d(in[0], q), 16);
              },
              {randn({2, 3, 5, 4}, rng), p.weight, p.bias});
    }
  }
  auto img = randn({1, 2, 3, 5}, rng);
  s.check("bilinear_resize up", [](const auto& in) { return weighted_sum(bilinear_resize(in[0], 7, 9), 17); },
          {img});
  s.check("bilinear_resize down",
          [](const auto& in) { return weighted_sum(bilinear_resize(in[0], 2, 3), 18); }, {img});
  s.check("global_avg_pool", [](const auto& in) { return weighted_sum(global_avg_pool(in[0]), 19); },
          {img});

  auto x = randn({3, 2, 2, 3}, rng);
  auto np = NormParams::make(2);
  np.scale = randn({2}, rng);
  np.shift = randn({2}, rng);
  for (bool training : {true, false}) {
    s.check(training ? "batch_norm train" : "batch_norm eval",
            [np, training](const auto& in) {
              NormParams q = np;
              q.scale = in[1];
              q.shift = in[2];
              return weighted_sum(batch_norm(in[0], q, training), 20);
            },
            {x, np.scale, np.shift});
  }

  auto labels = random_labels(2, 3, 3, 4, rng);
  auto logits = randn({2, 4, 3, 3}, rng, 2.0);
  const OhemConfig ohem{0.5, 0.25};
  OhemSelection sel;
  ohem_cross_entropy(logits, labels, ohem, kIgnoreIndex, &sel);
  sel.frozen = true;
  s.check("ohem_cross_entropy", [&](const auto& in) {
    OhemSelection copy = sel;
    return ohem_cross_entropy(in[0], labels, ohem, kIgnoreIndex, &copy);
  }, {logits});
}

GaiConfig small_gai() {
  GaiConfig cfg;
  cfg.channels = 6;
  cfg.d_k = 3;
  cfg.d_v = 4;
  cfg.out_channels = 5;
  return cfg;
}

void attention_ops(Suite& s, Rng& rng) {
  const auto rows = anchor_map(5, 3), cols = anchor_map(4, 2);
  s.check("criss_cross_logits",
          [&](const auto& in) { return weighted_sum(criss_cross_logits(in[0], in[1], rows, cols), 21); },
          {randn({2, 3, 5, 4}, rng), randn({2, 3, 3, 2}, rng)});
  auto w = softmax(randn({2, 5, 4, 4}, rng), 3).detach();
  s.check("criss_cross_aggregate",
          [&](const auto& in) { return weighted_sum(criss_cross_aggregate(in[0], in[1], rows, cols), 22); },
          {w, randn({2, 3, 3, 2}, rng)});

  auto run = [&](const std::string& name, const GaiConfig& cfg) {
    auto p = GaiParams::make(cfg, 4, 6, rng);
    std::vector<Tensor> inputs{randn({1, 4, 6, 6}, rng), randn({1, 6, 3, 3}, rng)};
    for (auto& [n, t] : p.named_parameters("")) inputs.push_back(t);
    s.check(name, [&](const auto& in) { return weighted_sum(gai_forward(in[0], in[1], p, cfg), 23); },
            inputs);
  };
  for (auto kind : {AttentionKind::criss_cross, AttentionKind::full}) {
    for (auto source : {KeySource::low_res, KeySource::high_res}) {
      auto cfg = small_gai();
      cfg.attention = kind;
      cfg.key_source = source;
      run("gai_forward " + to_string(kind) + "/" + to_string(source), cfg);
    }
  }
  for (auto mode : {QueryMode::high_only, QueryMode::low_only}) {
    auto cfg = small_gai();
    cfg.query_mode = mode;
    run("gai_forward criss_cross/" + to_string(mode), cfg);
  }
  auto cfg = small_gai();
  cfg.recurrence = 3;
  run("gai_forward criss_cross/R3", cfg);
}

void network(Suite& s, Rng& rng) {
  GainConfig cfg;
  auto p = GainParams::make(cfg, rng);
  auto x = rand_uniform({2, 3, 32, 32}, rng, 0.0, 1.0);
  auto labels = random_labels(2, 32, 32, cfg.num_classes, rng);
  LossSelections sel;
  total_loss(gain_forward(x, p, cfg, true), labels, cfg.aux_weight, {}, &sel);
  sel.main.frozen = sel.aux4.frozen = sel.aux5.frozen = true;

  GradCheckOptions opt;
  opt.tolerance = 1e-3;
  opt.sample_count = 50;
  opt.sample_seed = rng.next_u64();
  s.check("gain network (50 sampled parameters)",
          [&](const auto&) {
            LossSelections copy = sel;
            return total_loss(gain_forward(x, p, cfg, true), labels, cfg.aux_weight, {}, &copy).total;
          },
          p.parameters(), opt);
}

}  // namespace

bool GradSuiteResult::passed() const {
  for (const auto& e : entries)
    if (!e.passed) return false;
  return !entries.empty();
}

GradSuiteResult run_gradient_suite(std::uint64_t seed, const GradSuiteProgress& progress) {
  const auto t0 = std::chrono::steady_clock::now();
  GradSuiteResult r;
  Suite s(r, progress);
  Rng root(seed);
  Rng r1 = root.fork(1), r2 = root.fork(2), r3 = root.fork(3), r4 = root.fork(4);
  tensor_ops(s, r1);
  nn_ops(s, r2);
  attention_ops(s, r3);
  network(s, r4);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace gain
