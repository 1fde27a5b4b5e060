#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "gain/error.hpp"
#include "gain/train_eval.hpp"

namespace gain {

void TrainConfig::validate() const {
  if (iters < 0) throw ValidationError("train.iters must be >= 0");
  if (batch_size < 1) throw ValidationError("train.batch must be >= 1");
  if (!(lr0 > 0.0)) throw ValidationError("train.lr0 must be positive");
  if (!(power > 0.0)) throw ValidationError("train.power must be positive");
  if (eval_every < 0) throw ValidationError("train.eval_every must be >= 0");
}

GainParams initial_params(const GainConfig& cfg, std::uint64_t seed) {
  Rng rng = Rng(seed).fork(0);
  return GainParams::make(cfg, rng);
}

TrainResult train(const GainConfig& cfg, const std::vector<SegSample>& train_set,
                  const std::vector<SegSample>& val_set, const TrainConfig& tc,
                  const ProgressFn& progress) {
  cfg.validate();
  tc.validate();
  if (train_set.empty() && tc.iters > 0) throw ValidationError("training set is empty");

  Rng order_rng = Rng(tc.seed).fork(1);
  TrainResult r{initial_params(cfg, tc.seed), {}, {}};
  auto params = r.params.parameters();
  Sgd sgd(tc.sgd);
  const LrSchedule schedule{tc.lr0, std::max(tc.iters, 1L), tc.power};

  std::vector<std::size_t> order(train_set.size());
  std::size_t cursor = order.size();
  for (long it = 0; it < tc.iters; ++it) {
    std::vector<std::size_t> idx;
    while (idx.size() < static_cast<std::size_t>(tc.batch_size)) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[order_rng.below(i + 1)]);
        cursor = 0;
      }
      idx.push_back(order[cursor++]);
    }
    auto batch = make_batch(train_set, idx);
    LossTerms loss;
    try {
      loss = total_loss(gain_forward(batch.images, r.params, cfg, true), batch.labels, cfg.aux_weight,
                        tc.ohem);
    } catch (const ValidationError& e) {
      // Shapes were accepted on the first pass, so a later rejection comes
      // from non-finite activations.
      if (it == 0) throw;
      throw DivergenceError(it, "training diverged at iteration " + std::to_string(it) + ": " + e.what());
    }

    MetricsRow row;
    row.iter = it;
    row.lr = poly_lr(schedule, it);
    row.loss = loss.total.item();
    row.aux_loss = loss.aux.defined() ? loss.aux.item() : 0.0;
    if (!std::isfinite(row.loss)) {
      throw DivergenceError(it, "training diverged: non-finite loss at iteration " + std::to_string(it));
    }
    for (auto& p : params) p.zero_grad();
    backward(loss.total);
    sgd.step(params, row.lr);
    for (const auto& p : params)
      for (double v : p.data())
        if (!std::isfinite(v)) {
          throw DivergenceError(it, "training diverged: non-finite parameter after iteration " +
                                        std::to_string(it));
        }

    const bool last = it + 1 == tc.iters;
    if (last || (tc.eval_every > 0 && (it + 1) % tc.eval_every == 0)) {
      try {
        row.val_miou = evaluate(r.params, cfg, val_set).miou.mean;
      } catch (const ValidationError& e) {
        throw DivergenceError(it, "training diverged at iteration " + std::to_string(it) + ": " + e.what());
      }
      row.evaluated = true;
    }
    r.log.push_back(row);
    if (progress) progress(row);
  }
  if (!val_set.empty()) r.final_eval = evaluate(r.params, cfg, val_set);
  return r;
}

void write_metrics_csv(std::ostream& os, std::span<const MetricsRow> rows) {
  os << "iter,lr,loss,aux_loss,val_miou\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%.17g,", r.iter, r.lr, r.loss, r.aux_loss);
    os << buf;
    if (r.evaluated) {
      std::snprintf(buf, sizeof buf, "%.17g", r.val_miou);
      os << buf;
    }
    os << '\n';
  }
}

}  // namespace gain
