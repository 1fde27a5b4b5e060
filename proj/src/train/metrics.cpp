#include <cmath>
#include <limits>

#include "gain/error.hpp"
#include "gain/train_eval.hpp"

namespace gain {

ConfusionMatrix::ConfusionMatrix(int num_classes) : k_(num_classes) {
  if (num_classes < 1) throw ValidationError("confusion matrix needs at least one class");
  counts_.assign(static_cast<std::size_t>(k_ * k_), 0);
}

void ConfusionMatrix::add(int truth, int pred, std::int64_t count) {
  if (truth < 0 || truth >= k_ || pred < 0 || pred >= k_) {
    throw ValidationError("confusion matrix index (" + std::to_string(truth) + ", " +
                          std::to_string(pred) + ") out of range for " + std::to_string(k_) +
                          " classes");
  }
  counts_[static_cast<std::size_t>(truth * k_ + pred)] += count;
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t s = 0;
  for (auto c : counts_) s += c;
  return s;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw ValidationError("cannot add confusion matrices of different size");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

MiouResult miou(const ConfusionMatrix& cm) {
  const int k = cm.num_classes();
  MiouResult r;
  r.per_class.assign(static_cast<std::size_t>(k), std::numeric_limits<double>::quiet_NaN());
  double sum = 0.0;
  int counted = 0;
  for (int c = 0; c < k; ++c) {
    std::int64_t row = 0, col = 0;
    for (int j = 0; j < k; ++j) {
      row += cm.at(c, j);
      col += cm.at(j, c);
    }
    const auto uni = row + col - cm.at(c, c);
    if (uni == 0) continue;
    r.per_class[c] = static_cast<double>(cm.at(c, c)) / static_cast<double>(uni);
    sum += r.per_class[c];
    ++counted;
  }
  r.empty = counted == 0;
  r.mean = r.empty ? 0.0 : sum / counted;
  return r;
}

void accumulate(ConfusionMatrix& cm, const Tensor& logits, const LabelMap& labels) {
  if (logits.rank() != 4 || logits.dim(0) != labels.n || logits.dim(2) != labels.h ||
      logits.dim(3) != labels.w) {
    throw ValidationError("logits " + shape_str(logits.shape()) + " do not match labels");
  }
  const auto k = logits.dim(1);
  if (k != cm.num_classes()) {
    throw ValidationError("logits have " + std::to_string(k) + " classes, confusion matrix " +
                          std::to_string(cm.num_classes()));
  }
  const auto area = labels.h * labels.w;
  const auto d = logits.data();
  for (std::int64_t b = 0; b < labels.n; ++b)
    for (std::int64_t p = 0; p < area; ++p) {
      const int truth = labels.labels[b * area + p];
      if (truth == kIgnoreIndex) continue;
      int best = 0;
      for (std::int64_t c = 1; c < k; ++c)
        if (d[(b * k + c) * area + p] > d[(b * k + best) * area + p]) best = static_cast<int>(c);
      cm.add(truth, best);
    }
}

EvalResult evaluate(GainParams& params, const GainConfig& cfg,
                    const std::vector<SegSample>& samples, int batch_size) {
  if (batch_size < 1) throw ValidationError("evaluation batch size must be >= 1");
  if (params.classifier.out_channels() != cfg.num_classes) {
    throw ValidationError("model predicts " + std::to_string(params.classifier.out_channels()) +
                          " classes but the configuration has " +
                          std::to_string(cfg.num_classes));
  }
  EvalResult r{ConfusionMatrix(cfg.num_classes), {}};
  NoGradGuard no_grad;
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(samples.size(), start + batch_size); ++i) idx.push_back(i);
    auto b = make_batch(samples, idx);
    auto out = gain_forward(b.images, params, cfg, false);
    accumulate(r.confusion, out.logits, b.labels);
  }
  r.miou = miou(r.confusion);
  return r;
}

}  // namespace gain
