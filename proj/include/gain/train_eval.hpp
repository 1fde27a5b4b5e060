#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "gain/gain_net.hpp"
#include "gain/nn.hpp"
#include "gain/tensor.hpp"

namespace gain {

// ---------------------------------------------------------------------------
// Synthetic dataset: class 0 background, 1 rectangle, 2 disk, 3 stripe.

inline constexpr int kSyntheticClasses = 4;

struct DatasetSpec {
  std::uint64_t seed = 1;
  int num_samples = 256;
  std::int64_t height = 64;
  std::int64_t width = 64;
  double noise = 0.15;  // per-shape colour jitter amplitude; per-pixel noise std is half of it
  int min_shapes = 1;
  int max_shapes = 3;

  void validate() const;
};

struct SegSample {
  Tensor image;                       // [3, H, W], values in [0, 1]
  std::vector<std::int32_t> labels;   // [H, W]
  std::int64_t height = 0, width = 0;
};

// Base RGB colour of each class.
std::span<const double, 3> class_color(int cls);

std::vector<SegSample> generate_dataset(const DatasetSpec& spec);

struct Batch {
  Tensor images;  // [N, 3, H, W]
  LabelMap labels;
};

Batch make_batch(const std::vector<SegSample>& samples, std::span<const std::size_t> indices);

// ---------------------------------------------------------------------------
// Evaluation

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  int num_classes() const { return k_; }
  // Rows are ground truth, columns predictions.
  std::int64_t at(int truth, int pred) const { return counts_[static_cast<std::size_t>(truth * k_ + pred)]; }
  void add(int truth, int pred, std::int64_t count = 1);
  std::int64_t total() const;
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix& other) const = default;

 private:
  int k_;
  std::vector<std::int64_t> counts_;
};

struct MiouResult {
  std::vector<double> per_class;  // NaN for classes with an empty union
  double mean = 0.0;
  bool empty = false;  // no class had a non-empty union; mean is defined as 0
};

MiouResult miou(const ConfusionMatrix& cm);

// Argmax over the class axis of [N, K, H, W] logits; ignored pixels skipped.
void accumulate(ConfusionMatrix& cm, const Tensor& logits, const LabelMap& labels);

struct EvalResult {
  ConfusionMatrix confusion{kSyntheticClasses};
  MiouResult miou;
};

// Single-scale inference in eval mode.
EvalResult evaluate(GainParams& params, const GainConfig& cfg,
                    const std::vector<SegSample>& samples, int batch_size = 8);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  long iters = 2000;
  int batch_size = 8;
  std::uint64_t seed = 0;
  double lr0 = 0.01;
  double power = 0.9;
  SgdConfig sgd;
  OhemConfig ohem;
  long eval_every = 250;  // 0 evaluates only after the last iteration

  void validate() const;
};

struct MetricsRow {
  long iter = 0;
  double lr = 0.0;
  double loss = 0.0;      // total loss
  double aux_loss = 0.0;  // summed aux terms before weighting (0 without aux heads)
  double val_miou = 0.0;
  bool evaluated = false;
};

struct TrainResult {
  GainParams params;
  std::vector<MetricsRow> log;
  EvalResult final_eval;
};

using ProgressFn = std::function<void(const MetricsRow&)>;

// Parameters train() starts from for a given seed.
GainParams initial_params(const GainConfig& cfg, std::uint64_t seed);

// Poly-schedule SGD on `train_set`, evaluating on `val_set`. Throws
// DivergenceError on a non-finite loss or parameter.
TrainResult train(const GainConfig& cfg, const std::vector<SegSample>& train_set,
                  const std::vector<SegSample>& val_set, const TrainConfig& tc,
                  const ProgressFn& progress = {});

// Header iter,lr,loss,aux_loss,val_miou; val_miou is empty on rows without an
// evaluation.
void write_metrics_csv(std::ostream& os, std::span<const MetricsRow> rows);

}  // namespace gain
