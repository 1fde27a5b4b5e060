#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gain/rng.hpp"
#include "gain/tensor.hpp"

namespace gain {

// ---------------------------------------------------------------------------
// Convolution

struct ConvParams {
  Tensor weight;  // [C_out, C_in, k, k]
  Tensor bias;    // [C_out] or undefined
  int stride = 1;
  int padding = 0;

  std::int64_t out_channels() const { return weight.dim(0); }
  std::int64_t in_channels() const { return weight.dim(1); }
  std::int64_t kernel() const { return weight.dim(2); }
};

// k in {1, 3}; padding (k-1)/2. Weights ~ N(0, (init_gain^2) / fan_in).
ConvParams make_conv(std::int64_t in_channels, std::int64_t out_channels, int kernel,
                     int stride, bool with_bias, Rng& rng, double init_gain = 1.0);

// x: [N, C_in, H, W] -> [N, C_out, (H + 2p - k)/s + 1, (W + 2p - k)/s + 1]
Tensor conv2d(const Tensor& x, const ConvParams& p);

// ---------------------------------------------------------------------------
// Normalization

struct NormParams {
  Tensor scale;  // [C]
  Tensor shift;  // [C]
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  static NormParams make(std::int64_t channels);
  std::int64_t channels() const { return scale.dim(0); }
};

// Training mode normalizes with biased batch statistics and folds the batch
// mean / unbiased variance into the running estimates. Eval mode uses the
// running estimates only.
Tensor batch_norm(const Tensor& x, NormParams& p, bool training);

// ---------------------------------------------------------------------------
// Resampling and pooling

// Half-pixel-centre bilinear resize: source coordinate
// s = (d + 0.5) * in / out - 0.5 clamped to [0, in - 1].
Tensor bilinear_resize(const Tensor& x, std::int64_t out_h, std::int64_t out_w);

// [N, C, H, W] -> [N, C, 1, 1]
Tensor global_avg_pool(const Tensor& x);

// ---------------------------------------------------------------------------
// Losses

inline constexpr int kIgnoreIndex = 255;

struct LabelMap {
  std::int64_t n = 0, h = 0, w = 0;
  std::vector<std::int32_t> labels;  // [n, h, w] row-major

  std::int32_t at(std::int64_t b, std::int64_t y, std::int64_t x) const {
    return labels[static_cast<std::size_t>((b * h + y) * w + x)];
  }
};

// Nearest-neighbour resampling using the same half-pixel convention as
// bilinear_resize: source index floor((d + 0.5) * in / out).
LabelMap resize_labels_nearest(const LabelMap& labels, std::int64_t out_h,
                               std::int64_t out_w);

struct OhemConfig {
  double prob_threshold = 0.7;
  double min_kept_fraction = 1.0 / 16.0;
};

// Which pixels contributed to an OHEM loss. When `frozen` is set on input the
// mask is reused instead of recomputed (used by gradient checks, since the
// selection is piecewise constant in the logits).
struct OhemSelection {
  std::vector<std::uint8_t> mask;
  bool frozen = false;
  std::int64_t kept = 0;
};

// Pixelwise softmax cross-entropy averaged over hard pixels (true-class
// probability below the threshold). If fewer than
// ceil(min_kept_fraction * valid) pixels are hard, the lowest-probability
// valid pixels are kept instead. Ignored pixels never contribute; with no
// valid pixel the loss is 0 with zero gradient.
Tensor ohem_cross_entropy(const Tensor& logits, const LabelMap& labels,
                          const OhemConfig& cfg, int ignore_index = kIgnoreIndex,
                          OhemSelection* selection = nullptr);

// ---------------------------------------------------------------------------
// Optimization

struct LrSchedule {
  double lr0 = 0.01;
  long max_iter = 1;
  double power = 0.9;
};

// lr0 * (1 - iter / max_iter)^power for 0 <= iter <= max_iter.
double poly_lr(const LrSchedule& s, long iter);

struct SgdConfig {
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

// v <- m v + g + wd * theta;  theta <- theta - lr * v
void sgd_step(std::span<double> param, std::span<const double> grad,
              std::span<double> velocity, double lr, const SgdConfig& cfg);

class Sgd {
 public:
  explicit Sgd(SgdConfig cfg) : cfg_(cfg) {}
  // Parameters without a gradient are skipped (they were not in the graph).
  void step(std::span<Tensor> params, double lr);

 private:
  SgdConfig cfg_;
  std::vector<std::vector<double>> velocity_;
};

}  // namespace gain
