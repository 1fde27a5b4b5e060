#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gain/attention.hpp"
#include "gain/nn.hpp"
#include "gain/rng.hpp"
#include "gain/tensor.hpp"

namespace gain {

struct BackboneConfig {
  std::vector<std::int64_t> channels{32, 64, 128, 256};  // C2..C5
  int blocks = 2;                                        // per stage, >= 1
  std::int64_t in_channels = 3;

  void validate() const;
};

struct FeaturePyramid {
  Tensor c2, c3, c4, c5;  // strides 4, 8, 16, 32
};

struct GainConfig {
  BackboneConfig backbone;
  GaiConfig gai;
  int num_classes = 4;
  bool use_gai = true;
  bool use_aux = true;
  bool use_spatial_c2 = true;
  bool use_gap = true;
  std::int64_t fused_channels = 128;
  std::int64_t aux_channels = 64;
  double aux_weight = 1.0;

  void validate() const;
};

struct ConvBn {
  ConvParams conv;
  NormParams norm;
};

Tensor conv_bn_relu(const Tensor& x, ConvBn& layer, bool training);

struct BackboneParams {
  ConvBn stem;                             // stride 2
  std::vector<std::vector<ConvBn>> stages;  // block 0 downsamples, the rest are residual
};

struct AuxHead {
  ConvBn conv;  // 3x3
  ConvParams classifier;
};

// Parameters for one network configuration. Optional groups are only built
// when the corresponding toggle is on; a forward pass with a toggle off
// ignores groups that happen to be present.
struct GainParams {
  BackboneParams backbone;
  std::optional<ConvParams> gap_conv;  // C5 -> C5, zero-initialized
  std::optional<GaiParams> gai4, gai5;
  std::optional<ConvParams> reduce4, reduce5;  // bilinear baseline: C4/C5 -> gai.out_channels
  ConvBn fuse_reduce;                         // 1x1
  ConvBn fuse_spatial;                        // 3x3
  ConvParams classifier;
  std::optional<AuxHead> aux4, aux5;

  static GainParams make(const GainConfig& cfg, Rng& rng);

  // Trainable tensors in a fixed order with stable dotted names.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  // Every normalization layer, same order as named_norms().
  std::vector<std::pair<std::string, NormParams*>> named_norms();
};

void check_input_size(std::int64_t h, std::int64_t w);

FeaturePyramid backbone_forward(const Tensor& image, BackboneParams& params, bool training);

// c5 + conv1x1(global_avg_pool(c5)), broadcast over all positions.
Tensor gap_enhance(const Tensor& c5, const ConvParams& conv);

struct GainOutput {
  Tensor logits;  // [N, K, H, W]
  Tensor aux4;    // [N, K, H/8, W/8], undefined without aux heads
  Tensor aux5;
};

GainOutput gain_forward(const Tensor& image, GainParams& params, const GainConfig& cfg,
                        bool training);

struct LossTerms {
  Tensor total;
  Tensor main;
  Tensor aux;  // aux4 + aux5 loss; undefined without aux heads
};

// Selections for the three OHEM terms, so gradient checks can freeze them.
struct LossSelections {
  OhemSelection main, aux4, aux5;
};

// total = L(logits) + aux_weight * (L(aux4) + L(aux5)); aux labels are
// nearest-downsampled to the aux resolution.
LossTerms total_loss(const GainOutput& out, const LabelMap& labels, double aux_weight,
                     const OhemConfig& ohem, LossSelections* selections = nullptr);

// ---------------------------------------------------------------------------
// Checkpoints

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Parameters plus normalization running statistics.
NamedTensors state_dict(GainParams& params);
// Copies values from `state` into `params`. Every expected entry must be
// present with a matching shape.
void load_state_dict(GainParams& params, const NamedTensors& state);

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::filesystem::path& path);

}  // namespace gain
