#include <cmath>
#include <map>

#include "gain/error.hpp"
#include "gain/gain_net.hpp"
#include "gain/ops.hpp"

namespace gain {

namespace {

const double kReluGain = std::sqrt(2.0);

ConvBn make_conv_bn(std::int64_t in, std::int64_t out, int kernel, int stride, Rng& rng) {
  return {make_conv(in, out, kernel, stride, false, rng, kReluGain), NormParams::make(out)};
}

AuxHead make_aux(const GainConfig& cfg, Rng& rng) {
  return {make_conv_bn(cfg.gai.out_channels, cfg.aux_channels, 3, 1, rng),
          make_conv(cfg.aux_channels, cfg.num_classes, 1, 1, true, rng)};
}

std::int64_t classifier_in(const GainConfig& cfg) {
  return cfg.fused_channels + (cfg.use_spatial_c2 ? cfg.backbone.channels[0] : 0);
}

void add_conv(std::vector<std::pair<std::string, Tensor>>& out, const std::string& name,
              const ConvParams& c) {
  out.emplace_back(name + ".weight", c.weight);
  if (c.bias.defined()) out.emplace_back(name + ".bias", c.bias);
}

void add_conv_bn(std::vector<std::pair<std::string, Tensor>>& out, const std::string& name,
                 const ConvBn& l) {
  add_conv(out, name + ".conv", l.conv);
  out.emplace_back(name + ".bn.scale", l.norm.scale);
  out.emplace_back(name + ".bn.shift", l.norm.shift);
}

template <class T>
const T& require(const std::optional<T>& group, const char* what) {
  if (!group) throw ValidationError(std::string("parameters for ") + what + " are missing");
  return *group;
}

Tensor head(const Tensor& x, AuxHead& h, bool training) {
  return conv2d(conv_bn_relu(x, h.conv, training), h.classifier);
}

}  // namespace

void BackboneConfig::validate() const {
  if (channels.size() != 4) throw ValidationError("backbone.channels needs 4 entries (C2..C5)");
  for (auto c : channels)
    if (c < 2) throw ValidationError("backbone.channels entries must be >= 2");
  if (blocks < 1) throw ValidationError("backbone.blocks must be >= 1");
  if (in_channels < 1) throw ValidationError("backbone.in_channels must be >= 1");
}

void GainConfig::validate() const {
  backbone.validate();
  gai.validate();
  if (num_classes < 2) throw ValidationError("num_classes must be >= 2");
  if (fused_channels < 1) throw ValidationError("fused_channels must be >= 1");
  if (aux_channels < 1) throw ValidationError("aux_channels must be >= 1");
  if (!(aux_weight >= 0.0) || !std::isfinite(aux_weight)) {
    throw ValidationError("aux_weight must be a finite non-negative number");
  }
}

Tensor conv_bn_relu(const Tensor& x, ConvBn& layer, bool training) {
  return relu(batch_norm(conv2d(x, layer.conv), layer.norm, training));
}

GainParams GainParams::make(const GainConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto& ch = cfg.backbone.channels;
  GainParams p;
  p.backbone.stem = make_conv_bn(cfg.backbone.in_channels, ch[0] / 2, 3, 2, rng);
  std::int64_t prev = ch[0] / 2;
  for (std::size_t s = 0; s < 4; ++s) {
    std::vector<ConvBn> stage;
    stage.push_back(make_conv_bn(prev, ch[s], 3, 2, rng));
    for (int b = 1; b < cfg.backbone.blocks; ++b) stage.push_back(make_conv_bn(ch[s], ch[s], 3, 1, rng));
    p.backbone.stages.push_back(std::move(stage));
    prev = ch[s];
  }

  if (cfg.use_gap) {
    ConvParams g = make_conv(ch[3], ch[3], 1, 1, true, rng);
    g.weight = Tensor::zeros(g.weight.shape(), true);
    p.gap_conv = g;
  }
  const auto up = cfg.gai.out_channels;
  if (cfg.use_gai) {
    p.gai4 = GaiParams::make(cfg.gai, ch[1], ch[2], rng);
    p.gai5 = GaiParams::make(cfg.gai, ch[1], ch[3], rng);
  } else {
    p.reduce4 = make_conv(ch[2], up, 1, 1, true, rng);
    p.reduce5 = make_conv(ch[3], up, 1, 1, true, rng);
  }
  p.fuse_reduce = make_conv_bn(ch[1] + 2 * up, cfg.fused_channels, 1, 1, rng);
  p.fuse_spatial = make_conv_bn(cfg.fused_channels, cfg.fused_channels, 3, 1, rng);
  p.classifier = make_conv(classifier_in(cfg), cfg.num_classes, 1, 1, true, rng);
  if (cfg.use_aux) {
    p.aux4 = make_aux(cfg, rng);
    p.aux5 = make_aux(cfg, rng);
  }
  return p;
}

std::vector<std::pair<std::string, Tensor>> GainParams::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  add_conv_bn(out, "backbone.stem", backbone.stem);
  for (std::size_t s = 0; s < backbone.stages.size(); ++s)
    for (std::size_t b = 0; b < backbone.stages[s].size(); ++b)
      add_conv_bn(out, "backbone.stage" + std::to_string(s + 2) + ".block" + std::to_string(b),
                  backbone.stages[s][b]);
  if (gap_conv) add_conv(out, "gap.conv", *gap_conv);
  if (gai4) for (auto& e : gai4->named_parameters("gai4.")) out.push_back(e);
  if (gai5) for (auto& e : gai5->named_parameters("gai5.")) out.push_back(e);
  if (reduce4) add_conv(out, "up4.reduce", *reduce4);
  if (reduce5) add_conv(out, "up5.reduce", *reduce5);
  add_conv_bn(out, "fuse.reduce", fuse_reduce);
  add_conv_bn(out, "fuse.spatial", fuse_spatial);
  add_conv(out, "classifier", classifier);
  if (aux4) {
    add_conv_bn(out, "aux4.conv", aux4->conv);
    add_conv(out, "aux4.classifier", aux4->classifier);
  }
  if (aux5) {
    add_conv_bn(out, "aux5.conv", aux5->conv);
    add_conv(out, "aux5.classifier", aux5->classifier);
  }
  return out;
}

std::vector<Tensor> GainParams::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::vector<std::pair<std::string, NormParams*>> GainParams::named_norms() {
  std::vector<std::pair<std::string, NormParams*>> out;
  out.emplace_back("backbone.stem.bn", &backbone.stem.norm);
  for (std::size_t s = 0; s < backbone.stages.size(); ++s)
    for (std::size_t b = 0; b < backbone.stages[s].size(); ++b)
      out.emplace_back("backbone.stage" + std::to_string(s + 2) + ".block" + std::to_string(b) +
                           ".bn",
                       &backbone.stages[s][b].norm);
  out.emplace_back("fuse.reduce.bn", &fuse_reduce.norm);
  out.emplace_back("fuse.spatial.bn", &fuse_spatial.norm);
  if (aux4) out.emplace_back("aux4.conv.bn", &aux4->conv.norm);
  if (aux5) out.emplace_back("aux5.conv.bn", &aux5->conv.norm);
  return out;
}

void check_input_size(std::int64_t h, std::int64_t w) {
  if (h < 32 || w < 32 || h % 32 != 0 || w % 32 != 0) {
    throw ValidationError("input size " + std::to_string(h) + "x" + std::to_string(w) +
                          " must be a positive multiple of 32 in both dimensions");
  }
}

FeaturePyramid backbone_forward(const Tensor& image, BackboneParams& params, bool training) {
  if (image.rank() != 4 || image.dim(1) != params.stem.conv.in_channels()) {
    throw ValidationError("image must be [N, " + std::to_string(params.stem.conv.in_channels()) +
                          ", H, W], got " + shape_str(image.shape()));
  }
  check_input_size(image.dim(2), image.dim(3));
  auto x = conv_bn_relu(image, params.stem, training);
  std::vector<Tensor> feats;
  for (auto& stage : params.stages) {
    x = conv_bn_relu(x, stage[0], training);
    for (std::size_t b = 1; b < stage.size(); ++b) {
      x = relu(x + batch_norm(conv2d(x, stage[b].conv), stage[b].norm, training));
    }
    feats.push_back(x);
  }
  return {feats[0], feats[1], feats[2], feats[3]};
}

Tensor gap_enhance(const Tensor& c5, const ConvParams& conv) {
  return c5 + conv2d(global_avg_pool(c5), conv);
}

GainOutput gain_forward(const Tensor& image, GainParams& params, const GainConfig& cfg,
                        bool training) {
  cfg.validate();
  auto pyr = backbone_forward(image, params.backbone, training);
  const auto h8 = pyr.c3.dim(2), w8 = pyr.c3.dim(3);

  Tensor c5 = cfg.use_gap ? gap_enhance(pyr.c5, require(params.gap_conv, "the GAP branch")) : pyr.c5;
  Tensor u4, u5;
  if (cfg.use_gai) {
    u4 = gai_forward(pyr.c3, pyr.c4, require(params.gai4, "GAI (C4)"), cfg.gai);
    u5 = gai_forward(pyr.c3, c5, require(params.gai5, "GAI (C5)"), cfg.gai);
  } else {
    u4 = bilinear_resize(conv2d(pyr.c4, require(params.reduce4, "the C4 reduction")), h8, w8);
    u5 = bilinear_resize(conv2d(c5, require(params.reduce5, "the C5 reduction")), h8, w8);
  }

  auto fused = conv_bn_relu(concat({pyr.c3, u4, u5}, 1), params.fuse_reduce, training);
  fused = conv_bn_relu(fused, params.fuse_spatial, training);
  if (cfg.use_spatial_c2) {
    fused = concat({bilinear_resize(fused, pyr.c2.dim(2), pyr.c2.dim(3)), pyr.c2}, 1);
  }
  GainOutput out;
  out.logits = bilinear_resize(conv2d(fused, params.classifier), image.dim(2), image.dim(3));
  if (cfg.use_aux) {
    if (!params.aux4 || !params.aux5) throw ValidationError("parameters for the aux heads are missing");
    out.aux4 = head(u4, *params.aux4, training);
    out.aux5 = head(u5, *params.aux5, training);
  }
  return out;
}

LossTerms total_loss(const GainOutput& out, const LabelMap& labels, double aux_weight,
                     const OhemConfig& ohem, LossSelections* selections) {
  LossTerms t;
  t.main = ohem_cross_entropy(out.logits, labels, ohem, kIgnoreIndex,
                              selections ? &selections->main : nullptr);
  if (!out.aux4.defined()) {
    t.total = t.main;
    return t;
  }
  const auto aux_labels = resize_labels_nearest(labels, out.aux4.dim(2), out.aux4.dim(3));
  auto a4 = ohem_cross_entropy(out.aux4, aux_labels, ohem, kIgnoreIndex,
                               selections ? &selections->aux4 : nullptr);
  auto a5 = ohem_cross_entropy(out.aux5, aux_labels, ohem, kIgnoreIndex,
                               selections ? &selections->aux5 : nullptr);
  t.aux = a4 + a5;
  t.total = aux_weight == 0.0 ? t.main : t.main + t.aux * aux_weight;
  return t;
}

NamedTensors state_dict(GainParams& params) {
  NamedTensors out = params.named_parameters();
  for (auto& [name, norm] : params.named_norms()) {
    const auto c = norm->channels();
    out.emplace_back(name + ".running_mean", Tensor::from_data({c}, norm->running_mean));
    out.emplace_back(name + ".running_var", Tensor::from_data({c}, norm->running_var));
  }
  return out;
}

void load_state_dict(GainParams& params, const NamedTensors& state) {
  std::map<std::string, const Tensor*> by_name;
  for (auto& [name, t] : state) by_name[name] = &t;
  auto fetch = [&](const std::string& name, const Shape& shape) -> const Tensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ValidationError("checkpoint has no tensor '" + name + "'");
    if (it->second->shape() != shape) {
      throw ValidationError("checkpoint tensor '" + name + "' has shape " +
                            shape_str(it->second->shape()) + ", expected " + shape_str(shape));
    }
    return *it->second;
  };
  if (auto it = by_name.find("classifier.weight");
      it != by_name.end() && it->second->dim(0) != params.classifier.out_channels()) {
    throw ValidationError("checkpoint was trained for " + std::to_string(it->second->dim(0)) +
                          " classes but the configuration has " +
                          std::to_string(params.classifier.out_channels()));
  }
  for (auto& [name, t] : params.named_parameters()) {
    const auto& src = fetch(name, t.shape());
    auto dst = t.mutable_data();
    std::copy(src.data().begin(), src.data().end(), dst.begin());
  }
  for (auto& [name, norm] : params.named_norms()) {
    const Shape shape{norm->channels()};
    auto m = fetch(name + ".running_mean", shape).data();
    auto v = fetch(name + ".running_var", shape).data();
    norm->running_mean.assign(m.begin(), m.end());
    norm->running_var.assign(v.begin(), v.end());
  }
}

}  // namespace gain
