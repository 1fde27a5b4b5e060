#include "gain/flops.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>

#include "gain/error.hpp"

namespace gain {

namespace {

constexpr std::int64_t kResizeFlops = 8;  // four weighted taps per output element
constexpr std::int64_t kSoftmaxFlops = 5;

class Counter {
 public:
  Counter(FlopsReport& r, std::string module) : r_(r), module_(std::move(module)) {}

  Shape conv(const std::string& name, const Shape& in, std::int64_t out_channels, int kernel,
             int stride = 1) {
    const int pad = (kernel - 1) / 2;
    const auto ho = (in[2] + 2 * pad - kernel) / stride + 1;
    const auto wo = (in[3] + 2 * pad - kernel) / stride + 1;
    Shape out{1, out_channels, ho, wo};
    const auto macs = in[1] * out_channels * kernel * kernel * ho * wo;
    push(name, OpKind::conv, in, out, macs, 2 * macs);
    return out;
  }

  // Normalization (scale and shift) plus ReLU.
  void bn_relu(const std::string& name, const Shape& s) {
    push(name, OpKind::elementwise, s, s, 0, 3 * shape_numel(s));
  }

  void elementwise(const std::string& name, const Shape& s, std::int64_t per_element = 1) {
    push(name, OpKind::elementwise, s, s, 0, per_element * shape_numel(s));
  }

  Shape resize(const std::string& name, const Shape& in, std::int64_t h, std::int64_t w) {
    Shape out{1, in[1], h, w};
    if (h == in[2] && w == in[3]) return out;
    push(name, OpKind::resize, in, out, 0, kResizeFlops * shape_numel(out));
    return out;
  }

  void pool(const std::string& name, const Shape& in) {
    push(name, OpKind::pool, in, {1, in[1], 1, 1}, 0, shape_numel(in));
  }

  void push(const std::string& name, OpKind kind, const Shape& in, const Shape& out,
            std::int64_t macs, std::int64_t flops) {
    r_.records.push_back({module_, module_ + "." + name, kind, in, out, macs, flops});
  }

 private:
  FlopsReport& r_;
  std::string module_;
};

Shape with_channels(Shape s, std::int64_t c) {
  s[1] = c;
  return s;
}

}  // namespace

std::string to_string(OpKind kind) {
  switch (kind) {
    case OpKind::conv: return "conv";
    case OpKind::affinity: return "affinity";
    case OpKind::softmax: return "softmax";
    case OpKind::aggregate: return "aggregate";
    case OpKind::resize: return "resize";
    case OpKind::elementwise: return "elementwise";
    case OpKind::pool: return "pool";
  }
  return "?";
}

const char* FlopsReport::convention() {
  return "1 multiply-add = 2 FLOPs; kxk conv = 2*Cin*Cout*k^2*Ho*Wo (bias adds not counted); "
         "affinity = 2*d_k*HW*keys; aggregation = 2*d_v*HW*keys; softmax = 5 FLOPs per logit; "
         "bilinear resize = 8 FLOPs per output element; batch norm + ReLU = 3 FLOPs per "
         "element; residual and broadcast adds = 1 FLOP per element; index arithmetic, "
         "concatenation and copies are not counted; batch size 1";
}

std::int64_t FlopsReport::total() const {
  std::int64_t s = 0;
  for (const auto& r : records) s += r.flops;
  return s;
}

std::int64_t FlopsReport::total(OpKind kind) const {
  std::int64_t s = 0;
  for (const auto& r : records)
    if (r.kind == kind) s += r.flops;
  return s;
}

std::int64_t FlopsReport::total_excluding_resize() const { return total() - total(OpKind::resize); }

std::int64_t FlopsReport::attention_flops() const {
  return total(OpKind::affinity) + total(OpKind::aggregate);
}

std::vector<std::pair<std::string, std::int64_t>> FlopsReport::module_totals() const {
  std::vector<std::pair<std::string, std::int64_t>> out;
  for (const auto& r : records) {
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& e) { return e.first == r.module; });
    if (it == out.end()) {
      out.emplace_back(r.module, r.flops);
    } else {
      it->second += r.flops;
    }
  }
  return out;
}

void FlopsReport::append(const FlopsReport& other) {
  records.insert(records.end(), other.records.begin(), other.records.end());
  affinity_elements += other.affinity_elements;
}

std::int64_t keys_per_query(AttentionKind kind, std::int64_t key_h, std::int64_t key_w) {
  return kind == AttentionKind::full ? key_h * key_w : key_h + key_w - 1;
}

FlopsReport count_gai_flops(const GaiConfig& cfg, const GaiShapes& s, const std::string& module) {
  cfg.validate();
  if (s.high_channels < 1 || s.low_channels < 1 || s.high_h < 1 || s.high_w < 1 || s.low_h < 1 ||
      s.low_w < 1) {
    throw ValidationError("GAI shapes must be positive");
  }
  if (s.low_h > s.high_h || s.low_w > s.high_w) {
    throw ValidationError("GAI low-resolution input is larger than the high-resolution input");
  }
  FlopsReport r;
  Counter c(r, module);
  const Shape high{1, s.high_channels, s.high_h, s.high_w};
  const Shape low{1, s.low_channels, s.low_h, s.low_w};

  const auto f_l_low = c.conv("reduce_low", low, cfg.channels, 1);
  const auto f_l = c.resize("resize_low", f_l_low, s.high_h, s.high_w);
  Shape query_in = high;
  if (cfg.query_mode == QueryMode::concat) query_in[1] = s.high_channels + cfg.channels;
  if (cfg.query_mode == QueryMode::low_only) query_in = f_l;
  const auto q = c.conv("reduce_query", query_in, cfg.channels, 1);
  const auto k_src = cfg.key_source == KeySource::low_res ? f_l_low : f_l;
  c.conv("w_k", k_src, cfg.d_k, 1);
  c.conv("w_v", k_src, cfg.d_v, 1);

  const auto hw = s.high_h * s.high_w;
  const auto keys = keys_per_query(cfg.attention, k_src[2], k_src[3]);
  const Shape logits{1, hw, keys};
  for (int t = 0; t < cfg.recurrence; ++t) {
    const auto step = ".step" + std::to_string(t);
    const auto qp = c.conv("w_q" + step, q, cfg.d_k, 1);
    c.push("affinity" + step, OpKind::affinity, qp, logits, cfg.d_k * hw * keys, 2 * cfg.d_k * hw * keys);
    c.push("softmax" + step, OpKind::softmax, logits, logits, 0, kSoftmaxFlops * hw * keys);
    c.push("aggregate" + step, OpKind::aggregate, logits, with_channels(q, cfg.d_v),
           cfg.d_v * hw * keys, 2 * cfg.d_v * hw * keys);
    r.affinity_elements += hw * keys;
    if (t + 1 < cfg.recurrence) {
      c.conv("feedback" + step, with_channels(q, cfg.d_v), cfg.channels, 1);
      c.elementwise("feedback_add" + step, q);
    }
  }
  c.conv("out_proj", with_channels(q, cfg.channels + cfg.d_v), cfg.out_channels, 1);
  return r;
}

namespace {

struct Pyramid {
  Shape c2, c3, c4, c5;
};

Pyramid count_backbone(FlopsReport& r, const GainConfig& cfg, std::int64_t height,
                       std::int64_t width) {
  Counter c(r, "backbone");
  const auto& ch = cfg.backbone.channels;
  auto x = c.conv("stem.conv", {1, cfg.backbone.in_channels, height, width}, ch[0] / 2, 3, 2);
  c.bn_relu("stem.bn_relu", x);
  std::vector<Shape> feats;
  for (std::size_t s = 0; s < 4; ++s) {
    const auto stage = "stage" + std::to_string(s + 2);
    x = c.conv(stage + ".block0.conv", x, ch[s], 3, 2);
    c.bn_relu(stage + ".block0.bn_relu", x);
    for (int b = 1; b < cfg.backbone.blocks; ++b) {
      const auto block = stage + ".block" + std::to_string(b);
      c.conv(block + ".conv", x, ch[s], 3);
      // normalization, residual add and ReLU
      c.elementwise(block + ".bn_add_relu", x, 4);
    }
    feats.push_back(x);
  }
  return {feats[0], feats[1], feats[2], feats[3]};
}

void count_upsampling(FlopsReport& r, const GainConfig& cfg, const Pyramid& p) {
  const GaiShapes s4{p.c3[1], p.c3[2], p.c3[3], p.c4[1], p.c4[2], p.c4[3]};
  const GaiShapes s5{p.c3[1], p.c3[2], p.c3[3], p.c5[1], p.c5[2], p.c5[3]};
  if (cfg.use_gai) {
    r.append(count_gai_flops(cfg.gai, s4, "gai4"));
    r.append(count_gai_flops(cfg.gai, s5, "gai5"));
    return;
  }
  for (const auto& [name, shape] : {std::pair{"up4", p.c4}, std::pair{"up5", p.c5}}) {
    Counter c(r, name);
    auto x = c.conv("reduce", shape, cfg.gai.out_channels, 1);
    c.resize("resize", x, p.c3[2], p.c3[3]);
  }
}

}  // namespace

FlopsReport count_upsampling_flops(const GainConfig& cfg, std::int64_t height, std::int64_t width) {
  cfg.validate();
  check_input_size(height, width);
  FlopsReport scratch, r;
  const auto p = count_backbone(scratch, cfg, height, width);
  count_upsampling(r, cfg, p);
  return r;
}

FlopsReport count_gain_flops(const GainConfig& cfg, std::int64_t height, std::int64_t width) {
  cfg.validate();
  check_input_size(height, width);
  FlopsReport r;
  const auto p = count_backbone(r, cfg, height, width);
  if (cfg.use_gap) {
    Counter c(r, "gap");
    c.pool("pool", p.c5);
    c.conv("conv", {1, p.c5[1], 1, 1}, p.c5[1], 1);
    c.elementwise("add", p.c5);
  }
  count_upsampling(r, cfg, p);

  Counter c(r, "head");
  const auto up = cfg.gai.out_channels;
  auto x = c.conv("fuse.reduce", with_channels(p.c3, p.c3[1] + 2 * up), cfg.fused_channels, 1);
  c.bn_relu("fuse.reduce.bn_relu", x);
  x = c.conv("fuse.spatial", x, cfg.fused_channels, 3);
  c.bn_relu("fuse.spatial.bn_relu", x);
  if (cfg.use_spatial_c2) {
    x = c.resize("resize_c2", x, p.c2[2], p.c2[3]);
    x = with_channels(x, x[1] + p.c2[1]);
  }
  x = c.conv("classifier", x, cfg.num_classes, 1);
  c.resize("resize_out", x, height, width);

  if (cfg.use_aux) {
    for (const char* name : {"aux4", "aux5"}) {
      Counter a(r, name);
      auto h = a.conv("conv", with_channels(p.c3, up), cfg.aux_channels, 3);
      a.bn_relu("bn_relu", h);
      a.conv("classifier", h, cfg.num_classes, 1);
    }
  }
  return r;
}

void write_flops_text(std::ostream& os, const FlopsReport& report) {
  char buf[256];
  os << "# " << FlopsReport::convention() << "\n";
  std::snprintf(buf, sizeof buf, "%-36s %-12s %-20s %-20s %16s\n", "name", "kind", "input",
                "output", "FLOPs");
  os << buf;
  for (const auto& r : report.records) {
    std::snprintf(buf, sizeof buf, "%-36s %-12s %-20s %-20s %16lld\n", r.name.c_str(),
                  to_string(r.kind).c_str(), shape_str(r.input).c_str(), shape_str(r.output).c_str(),
                  static_cast<long long>(r.flops));
    os << buf;
  }
  os << "\n";
  for (const auto& [module, flops] : report.module_totals()) {
    std::snprintf(buf, sizeof buf, "module %-16s %16lld  (%.3f G)\n", module.c_str(),
                  static_cast<long long>(flops), flops / 1e9);
    os << buf;
  }
  std::snprintf(buf, sizeof buf,
                "total %lld (%.3f G), excluding resize %lld (%.3f G), resize %lld, "
                "affinity elements %lld\n",
                static_cast<long long>(report.total()), report.total() / 1e9,
                static_cast<long long>(report.total_excluding_resize()),
                report.total_excluding_resize() / 1e9,
                static_cast<long long>(report.total(OpKind::resize)),
                static_cast<long long>(report.affinity_elements));
  os << buf;
}

}  // namespace gain
