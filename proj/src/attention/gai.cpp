#include <cstdio>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include "gain/attention.hpp"
#include "gain/error.hpp"
#include "gain/ops.hpp"

namespace gain {

std::int64_t AffinityMap::keys_per_query() const {
  return kind == AttentionKind::full ? key_h * key_w : key_h + key_w - 1;
}

std::pair<std::int64_t, std::int64_t> AffinityMap::key_coord(std::int64_t qh, std::int64_t qw,
                                                             std::int64_t slot) const {
  if (slot < 0 || slot >= keys_per_query()) throw ValidationError("key slot out of range");
  if (kind == AttentionKind::full) return {slot / key_w, slot % key_w};
  const auto ra = row_anchor.at(static_cast<std::size_t>(qh));
  if (slot < key_w) return {ra, slot};
  const auto r = slot - key_w;
  return {r < ra ? r : r + 1, col_anchor.at(static_cast<std::size_t>(qw))};
}

double AffinityMap::weight(std::int64_t n, std::int64_t qh, std::int64_t qw,
                           std::int64_t slot) const {
  const auto k = keys_per_query();
  return weights.data()[static_cast<std::size_t>(((n * h + qh) * w + qw) * k + slot)];
}

AffinityMap affinity_from_projections(const Tensor& q_proj, const Tensor& k_proj,
                                      AttentionKind kind) {
  if (q_proj.rank() != 4 || k_proj.rank() != 4 || q_proj.dim(0) != k_proj.dim(0) ||
      q_proj.dim(1) != k_proj.dim(1)) {
    throw ValidationError("affinity: incompatible projections " + shape_str(q_proj.shape()) +
                          " and " + shape_str(k_proj.shape()));
  }
  AffinityMap a;
  a.kind = kind;
  a.batch = q_proj.dim(0);
  a.h = q_proj.dim(2);
  a.w = q_proj.dim(3);
  a.key_h = k_proj.dim(2);
  a.key_w = k_proj.dim(3);
  a.row_anchor = anchor_map(a.h, a.key_h);
  a.col_anchor = anchor_map(a.w, a.key_w);

  if (kind == AttentionKind::full) {
    const auto d = q_proj.dim(1);
    auto qm = transpose_last2(reshape(q_proj, {a.batch, d, a.h * a.w}));
    auto km = reshape(k_proj, {a.batch, d, a.key_h * a.key_w});
    a.weights = softmax(bmm(qm, km), 2);
  } else {
    a.weights = softmax(criss_cross_logits(q_proj, k_proj, a.row_anchor, a.col_anchor), 3);
  }
  if (a.weights.numel() != a.batch * a.h * a.w * a.keys_per_query()) {
    throw std::logic_error("affinity element count " + std::to_string(a.weights.numel()) +
                           " does not match the " + to_string(kind) + " key set size");
  }
  return a;
}

AffinityMap full_affinity(const Tensor& q, const Tensor& k_src, const GaiParams& params) {
  return affinity_from_projections(conv2d(q, params.w_q), conv2d(k_src, params.w_k),
                                   AttentionKind::full);
}

AffinityMap cc_affinity(const Tensor& q, const Tensor& k_src, const GaiParams& params) {
  return affinity_from_projections(conv2d(q, params.w_q), conv2d(k_src, params.w_k),
                                   AttentionKind::criss_cross);
}

Tensor aggregate(const AffinityMap& a, const Tensor& v_proj) {
  if (v_proj.rank() != 4 || v_proj.dim(0) != a.batch || v_proj.dim(2) != a.key_h ||
      v_proj.dim(3) != a.key_w) {
    throw ValidationError("aggregate: values " + shape_str(v_proj.shape()) +
                          " do not match the affinity key grid");
  }
  const auto dv = v_proj.dim(1);
  if (a.kind == AttentionKind::criss_cross) {
    return criss_cross_aggregate(a.weights, v_proj, a.row_anchor, a.col_anchor);
  }
  auto vt = transpose_last2(reshape(v_proj, {a.batch, dv, a.key_h * a.key_w}));
  auto o = transpose_last2(bmm(a.weights, vt));
  return reshape(o, {a.batch, dv, a.h, a.w});
}

Tensor attend(const AffinityMap& a, const Tensor& v_src, const GaiParams& params) {
  return aggregate(a, conv2d(v_src, params.w_v));
}

QueryFeatures build_query(const Tensor& f_high, const Tensor& f_low, const GaiParams& params,
                          const GaiConfig& cfg) {
  if (f_high.rank() != 4 || f_low.rank() != 4 || f_high.dim(0) != f_low.dim(0)) {
    throw ValidationError("GAI inputs must be NCHW with equal batch, got " +
                          shape_str(f_high.shape()) + " and " + shape_str(f_low.shape()));
  }
  const auto h = f_high.dim(2), w = f_high.dim(3);
  if (f_low.dim(2) > h || f_low.dim(3) > w) {
    throw ValidationError("GAI low-resolution input " + shape_str(f_low.shape()) +
                          " is larger than the high-resolution input " +
                          shape_str(f_high.shape()));
  }
  QueryFeatures out;
  auto f_l_low = conv2d(f_low, params.reduce_low);
  out.f_l = (f_low.dim(2) == h && f_low.dim(3) == w) ? f_l_low : bilinear_resize(f_l_low, h, w);
  switch (cfg.query_mode) {
    case QueryMode::concat:
      out.q = conv2d(concat({f_high, out.f_l}, 1), params.reduce_query);
      break;
    case QueryMode::high_only:
      out.q = conv2d(f_high, params.reduce_query);
      break;
    case QueryMode::low_only:
      out.q = conv2d(out.f_l, params.reduce_query);
      break;
  }
  out.k_src = cfg.key_source == KeySource::low_res ? f_l_low : out.f_l;
  return out;
}

Tensor gai_forward(const Tensor& f_high, const Tensor& f_low, const GaiParams& params,
                   const GaiConfig& cfg, GaiTrace* trace) {
  cfg.validate();
  auto qf = build_query(f_high, f_low, params, cfg);
  auto k_proj = conv2d(qf.k_src, params.w_k);
  auto v_proj = conv2d(qf.k_src, params.w_v);

  Tensor q = qf.q;
  Tensor o;
  for (int t = 0; t < cfg.recurrence; ++t) {
    auto a = affinity_from_projections(conv2d(q, params.w_q), k_proj, cfg.attention);
    o = aggregate(a, v_proj);
    if (trace) {
      trace->affinities.push_back(a);
      trace->outputs.push_back(o);
    }
    if (t + 1 < cfg.recurrence) q = q + conv2d(o, params.feedback);
  }
  auto out = conv2d(concat({qf.q, o}, 1), params.out_proj);
  if (trace) trace->query = std::move(qf);
  return out;
}

void write_attention_csv(std::ostream& os, const AffinityMap& a,
                         std::span<const QueryPoint> points, std::int64_t batch_index) {
  if (batch_index < 0 || batch_index >= a.batch) {
    throw ValidationError("dump_attention: batch index " + std::to_string(batch_index) +
                          " out of range");
  }
  os << "qh,qw,kh,kw,weight\n";
  char buf[64];
  for (const auto& p : points) {
    if (p.h < 0 || p.h >= a.h || p.w < 0 || p.w >= a.w) {
      throw ValidationError("dump_attention: query point (" + std::to_string(p.h) + ", " +
                            std::to_string(p.w) + ") outside the " + std::to_string(a.h) +
                            "x" + std::to_string(a.w) + " query grid");
    }
    for (std::int64_t s = 0; s < a.keys_per_query(); ++s) {
      const auto [kh, kw] = a.key_coord(p.h, p.w, s);
      std::snprintf(buf, sizeof buf, "%.17g", a.weight(batch_index, p.h, p.w, s));
      os << p.h << ',' << p.w << ',' << kh << ',' << kw << ',' << buf << '\n';
    }
  }
}

void dump_attention(const AffinityMap& a, std::span<const QueryPoint> points,
                    const std::filesystem::path& path, std::int64_t batch_index) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_attention_csv(f, a, points, batch_index);
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace gain
