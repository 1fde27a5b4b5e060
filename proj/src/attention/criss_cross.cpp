#include "gain/attention.hpp"
#include "gain/error.hpp"

namespace gain {

namespace {

// NCHW <-> NHWC so that per-pixel channel vectors are contiguous.
std::vector<double> to_channels_last(const double* src, std::int64_t n, std::int64_t c,
                                     std::int64_t area) {
  std::vector<double> out(static_cast<std::size_t>(n * c * area));
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t i = 0; i < area; ++i)
        out[(b * area + i) * c + ch] = src[(b * c + ch) * area + i];
  return out;
}

void add_channels_first(const std::vector<double>& src, std::int64_t n, std::int64_t c,
                        std::int64_t area, double* dst) {
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t i = 0; i < area; ++i)
        dst[(b * c + ch) * area + i] += src[(b * area + i) * c + ch];
}

struct CrissCrossGeometry {
  std::int64_t n, h, w, key_h, key_w;
  std::vector<std::int64_t> row_anchor, col_anchor;

  std::int64_t slots() const { return key_h + key_w - 1; }
  // Flat key pixel index (row-major over Hk x Wk) for a query slot.
  std::int64_t key_index(std::int64_t qh, std::int64_t qw, std::int64_t slot) const {
    const auto ra = row_anchor[qh];
    if (slot < key_w) return ra * key_w + slot;
    const auto r = slot - key_w;
    const auto row = r < ra ? r : r + 1;
    return row * key_w + col_anchor[qw];
  }
};

void check_anchors(const CrissCrossGeometry& g) {
  if (static_cast<std::int64_t>(g.row_anchor.size()) != g.h ||
      static_cast<std::int64_t>(g.col_anchor.size()) != g.w) {
    throw ValidationError("criss-cross anchor maps do not match the query grid");
  }
  for (auto a : g.row_anchor)
    if (a < 0 || a >= g.key_h) throw ValidationError("row anchor outside key grid");
  for (auto a : g.col_anchor)
    if (a < 0 || a >= g.key_w) throw ValidationError("column anchor outside key grid");
}

}  // namespace

std::vector<std::int64_t> anchor_map(std::int64_t query_extent, std::int64_t key_extent) {
  std::vector<std::int64_t> m(static_cast<std::size_t>(query_extent));
  for (std::int64_t i = 0; i < query_extent; ++i) m[i] = i * key_extent / query_extent;
  return m;
}

Tensor criss_cross_logits(const Tensor& q_proj, const Tensor& k_proj,
                          const std::vector<std::int64_t>& row_anchor,
                          const std::vector<std::int64_t>& col_anchor) {
  if (q_proj.rank() != 4 || k_proj.rank() != 4 || q_proj.dim(0) != k_proj.dim(0) ||
      q_proj.dim(1) != k_proj.dim(1)) {
    throw ValidationError("criss_cross_logits: incompatible projections " +
                          shape_str(q_proj.shape()) + " and " + shape_str(k_proj.shape()));
  }
  CrissCrossGeometry g{q_proj.dim(0), q_proj.dim(2), q_proj.dim(3), k_proj.dim(2),
                       k_proj.dim(3), row_anchor, col_anchor};
  check_anchors(g);
  const auto d = q_proj.dim(1);
  const auto area = g.h * g.w, key_area = g.key_h * g.key_w, slots = g.slots();
  const auto qt = to_channels_last(q_proj.data().data(), g.n, d, area);
  const auto kt = to_channels_last(k_proj.data().data(), g.n, d, key_area);

  std::vector<double> out(static_cast<std::size_t>(g.n * area * slots));
  for (std::int64_t b = 0; b < g.n; ++b)
    for (std::int64_t qh = 0; qh < g.h; ++qh)
      for (std::int64_t qw = 0; qw < g.w; ++qw) {
        const double* qv = qt.data() + ((b * g.h + qh) * g.w + qw) * d;
        double* o = out.data() + ((b * g.h + qh) * g.w + qw) * slots;
        for (std::int64_t s = 0; s < slots; ++s) {
          const double* kv = kt.data() + (b * key_area + g.key_index(qh, qw, s)) * d;
          double acc = 0.0;
          for (std::int64_t c = 0; c < d; ++c) acc += qv[c] * kv[c];
          o[s] = acc;
        }
      }

  auto qi = q_proj.impl();
  auto ki = k_proj.impl();
  return make_result(
      {g.n, g.h, g.w, slots}, std::move(out), "criss_cross_logits", {q_proj, k_proj},
      [qi, ki, g, d](const TensorImpl& res) {
        const auto area = g.h * g.w, key_area = g.key_h * g.key_w, slots = g.slots();
        const auto qt = to_channels_last(qi->data.data(), g.n, d, area);
        const auto kt = to_channels_last(ki->data.data(), g.n, d, key_area);
        std::vector<double> dq(qt.size(), 0.0), dk(kt.size(), 0.0);
        for (std::int64_t b = 0; b < g.n; ++b)
          for (std::int64_t qh = 0; qh < g.h; ++qh)
            for (std::int64_t qw = 0; qw < g.w; ++qw) {
              const auto qoff = ((b * g.h + qh) * g.w + qw) * d;
              const double* go = res.grad.data() + ((b * g.h + qh) * g.w + qw) * slots;
              for (std::int64_t s = 0; s < slots; ++s) {
                const auto koff = (b * key_area + g.key_index(qh, qw, s)) * d;
                const double gs = go[s];
                for (std::int64_t c = 0; c < d; ++c) {
                  dq[qoff + c] += gs * kt[koff + c];
                  dk[koff + c] += gs * qt[qoff + c];
                }
              }
            }
        if (qi->requires_grad) add_channels_first(dq, g.n, d, area, qi->grad_buffer().data());
        if (ki->requires_grad) add_channels_first(dk, g.n, d, key_area, ki->grad_buffer().data());
      });
}

Tensor criss_cross_aggregate(const Tensor& weights, const Tensor& v_proj,
                             const std::vector<std::int64_t>& row_anchor,
                             const std::vector<std::int64_t>& col_anchor) {
  if (weights.rank() != 4 || v_proj.rank() != 4 || weights.dim(0) != v_proj.dim(0) ||
      weights.dim(3) != v_proj.dim(2) + v_proj.dim(3) - 1) {
    throw ValidationError("criss_cross_aggregate: weights " + shape_str(weights.shape()) +
                          " inconsistent with values " + shape_str(v_proj.shape()));
  }
  CrissCrossGeometry g{weights.dim(0), weights.dim(1), weights.dim(2), v_proj.dim(2),
                       v_proj.dim(3), row_anchor, col_anchor};
  check_anchors(g);
  const auto dv = v_proj.dim(1);
  const auto area = g.h * g.w, key_area = g.key_h * g.key_w, slots = g.slots();
  const auto vt = to_channels_last(v_proj.data().data(), g.n, dv, key_area);
  const double* a = weights.data().data();

  std::vector<double> ot(static_cast<std::size_t>(g.n * area * dv), 0.0);
  for (std::int64_t b = 0; b < g.n; ++b)
    for (std::int64_t qh = 0; qh < g.h; ++qh)
      for (std::int64_t qw = 0; qw < g.w; ++qw) {
        const auto q = (b * g.h + qh) * g.w + qw;
        double* o = ot.data() + q * dv;
        for (std::int64_t s = 0; s < slots; ++s) {
          const double wgt = a[q * slots + s];
          const double* v = vt.data() + (b * key_area + g.key_index(qh, qw, s)) * dv;
          for (std::int64_t c = 0; c < dv; ++c) o[c] += wgt * v[c];
        }
      }
  std::vector<double> out(ot.size(), 0.0);
  add_channels_first(ot, g.n, dv, area, out.data());

  auto ai = weights.impl();
  auto vi = v_proj.impl();
  return make_result(
      {g.n, dv, g.h, g.w}, std::move(out), "criss_cross_aggregate", {weights, v_proj},
      [ai, vi, g, dv](const TensorImpl& res) {
        const auto area = g.h * g.w, key_area = g.key_h * g.key_w, slots = g.slots();
        const auto vt = to_channels_last(vi->data.data(), g.n, dv, key_area);
        const auto gt = to_channels_last(res.grad.data(), g.n, dv, area);
        std::vector<double> dvt(vi->requires_grad ? vt.size() : 0, 0.0);
        std::span<double> da;
        if (ai->requires_grad) da = ai->grad_buffer();
        const double* a = ai->data.data();
        for (std::int64_t b = 0; b < g.n; ++b)
          for (std::int64_t qh = 0; qh < g.h; ++qh)
            for (std::int64_t qw = 0; qw < g.w; ++qw) {
              const auto q = (b * g.h + qh) * g.w + qw;
              const double* go = gt.data() + q * dv;
              for (std::int64_t s = 0; s < slots; ++s) {
                const auto koff = (b * key_area + g.key_index(qh, qw, s)) * dv;
                if (!da.empty()) {
                  double acc = 0.0;
                  for (std::int64_t c = 0; c < dv; ++c) acc += go[c] * vt[koff + c];
                  da[q * slots + s] += acc;
                }
                if (!dvt.empty()) {
                  const double wgt = a[q * slots + s];
                  for (std::int64_t c = 0; c < dv; ++c) dvt[koff + c] += wgt * go[c];
                }
              }
            }
        if (!dvt.empty()) add_channels_first(dvt, g.n, dv, key_area, vi->grad_buffer().data());
      });
}

}  // namespace gain
