#include <algorithm>
#include <cmath>

#include "gain/error.hpp"
#include "gain/nn.hpp"

namespace gain {

namespace {

// Per output coordinate: the two source taps and the blend weight of the
// second one.
struct Taps {
  std::vector<std::int64_t> lo, hi;
  std::vector<double> frac;
};

Taps make_taps(std::int64_t in, std::int64_t out) {
  Taps t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.frac.resize(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t d = 0; d < out; ++d) {
    double s = (static_cast<double>(d) + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::int64_t>(std::floor(s));
    t.lo[d] = lo;
    t.hi[d] = std::min(lo + 1, in - 1);
    t.frac[d] = s - static_cast<double>(lo);
  }
  return t;
}

}  // namespace

Tensor bilinear_resize(const Tensor& x, std::int64_t out_h, std::int64_t out_w) {
  if (x.rank() != 4) throw ValidationError("bilinear_resize expects NCHW, got " + shape_str(x.shape()));
  if (out_h < 1 || out_w < 1) throw ValidationError("bilinear_resize output size must be >= 1");
  const auto planes = x.dim(0) * x.dim(1);
  const auto in_h = x.dim(2), in_w = x.dim(3);
  const Taps ty = make_taps(in_h, out_h);
  const Taps tx = make_taps(in_w, out_w);
  std::vector<double> out(static_cast<std::size_t>(planes * out_h * out_w));
  const double* xd = x.data().data();
  for (std::int64_t p = 0; p < planes; ++p) {
    const double* src = xd + p * in_h * in_w;
    double* dst = out.data() + p * out_h * out_w;
    for (std::int64_t oy = 0; oy < out_h; ++oy) {
      const double* r0 = src + ty.lo[oy] * in_w;
      const double* r1 = src + ty.hi[oy] * in_w;
      const double fy = ty.frac[oy];
      for (std::int64_t ox = 0; ox < out_w; ++ox) {
        const auto x0 = tx.lo[ox], x1 = tx.hi[ox];
        const double fx = tx.frac[ox];
        // Lerp form keeps constants and same-size resizes exact.
        const double top = r0[x0] + fx * (r0[x1] - r0[x0]);
        const double bottom = r1[x0] + fx * (r1[x1] - r1[x0]);
        dst[oy * out_w + ox] = top + fy * (bottom - top);
      }
    }
  }
  auto xi = x.impl();
  return make_result(
      {x.dim(0), x.dim(1), out_h, out_w}, std::move(out), "bilinear_resize", {x},
      [xi, planes, in_h, in_w, out_h, out_w, ty, tx](const TensorImpl& res) {
        auto gx = xi->grad_buffer();
        for (std::int64_t p = 0; p < planes; ++p) {
          double* g = gx.data() + p * in_h * in_w;
          const double* go = res.grad.data() + p * out_h * out_w;
          for (std::int64_t oy = 0; oy < out_h; ++oy) {
            const double fy = ty.frac[oy];
            double* r0 = g + ty.lo[oy] * in_w;
            double* r1 = g + ty.hi[oy] * in_w;
            for (std::int64_t ox = 0; ox < out_w; ++ox) {
              const double fx = tx.frac[ox];
              const double v = go[oy * out_w + ox];
              r0[tx.lo[ox]] += v * (1.0 - fy) * (1.0 - fx);
              r0[tx.hi[ox]] += v * (1.0 - fy) * fx;
              r1[tx.lo[ox]] += v * fy * (1.0 - fx);
              r1[tx.hi[ox]] += v * fy * fx;
            }
          }
        }
      });
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() != 4) throw ValidationError("global_avg_pool expects NCHW, got " + shape_str(x.shape()));
  const auto planes = x.dim(0) * x.dim(1);
  const auto area = x.dim(2) * x.dim(3);
  std::vector<double> out(static_cast<std::size_t>(planes));
  const double* xd = x.data().data();
  for (std::int64_t p = 0; p < planes; ++p) {
    double s = 0.0;
    for (std::int64_t i = 0; i < area; ++i) s += xd[p * area + i];
    out[p] = s / static_cast<double>(area);
  }
  auto xi = x.impl();
  return make_result({x.dim(0), x.dim(1), 1, 1}, std::move(out), "global_avg_pool", {x},
                     [xi, planes, area](const TensorImpl& res) {
                       auto gx = xi->grad_buffer();
                       const double inv = 1.0 / static_cast<double>(area);
                       for (std::int64_t p = 0; p < planes; ++p) {
                         for (std::int64_t i = 0; i < area; ++i) gx[p * area + i] += res.grad[p] * inv;
                       }
                     });
}

LabelMap resize_labels_nearest(const LabelMap& labels, std::int64_t out_h,
                               std::int64_t out_w) {
  LabelMap out;
  out.n = labels.n;
  out.h = out_h;
  out.w = out_w;
  out.labels.resize(static_cast<std::size_t>(out.n * out_h * out_w));
  auto src_index = [](std::int64_t d, std::int64_t in, std::int64_t o) {
    const auto s = static_cast<std::int64_t>(
        std::floor((static_cast<double>(d) + 0.5) * static_cast<double>(in) / static_cast<double>(o)));
    return std::min(s, in - 1);
  };
  for (std::int64_t b = 0; b < out.n; ++b)
    for (std::int64_t y = 0; y < out_h; ++y)
      for (std::int64_t x = 0; x < out_w; ++x)
        out.labels[static_cast<std::size_t>((b * out_h + y) * out_w + x)] =
            labels.at(b, src_index(y, labels.h, out_h), src_index(x, labels.w, out_w));
  return out;
}

}  // namespace gain
