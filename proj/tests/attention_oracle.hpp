#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "gain/attention.hpp"

namespace gain::testing {

// Plain-loop 1x1 projection: out[n][o][p] = sum_c W[o][c] * x[n][c][p].
inline std::vector<double> project_oracle(const Tensor& x, const Tensor& weight) {
  const auto n = x.dim(0), c = x.dim(1), area = x.dim(2) * x.dim(3);
  const auto o = weight.dim(0);
  std::vector<double> out(static_cast<std::size_t>(n * o * area), 0.0);
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t oc = 0; oc < o; ++oc)
      for (std::int64_t p = 0; p < area; ++p) {
        double s = 0.0;
        for (std::int64_t ic = 0; ic < c; ++ic)
          s += weight.data()[oc * c + ic] * x.data()[(b * c + ic) * area + p];
        out[(b * o + oc) * area + p] = s;
      }
  return out;
}

// Per-query softmax over every key pixel: [N][H*W][Hk*Wk].
inline std::vector<double> full_affinity_oracle(const Tensor& q, const Tensor& k_src,
                                                const GaiParams& params) {
  const auto qp = project_oracle(q, params.w_q.weight);
  const auto kp = project_oracle(k_src, params.w_k.weight);
  const auto n = q.dim(0), d = params.w_q.weight.dim(0);
  const auto area = q.dim(2) * q.dim(3), keys = k_src.dim(2) * k_src.dim(3);
  std::vector<double> out(static_cast<std::size_t>(n * area * keys));
  std::vector<double> logits(static_cast<std::size_t>(keys));
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t p = 0; p < area; ++p) {
      for (std::int64_t i = 0; i < keys; ++i) {
        double s = 0.0;
        for (std::int64_t c = 0; c < d; ++c)
          s += qp[(b * d + c) * area + p] * kp[(b * d + c) * keys + i];
        logits[i] = s;
      }
      const double m = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (auto v : logits) z += std::exp(v - m);
      for (std::int64_t i = 0; i < keys; ++i)
        out[(b * area + p) * keys + i] = std::exp(logits[i] - m) / z;
    }
  return out;
}

// Full affinity restricted to the row and column through each query's anchor
// pixel and renormalized: [N][H*W][Hk*Wk], zero off the support.
inline std::vector<double> masked_affinity_oracle(const Tensor& q, const Tensor& k_src,
                                                  const GaiParams& params) {
  auto full = full_affinity_oracle(q, k_src, params);
  const auto n = q.dim(0), h = q.dim(2), w = q.dim(3);
  const auto kh = k_src.dim(2), kw = k_src.dim(3);
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) {
        const auto ay = y * kh / h, ax = x * kw / w;
        double* row = full.data() + (b * h * w + y * w + x) * kh * kw;
        double z = 0.0;
        for (std::int64_t i = 0; i < kh; ++i)
          for (std::int64_t j = 0; j < kw; ++j) {
            if (i != ay && j != ax) row[i * kw + j] = 0.0;
            z += row[i * kw + j];
          }
        for (std::int64_t i = 0; i < kh * kw; ++i) row[i] /= z;
      }
  return full;
}

// Weighted sum of projected values under a dense [N][H*W][Hk*Wk] affinity.
inline std::vector<double> attend_oracle(const std::vector<double>& affinity,
                                         const Tensor& v_src, const GaiParams& params,
                                         std::int64_t h, std::int64_t w) {
  const auto vp = project_oracle(v_src, params.w_v.weight);
  const auto n = v_src.dim(0), dv = params.w_v.weight.dim(0);
  const auto keys = v_src.dim(2) * v_src.dim(3), area = h * w;
  std::vector<double> out(static_cast<std::size_t>(n * dv * area), 0.0);
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t c = 0; c < dv; ++c)
      for (std::int64_t p = 0; p < area; ++p) {
        double s = 0.0;
        for (std::int64_t i = 0; i < keys; ++i)
          s += affinity[(b * area + p) * keys + i] * vp[(b * dv + c) * keys + i];
        out[(b * dv + c) * area + p] = s;
      }
  return out;
}

// Scatters a criss-cross map into the dense [N][H*W][Hk*Wk] layout.
inline std::vector<double> densify(const AffinityMap& a) {
  const auto keys = a.key_h * a.key_w;
  std::vector<double> out(static_cast<std::size_t>(a.batch * a.h * a.w * keys), 0.0);
  for (std::int64_t b = 0; b < a.batch; ++b)
    for (std::int64_t y = 0; y < a.h; ++y)
      for (std::int64_t x = 0; x < a.w; ++x)
        for (std::int64_t s = 0; s < a.keys_per_query(); ++s) {
          const auto [ky, kx] = a.key_coord(y, x, s);
          out[(b * a.h * a.w + y * a.w + x) * keys + ky * a.key_w + kx] += a.weight(b, y, x, s);
        }
  return out;
}

}  // namespace gain::testing
