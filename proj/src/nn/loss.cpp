#include <algorithm>
#include <cmath>
#include <numeric>

#include "gain/error.hpp"
#include "gain/nn.hpp"

namespace gain {

Tensor ohem_cross_entropy(const Tensor& logits, const LabelMap& labels,
                          const OhemConfig& cfg, int ignore_index,
                          OhemSelection* selection) {
  if (logits.rank() != 4) {
    throw ValidationError("ohem_cross_entropy expects [N, K, H, W] logits, got " +
                          shape_str(logits.shape()));
  }
  const auto n = logits.dim(0), k = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  if (labels.n != n || labels.h != h || labels.w != w) {
    throw ValidationError("label map (" + std::to_string(labels.n) + ", " +
                          std::to_string(labels.h) + ", " + std::to_string(labels.w) +
                          ") does not match logits " + shape_str(logits.shape()));
  }
  if (!(cfg.prob_threshold > 0.0 && cfg.prob_threshold <= 1.0) ||
      !(cfg.min_kept_fraction > 0.0 && cfg.min_kept_fraction <= 1.0)) {
    throw ValidationError("OHEM threshold and min_kept_fraction must lie in (0, 1]");
  }
  const auto area = h * w;
  const auto pixels = n * area;
  const double* z = logits.data().data();

  std::vector<double> prob(static_cast<std::size_t>(pixels), 1.0);
  std::vector<double> nll(static_cast<std::size_t>(pixels), 0.0);
  std::vector<std::uint8_t> valid(static_cast<std::size_t>(pixels), 0);
  std::int64_t valid_count = 0;
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t i = 0; i < area; ++i) {
      const auto px = b * area + i;
      const int label = labels.labels[static_cast<std::size_t>(px)];
      if (label == ignore_index) continue;
      if (label < 0 || label >= k) {
        throw ValidationError("label " + std::to_string(label) + " outside [0, " +
                              std::to_string(k) + ") and not the ignore index");
      }
      double mx = -INFINITY;
      for (std::int64_t c = 0; c < k; ++c) mx = std::max(mx, z[(b * k + c) * area + i]);
      double s = 0.0;
      for (std::int64_t c = 0; c < k; ++c) s += std::exp(z[(b * k + c) * area + i] - mx);
      const double lse = mx + std::log(s);
      nll[px] = lse - z[(b * k + label) * area + i];
      prob[px] = std::exp(-nll[px]);
      valid[px] = 1;
      ++valid_count;
    }
  }

  std::vector<std::uint8_t> mask(static_cast<std::size_t>(pixels), 0);
  if (selection && selection->frozen) {
    if (static_cast<std::int64_t>(selection->mask.size()) != pixels) {
      throw ValidationError("frozen OHEM selection has the wrong size");
    }
    for (std::int64_t p = 0; p < pixels; ++p) mask[p] = selection->mask[p] && valid[p];
  } else if (valid_count > 0) {
    const auto min_kept = static_cast<std::int64_t>(
        std::ceil(cfg.min_kept_fraction * static_cast<double>(valid_count)));
    std::int64_t hard = 0;
    for (std::int64_t p = 0; p < pixels; ++p) {
      if (valid[p] && prob[p] < cfg.prob_threshold) {
        mask[p] = 1;
        ++hard;
      }
    }
    if (hard < min_kept) {
      std::vector<std::int64_t> order;
      order.reserve(static_cast<std::size_t>(valid_count));
      for (std::int64_t p = 0; p < pixels; ++p) {
        if (valid[p]) order.push_back(p);
      }
      std::stable_sort(order.begin(), order.end(),
                       [&](std::int64_t a, std::int64_t b) { return prob[a] < prob[b]; });
      std::fill(mask.begin(), mask.end(), 0);
      for (std::int64_t j = 0; j < min_kept; ++j) mask[order[j]] = 1;
    }
  }
  const std::int64_t kept = std::count(mask.begin(), mask.end(), std::uint8_t{1});

  double loss = 0.0;
  for (std::int64_t p = 0; p < pixels; ++p) {
    if (mask[p]) loss += nll[p];
  }
  if (kept > 0) loss /= static_cast<double>(kept);

  if (selection) {
    selection->mask = mask;
    selection->kept = kept;
  }

  auto li = logits.impl();
  auto label_copy = labels.labels;
  return make_result(
      {1}, {loss}, "ohem_cross_entropy", {logits},
      [li, mask = std::move(mask), label_copy = std::move(label_copy), kept, n, k, area](
          const TensorImpl& res) {
        auto gz = li->grad_buffer();
        if (kept == 0) return;
        const double scale = res.grad[0] / static_cast<double>(kept);
        const double* z = li->data.data();
        for (std::int64_t b = 0; b < n; ++b) {
          for (std::int64_t i = 0; i < area; ++i) {
            const auto px = b * area + i;
            if (!mask[px]) continue;
            double mx = -INFINITY;
            for (std::int64_t c = 0; c < k; ++c) mx = std::max(mx, z[(b * k + c) * area + i]);
            double s = 0.0;
            for (std::int64_t c = 0; c < k; ++c) s += std::exp(z[(b * k + c) * area + i] - mx);
            const int label = label_copy[static_cast<std::size_t>(px)];
            for (std::int64_t c = 0; c < k; ++c) {
              const auto idx = (b * k + c) * area + i;
              const double pc = std::exp(z[idx] - mx) / s;
              gz[idx] += scale * (pc - (c == label ? 1.0 : 0.0));
            }
          }
        }
      });
}

}  // namespace gain
