#include <cmath>

#include "gain/error.hpp"
#include "gain/nn.hpp"

namespace gain {

NormParams NormParams::make(std::int64_t channels) {
  NormParams p;
  p.scale = Tensor::full({channels}, 1.0, true);
  p.shift = Tensor::zeros({channels}, true);
  p.running_mean.assign(static_cast<std::size_t>(channels), 0.0);
  p.running_var.assign(static_cast<std::size_t>(channels), 1.0);
  return p;
}

Tensor batch_norm(const Tensor& x, NormParams& p, bool training) {
  if (x.rank() != 4 || x.dim(1) != p.channels()) {
    throw ValidationError("batch_norm: input " + shape_str(x.shape()) + " does not have " +
                          std::to_string(p.channels()) + " channels");
  }
  const auto n = x.dim(0), c = x.dim(1), area = x.dim(2) * x.dim(3);
  const auto count = n * area;
  const double* xd = x.data().data();
  const auto gamma = p.scale.data();
  const auto beta = p.shift.data();

  std::vector<double> mean(c), inv_std(c);
  if (training) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t i = 0; i < area; ++i) s += xd[(b * c + ch) * area + i];
      const double mu = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t i = 0; i < area; ++i) {
          const double d = xd[(b * c + ch) * area + i] - mu;
          ss += d * d;
        }
      const double var = ss / static_cast<double>(count);
      mean[ch] = mu;
      inv_std[ch] = 1.0 / std::sqrt(var + p.eps);
      const double unbiased = count > 1 ? ss / static_cast<double>(count - 1) : var;
      p.running_mean[ch] = (1.0 - p.momentum) * p.running_mean[ch] + p.momentum * mu;
      p.running_var[ch] = (1.0 - p.momentum) * p.running_var[ch] + p.momentum * unbiased;
    }
  } else {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      mean[ch] = p.running_mean[ch];
      inv_std[ch] = 1.0 / std::sqrt(p.running_var[ch] + p.eps);
    }
  }

  std::vector<double> out(static_cast<std::size_t>(x.numel()));
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t i = 0; i < area; ++i) {
        const auto k = (b * c + ch) * area + i;
        out[k] = gamma[ch] * (xd[k] - mean[ch]) * inv_std[ch] + beta[ch];
      }

  auto xi = x.impl();
  auto gi = p.scale.impl();
  auto bi = p.shift.impl();
  return make_result(
      x.shape(), std::move(out), "batch_norm", {x, p.scale, p.shift},
      [xi, gi, bi, mean, inv_std, training, n, c, area, count](const TensorImpl& res) {
        const auto& g = res.grad;
        const auto& xv = xi->data;
        for (std::int64_t ch = 0; ch < c; ++ch) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::int64_t b = 0; b < n; ++b)
            for (std::int64_t i = 0; i < area; ++i) {
              const auto k = (b * c + ch) * area + i;
              const double xhat = (xv[k] - mean[ch]) * inv_std[ch];
              sum_g += g[k];
              sum_gx += g[k] * xhat;
            }
          if (gi->requires_grad) gi->grad_buffer()[ch] += sum_gx;
          if (bi->requires_grad) bi->grad_buffer()[ch] += sum_g;
          if (!xi->requires_grad) continue;
          auto gx = xi->grad_buffer();
          const double scale = gi->data[ch] * inv_std[ch];
          if (training) {
            const double mg = sum_g / static_cast<double>(count);
            const double mgx = sum_gx / static_cast<double>(count);
            for (std::int64_t b = 0; b < n; ++b)
              for (std::int64_t i = 0; i < area; ++i) {
                const auto k = (b * c + ch) * area + i;
                const double xhat = (xv[k] - mean[ch]) * inv_std[ch];
                gx[k] += scale * (g[k] - mg - xhat * mgx);
              }
          } else {
            for (std::int64_t b = 0; b < n; ++b)
              for (std::int64_t i = 0; i < area; ++i) {
                const auto k = (b * c + ch) * area + i;
                gx[k] += scale * g[k];
              }
          }
        }
      });
}

}  // namespace gain
