#include <cmath>

#include "../tensor/gemm.hpp"
#include "gain/error.hpp"
#include "gain/nn.hpp"

namespace gain {

using detail::gemm;

namespace {

struct ConvGeometry {
  std::int64_t n, cin, h, w, cout, k, stride, pad, ho, wo;

  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
  std::int64_t col_rows() const { return cin * k * k; }
  std::int64_t col_cols() const { return ho * wo; }
};

void im2col(const double* x, const ConvGeometry& g, double* cols) {
  for (std::int64_t c = 0; c < g.cin; ++c) {
    for (std::int64_t ky = 0; ky < g.k; ++ky) {
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        double* row = cols + ((c * g.k + ky) * g.k + kx) * g.ho * g.wo;
        for (std::int64_t oy = 0; oy < g.ho; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          for (std::int64_t ox = 0; ox < g.wo; ++ox) {
            const std::int64_t ix = ox * g.stride - g.pad + kx;
            row[oy * g.wo + ox] = (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w)
                                      ? x[(c * g.h + iy) * g.w + ix]
                                      : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* x) {
  for (std::int64_t c = 0; c < g.cin; ++c) {
    for (std::int64_t ky = 0; ky < g.k; ++ky) {
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        const double* row = cols + ((c * g.k + ky) * g.k + kx) * g.ho * g.wo;
        for (std::int64_t oy = 0; oy < g.ho; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          for (std::int64_t ox = 0; ox < g.wo; ++ox) {
            const std::int64_t ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) x[(c * g.h + iy) * g.w + ix] += row[oy * g.wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace

ConvParams make_conv(std::int64_t in_channels, std::int64_t out_channels, int kernel,
                     int stride, bool with_bias, Rng& rng, double init_gain) {
  if (kernel != 1 && kernel != 3) throw ValidationError("conv kernel must be 1 or 3");
  ConvParams p;
  const double fan_in = static_cast<double>(in_channels * kernel * kernel);
  p.weight = randn({out_channels, in_channels, kernel, kernel}, rng,
                   init_gain / std::sqrt(fan_in), true);
  if (with_bias) p.bias = Tensor::zeros({out_channels}, true);
  p.stride = stride;
  p.padding = (kernel - 1) / 2;
  return p;
}

Tensor conv2d(const Tensor& x, const ConvParams& p) {
  if (x.rank() != 4) throw ValidationError("conv2d expects NCHW input, got " + shape_str(x.shape()));
  if (p.weight.rank() != 4 || p.weight.dim(2) != p.weight.dim(3)) {
    throw ValidationError("conv2d weight must be [C_out, C_in, k, k]");
  }
  if (x.dim(1) != p.in_channels()) {
    throw ValidationError("conv2d channel mismatch: input " + shape_str(x.shape()) +
                          " vs weight " + shape_str(p.weight.shape()));
  }
  if (p.bias.defined() && (p.bias.rank() != 1 || p.bias.dim(0) != p.out_channels())) {
    throw ValidationError("conv2d bias must be [C_out]");
  }
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), p.out_channels(), p.kernel(),
                 p.stride, p.padding, 0, 0};
  g.ho = (g.h + 2 * g.pad - g.k) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - g.k) / g.stride + 1;
  if (g.h + 2 * g.pad < g.k || g.w + 2 * g.pad < g.k || g.ho < 1 || g.wo < 1) {
    throw ValidationError("conv2d input " + shape_str(x.shape()) + " too small for kernel");
  }

  const std::int64_t in_plane = g.cin * g.h * g.w;
  const std::int64_t out_plane = g.cout * g.ho * g.wo;
  std::vector<double> out(static_cast<std::size_t>(g.n * out_plane));
  std::vector<double> cols(g.pointwise() ? 0 : static_cast<std::size_t>(g.col_rows() * g.col_cols()));
  const double* wd = p.weight.data().data();
  const double* xd = x.data().data();
  for (std::int64_t b = 0; b < g.n; ++b) {
    const double* src = xd + b * in_plane;
    if (!g.pointwise()) {
      im2col(src, g, cols.data());
      src = cols.data();
    }
    double* y = out.data() + b * out_plane;
    gemm(false, false, g.cout, g.col_cols(), g.col_rows(), wd, src, y, false);
    if (p.bias.defined()) {
      const auto bias = p.bias.data();
      for (std::int64_t c = 0; c < g.cout; ++c)
        for (std::int64_t i = 0; i < g.col_cols(); ++i) y[c * g.col_cols() + i] += bias[c];
    }
  }

  std::vector<Tensor> inputs{x, p.weight};
  if (p.bias.defined()) inputs.push_back(p.bias);
  auto xi = x.impl();
  auto wi = p.weight.impl();
  auto bi = p.bias.defined() ? p.bias.impl() : nullptr;
  return make_result(
      {g.n, g.cout, g.ho, g.wo}, std::move(out), "conv2d", inputs,
      [xi, wi, bi, g, in_plane, out_plane](const TensorImpl& res) {
        std::vector<double> cols(g.pointwise() ? 0 : static_cast<std::size_t>(g.col_rows() * g.col_cols()));
        std::vector<double> dcols(cols.size());
        const double* wd = wi->data.data();
        for (std::int64_t b = 0; b < g.n; ++b) {
          const double* dy = res.grad.data() + b * out_plane;
          if (bi && bi->requires_grad) {
            auto gb = bi->grad_buffer();
            for (std::int64_t c = 0; c < g.cout; ++c) {
              double s = 0.0;
              for (std::int64_t i = 0; i < g.col_cols(); ++i) s += dy[c * g.col_cols() + i];
              gb[c] += s;
            }
          }
          if (wi->requires_grad) {
            const double* src = xi->data.data() + b * in_plane;
            if (!g.pointwise()) {
              im2col(src, g, cols.data());
              src = cols.data();
            }
            gemm(false, true, g.cout, g.col_rows(), g.col_cols(), dy, src,
                 wi->grad_buffer().data(), true);
          }
          if (xi->requires_grad) {
            double* gx = xi->grad_buffer().data() + b * in_plane;
            if (g.pointwise()) {
              gemm(true, false, g.cin, g.col_cols(), g.cout, wd, dy, gx, true);
            } else {
              gemm(true, false, g.col_rows(), g.col_cols(), g.cout, wd, dy, dcols.data(), false);
              col2im_add(dcols.data(), g, gx);
            }
          }
        }
      });
}

}  // namespace gain
