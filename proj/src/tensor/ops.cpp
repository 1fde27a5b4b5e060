#include "gain/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gemm.hpp"
#include "gain/error.hpp"

namespace gain {

using detail::gemm;

namespace {

struct BroadcastPlan {
  Shape out;
  std::vector<std::int64_t> a_strides;  // per output axis, 0 when broadcast
  std::vector<std::int64_t> b_strides;
};

std::vector<std::int64_t> strides_for(const Shape& padded) {
  std::vector<std::int64_t> s(padded.size(), 0);
  std::int64_t acc = 1;
  for (std::size_t i = padded.size(); i-- > 0;) {
    s[i] = padded[i] == 1 ? 0 : acc;
    acc *= padded[i];
  }
  return s;
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape pa(rank, 1), pb(rank, 1), out(rank, 1);
  std::copy(a.begin(), a.end(), pa.begin() + static_cast<long>(rank - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + static_cast<long>(rank - b.size()));
  for (std::size_t i = 0; i < rank; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) {
      throw ValidationError("shapes " + shape_str(a) + " and " + shape_str(b) +
                            " are not broadcast-compatible");
    }
    out[i] = std::max(pa[i], pb[i]);
  }
  return {out, strides_for(pa), strides_for(pb)};
}

// Visits every output element with the matching flat indices into a and b.
template <typename F>
void for_each_broadcast(const BroadcastPlan& plan, F&& f) {
  const std::size_t rank = plan.out.size();
  const std::int64_t total = shape_numel(plan.out);
  std::vector<std::int64_t> idx(rank, 0);
  std::int64_t ia = 0, ib = 0;
  for (std::int64_t o = 0; o < total; ++o) {
    f(o, ia, ib);
    for (std::size_t ax = rank; ax-- > 0;) {
      ++idx[ax];
      ia += plan.a_strides[ax];
      ib += plan.b_strides[ax];
      if (idx[ax] < plan.out[ax]) break;
      ia -= plan.a_strides[ax] * plan.out[ax];
      ib -= plan.b_strides[ax] * plan.out[ax];
      idx[ax] = 0;
    }
  }
}

double apply(BinaryOp op, double x, double y) {
  switch (op) {
    case BinaryOp::add: return x + y;
    case BinaryOp::sub: return x - y;
    case BinaryOp::mul: return x * y;
    case BinaryOp::div: return x / y;
  }
  return 0.0;
}

const char* op_name(BinaryOp op) {
  switch (op) {
    case BinaryOp::add: return "add";
    case BinaryOp::sub: return "sub";
    case BinaryOp::mul: return "mul";
    case BinaryOp::div: return "div";
  }
  return "?";
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ValidationError(std::string(what) + " expects rank " +
                          std::to_string(rank) + ", got " + shape_str(t.shape()));
  }
}

}  // namespace

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b) {
  const bool same = a.shape() == b.shape();
  BroadcastPlan plan = same ? BroadcastPlan{a.shape(), {}, {}}
                            : plan_broadcast(a.shape(), b.shape());
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(static_cast<std::size_t>(shape_numel(plan.out)));
  if (same) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = apply(op, av[i], bv[i]);
  } else {
    for_each_broadcast(plan, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
      out[o] = apply(op, av[ia], bv[ib]);
    });
  }
  auto ai = a.impl();
  auto bi = b.impl();
  return make_result(
      plan.out, std::move(out), op_name(op), {a, b},
      [op, ai, bi, plan, same](const TensorImpl& res) {
        const auto& g = res.grad;
        std::span<double> ga, gb;
        if (ai->requires_grad) ga = ai->grad_buffer();
        if (bi->requires_grad) gb = bi->grad_buffer();
        const auto& x = ai->data;
        const auto& y = bi->data;
        auto step = [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
          const double go = g[o];
          switch (op) {
            case BinaryOp::add:
              if (!ga.empty()) ga[ia] += go;
              if (!gb.empty()) gb[ib] += go;
              break;
            case BinaryOp::sub:
              if (!ga.empty()) ga[ia] += go;
              if (!gb.empty()) gb[ib] -= go;
              break;
            case BinaryOp::mul:
              if (!ga.empty()) ga[ia] += go * y[ib];
              if (!gb.empty()) gb[ib] += go * x[ia];
              break;
            case BinaryOp::div:
              if (!ga.empty()) ga[ia] += go / y[ib];
              if (!gb.empty()) gb[ib] -= go * x[ia] / (y[ib] * y[ib]);
              break;
          }
        };
        if (same) {
          for (std::int64_t i = 0; i < static_cast<std::int64_t>(g.size()); ++i) step(i, i, i);
        } else {
          for_each_broadcast(plan, step);
        }
      });
}

Tensor elementwise(BinaryOp op, const Tensor& a, double b) {
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = apply(op, av[i], b);
  auto ai = a.impl();
  return make_result(a.shape(), std::move(out), op_name(op), {a},
                     [op, ai, b](const TensorImpl& res) {
                       auto ga = ai->grad_buffer();
                       double d = 1.0;
                       if (op == BinaryOp::mul) d = b;
                       if (op == BinaryOp::div) d = 1.0 / b;
                       for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += res.grad[i] * d;
                     });
}

Tensor relu(const Tensor& x) {
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  auto xi = x.impl();
  return make_result(x.shape(), std::move(out), "relu", {x},
                     [xi](const TensorImpl& res) {
                       auto gx = xi->grad_buffer();
                       for (std::size_t i = 0; i < gx.size(); ++i) {
                         if (xi->data[i] > 0.0) gx[i] += res.grad[i];
                       }
                     });
}

Tensor exp(const Tensor& x) {
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(xv[i]);
  auto xi = x.impl();
  return make_result(x.shape(), std::move(out), "exp", {x},
                     [xi](const TensorImpl& res) {
                       auto gx = xi->grad_buffer();
                       for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += res.grad[i] * res.data[i];
                     });
}

Tensor log(const Tensor& x) {
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(xv[i]);
  auto xi = x.impl();
  return make_result(x.shape(), std::move(out), "log", {x},
                     [xi](const TensorImpl& res) {
                       auto gx = xi->grad_buffer();
                       for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += res.grad[i] / xi->data[i];
                     });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  auto xi = x.impl();
  return make_result({1}, {s}, "sum", {x}, [xi](const TensorImpl& res) {
    auto gx = xi->grad_buffer();
    for (auto& g : gx) g += res.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  return mul(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ValidationError("matmul inner dimensions differ: " + shape_str(a.shape()) +
                          " x " + shape_str(b.shape()));
  }
  std::vector<double> out(static_cast<std::size_t>(m * n));
  gemm(false, false, m, n, k, a.data().data(), b.data().data(), out.data(), false);
  auto ai = a.impl();
  auto bi = b.impl();
  return make_result({m, n}, std::move(out), "matmul", {a, b},
                     [ai, bi, m, k, n](const TensorImpl& res) {
                       const double* g = res.grad.data();
                       if (ai->requires_grad) {
                         gemm(false, true, m, k, n, g, bi->data.data(),
                              ai->grad_buffer().data(), true);
                       }
                       if (bi->requires_grad) {
                         gemm(true, false, k, n, m, ai->data.data(), g,
                              bi->grad_buffer().data(), true);
                       }
                     });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  require_rank(a, 3, "bmm");
  require_rank(b, 3, "bmm");
  const auto batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  if (b.dim(0) != batch || b.dim(1) != k) {
    throw ValidationError("bmm shapes incompatible: " + shape_str(a.shape()) +
                          " x " + shape_str(b.shape()));
  }
  std::vector<double> out(static_cast<std::size_t>(batch * m * n));
  for (std::int64_t i = 0; i < batch; ++i) {
    gemm(false, false, m, n, k, a.data().data() + i * m * k, b.data().data() + i * k * n,
         out.data() + i * m * n, false);
  }
  auto ai = a.impl();
  auto bi = b.impl();
  return make_result(
      {batch, m, n}, std::move(out), "bmm", {a, b},
      [ai, bi, batch, m, k, n](const TensorImpl& res) {
        for (std::int64_t i = 0; i < batch; ++i) {
          const double* g = res.grad.data() + i * m * n;
          if (ai->requires_grad) {
            gemm(false, true, m, k, n, g, bi->data.data() + i * k * n,
                 ai->grad_buffer().data() + i * m * k, true);
          }
          if (bi->requires_grad) {
            gemm(true, false, k, n, m, ai->data.data() + i * m * k, g,
                 bi->grad_buffer().data() + i * k * n, true);
          }
        }
      });
}

Tensor transpose_last2(const Tensor& x) {
  if (x.rank() < 2) throw ValidationError("transpose_last2 needs rank >= 2");
  Shape shape = x.shape();
  const auto r = shape[shape.size() - 2], c = shape[shape.size() - 1];
  const auto batch = x.numel() / (r * c);
  std::swap(shape[shape.size() - 2], shape[shape.size() - 1]);
  std::vector<double> out(static_cast<std::size_t>(x.numel()));
  for (std::int64_t i = 0; i < batch; ++i) {
    detail::transpose(x.data().data() + i * r * c, r, c, out.data() + i * r * c, false);
  }
  auto xi = x.impl();
  return make_result(shape, std::move(out), "transpose", {x},
                     [xi, batch, r, c](const TensorImpl& res) {
                       auto gx = xi->grad_buffer();
                       for (std::int64_t i = 0; i < batch; ++i) {
                         detail::transpose(res.grad.data() + i * r * c, c, r,
                                           gx.data() + i * r * c, true);
                       }
                     });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw ValidationError("softmax axis " + std::to_string(axis) +
                          " out of range for " + shape_str(x.shape()));
  }
  const auto& s = x.shape();
  std::int64_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::int64_t n = s[axis];
  const auto xv = x.data();
  for (double v : xv) {
    if (!std::isfinite(v)) throw ValidationError("softmax input is not finite");
  }
  std::vector<double> out(xv.size());
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      const std::int64_t base = o * n * inner + in;
      double mx = xv[base];
      for (std::int64_t j = 1; j < n; ++j) mx = std::max(mx, xv[base + j * inner]);
      double z = 0.0;
      for (std::int64_t j = 0; j < n; ++j) {
        const double e = std::exp(xv[base + j * inner] - mx);
        out[base + j * inner] = e;
        z += e;
      }
      const double inv = 1.0 / z;
      for (std::int64_t j = 0; j < n; ++j) out[base + j * inner] *= inv;
    }
  }
  auto xi = x.impl();
  return make_result(s, std::move(out), "softmax", {x},
                     [xi, outer, inner, n](const TensorImpl& res) {
                       auto gx = xi->grad_buffer();
                       const auto& y = res.data;
                       const auto& g = res.grad;
                       for (std::int64_t o = 0; o < outer; ++o) {
                         for (std::int64_t in = 0; in < inner; ++in) {
                           const std::int64_t base = o * n * inner + in;
                           double dot = 0.0;
                           for (std::int64_t j = 0; j < n; ++j) {
                             dot += g[base + j * inner] * y[base + j * inner];
                           }
                           for (std::int64_t j = 0; j < n; ++j) {
                             const auto p = base + j * inner;
                             gx[p] += y[p] * (g[p] - dot);
                           }
                         }
                       }
                     });
}

Tensor concat(const std::vector<Tensor>& tensors, std::size_t axis) {
  if (tensors.empty()) throw ValidationError("concat of zero tensors");
  const Shape& first = tensors.front().shape();
  if (axis >= first.size()) {
    throw ValidationError("concat axis " + std::to_string(axis) +
                          " out of range for " + shape_str(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& t : tensors) {
    const Shape& s = t.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) ok = false;
    }
    if (!ok) {
      throw ValidationError("concat: " + shape_str(s) + " does not match " +
                            shape_str(first) + " outside axis " +
                            std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  std::int64_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  const std::int64_t out_row = out_shape[axis] * inner;

  std::vector<double> out(static_cast<std::size_t>(shape_numel(out_shape)));
  std::vector<std::int64_t> offsets;
  std::int64_t offset = 0;
  for (const auto& t : tensors) {
    offsets.push_back(offset);
    const std::int64_t row = t.dim(axis) * inner;
    const auto tv = t.data();
    for (std::int64_t o = 0; o < outer; ++o) {
      std::copy_n(tv.data() + o * row, row, out.data() + o * out_row + offset);
    }
    offset += row;
  }
  std::vector<std::shared_ptr<TensorImpl>> impls;
  for (const auto& t : tensors) impls.push_back(t.impl());
  return make_result(out_shape, std::move(out), "concat", tensors,
                     [impls, offsets, outer, inner, out_row, axis](const TensorImpl& res) {
                       for (std::size_t k = 0; k < impls.size(); ++k) {
                         if (!impls[k]->requires_grad) continue;
                         auto g = impls[k]->grad_buffer();
                         const std::int64_t row = impls[k]->shape[axis] * inner;
                         for (std::int64_t o = 0; o < outer; ++o) {
                           const double* src = res.grad.data() + o * out_row + offsets[k];
                           double* dst = g.data() + o * row;
                           for (std::int64_t i = 0; i < row; ++i) dst[i] += src[i];
                         }
                       }
                     });
}

Tensor slice(const Tensor& x, std::size_t axis, std::int64_t start,
             std::int64_t length) {
  const Shape& s = x.shape();
  if (axis >= s.size() || start < 0 || length <= 0 || start + length > s[axis]) {
    throw ValidationError("slice [" + std::to_string(start) + ", +" +
                          std::to_string(length) + ") on axis " +
                          std::to_string(axis) + " invalid for " + shape_str(s));
  }
  std::int64_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  Shape out_shape = s;
  out_shape[axis] = length;
  const std::int64_t in_row = s[axis] * inner;
  const std::int64_t out_row = length * inner;
  const std::int64_t off = start * inner;
  std::vector<double> out(static_cast<std::size_t>(outer * out_row));
  const auto xv = x.data();
  for (std::int64_t o = 0; o < outer; ++o) {
    std::copy_n(xv.data() + o * in_row + off, out_row, out.data() + o * out_row);
  }
  auto xi = x.impl();
  return make_result(out_shape, std::move(out), "slice", {x},
                     [xi, outer, in_row, out_row, off](const TensorImpl& res) {
                       auto g = xi->grad_buffer();
                       for (std::int64_t o = 0; o < outer; ++o) {
                         for (std::int64_t i = 0; i < out_row; ++i) {
                           g[o * in_row + off + i] += res.grad[o * out_row + i];
                         }
                       }
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  std::int64_t known = 1;
  int infer = -1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) throw ValidationError("reshape: more than one -1");
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0 && known > 0) shape[static_cast<std::size_t>(infer)] = x.numel() / known;
  if (shape_numel(shape) != x.numel()) {
    throw ValidationError("cannot reshape " + shape_str(x.shape()) + " to " +
                          shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  auto xi = x.impl();
  return make_result(std::move(shape), std::move(out), "reshape", {x},
                     [xi](const TensorImpl& res) {
                       auto g = xi->grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += res.grad[i];
                     });
}

}  // namespace gain
