#include "gemm.hpp"

#include <cstdint>

#include <Eigen/Core>

namespace gain::detail {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

bool aligned64(const double* p) { return reinterpret_cast<std::uintptr_t>(p) % 64 == 0; }

// Row-major view of op(x) (rows x cols) at a 64-byte aligned address.
const double* staged(const double* x, bool trans, std::int64_t rows, std::int64_t cols,
                     RowMatrix& scratch) {
  if (!trans && aligned64(x)) return x;
  if (trans) {
    scratch = ConstMatMap(x, cols, rows).transpose();
  } else {
    scratch = ConstMatMap(x, rows, cols);
  }
  return scratch.data();
}

}  // namespace

void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
          const double* a, const double* b, double* c, bool accumulate) {
  RowMatrix sa, sb;
  ConstMatMap am(staged(a, trans_a, m, k, sa), m, k);
  ConstMatMap bm(staged(b, trans_b, k, n, sb), k, n);
  MatMap out(c, m, n);
  if (!accumulate && aligned64(c)) {
    out.noalias() = am * bm;
    return;
  }
  RowMatrix sc(m, n);
  sc.noalias() = am * bm;
  if (accumulate) {
    out += sc;
  } else {
    out = sc;
  }
}

void transpose(const double* src, std::int64_t rows, std::int64_t cols, double* dst,
               bool accumulate) {
  for (std::int64_t i = 0; i < rows; ++i)
    for (std::int64_t j = 0; j < cols; ++j) {
      if (accumulate) {
        dst[j * rows + i] += src[i * cols + j];
      } else {
        dst[j * rows + i] = src[i * cols + j];
      }
    }
}

}  // namespace gain::detail
