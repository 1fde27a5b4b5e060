#pragma once

#include <cstdint>

namespace gain::detail {

// Row-major C (=|+=) op(A) * op(B), op(A) m x k, op(B) k x n. A transposed
// operand is stored in its untransposed layout (k x m for A, n x k for B).
//
// Operands that are transposed or not 64-byte aligned are staged through
// aligned scratch, so vectorized kernels take the same path regardless of
// where the caller's buffers sit in memory.
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
          const double* a, const double* b, double* c, bool accumulate);

// dst[c * r + i] (+)= src[i * c + j] transposed, per r x c matrix.
void transpose(const double* src, std::int64_t rows, std::int64_t cols, double* dst,
               bool accumulate);

}  // namespace gain::detail
