#pragma once

#include <cstdint>
#include <vector>

#include "gain/tensor.hpp"

namespace gain {

enum class BinaryOp { add, sub, mul, div };

// Elementwise binary op with right-aligned broadcasting: each pair of
// dimensions must be equal or one of them 1 (a single-element tensor acts as
// a scalar). Mismatches raise ValidationError naming both shapes.
Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b);
Tensor elementwise(BinaryOp op, const Tensor& a, double b);

inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::add, a, b); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::sub, a, b); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::mul, a, b); }
inline Tensor div(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::div, a, b); }
inline Tensor add(const Tensor& a, double b) { return elementwise(BinaryOp::add, a, b); }
inline Tensor mul(const Tensor& a, double b) { return elementwise(BinaryOp::mul, a, b); }

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double b) { return mul(a, b); }

Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);

// Sum / mean of all elements, shape (1).
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// [m x k] . [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);
// Batched: [B x m x k] . [B x k x n] -> [B x m x n]
Tensor bmm(const Tensor& a, const Tensor& b);
// Swaps the last two axes.
Tensor transpose_last2(const Tensor& x);

// Numerically stable softmax along `axis`. Non-finite inputs are rejected.
Tensor softmax(const Tensor& x, std::size_t axis);

Tensor concat(const std::vector<Tensor>& tensors, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::int64_t start,
             std::int64_t length);
// One dimension may be -1 and is inferred.
Tensor reshape(const Tensor& x, Shape shape);

}  // namespace gain
