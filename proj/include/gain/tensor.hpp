#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gain {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl;

// Backward rule of one recorded operation. Receives the operation's output
// (whose grad is populated) and accumulates into the grads of its inputs.
using BackwardFn = std::function<void(const TensorImpl& out)>;

struct Node {
  std::uint64_t seq = 0;  // execution order within the recording thread
  std::string op;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  BackwardFn backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  std::shared_ptr<Node> node;  // null for leaves

  // Returns the grad buffer, allocating zeros on first use.
  std::span<double> grad_buffer();
};

// Dense row-major double tensor with reverse-mode differentiation.
//
// A Tensor is a cheap handle; copies share the underlying storage. Values are
// immutable after creation apart from grad accumulation and explicit
// parameter updates through mutable_data().
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::int64_t dim(std::size_t axis) const;
  std::int64_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::int64_t> index) const;
  std::vector<double> to_vector() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();
  bool is_leaf() const;

  // Same values, no history.
  Tensor detach() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Replays recorded backward rules in reverse execution order starting from a
// scalar loss. Every requires_grad tensor reachable from the loss ends up with
// a populated grad. Leaf grads accumulate across calls.
void backward(const Tensor& loss);

bool grad_enabled();

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Builds the output of a differentiable operation. A node is recorded only
// when grad mode is on and at least one input requires grad.
Tensor make_result(Shape shape, std::vector<double> data, std::string_view op,
                   const std::vector<Tensor>& inputs, BackwardFn backward_fn);

}  // namespace gain
