#include "gain/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "gain/error.hpp"

namespace gain {

namespace {

thread_local bool t_grad_enabled = true;
thread_local std::uint64_t t_next_seq = 1;

void check_shape(const Shape& shape) {
  for (auto d : shape) {
    if (d <= 0) {
      throw ValidationError("tensor dimensions must be positive, got " +
                            shape_str(shape));
    }
  }
}

}  // namespace

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::span<double> TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_shape(shape);
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(static_cast<std::size_t>(shape_numel(shape)), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  check_shape(shape);
  if (static_cast<std::int64_t>(data.size()) != shape_numel(shape)) {
    throw ValidationError("data length " + std::to_string(data.size()) +
                          " does not match shape " + shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return full({1}, value, requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::int64_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw ValidationError("axis " + std::to_string(axis) +
                          " out of range for shape " + shape_str(shape()));
  }
  return impl_->shape[axis];
}

std::int64_t Tensor::numel() const {
  return static_cast<std::int64_t>(impl_->data.size());
}

std::span<const double> Tensor::data() const { return impl_->data; }
std::span<double> Tensor::mutable_data() { return impl_->data; }

double Tensor::item() const {
  if (impl_->data.size() != 1) {
    throw ValidationError("item() needs a single-element tensor, got " +
                          shape_str(shape()));
  }
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::int64_t> index) const {
  const auto& s = impl_->shape;
  if (index.size() != s.size()) {
    throw ValidationError("index rank does not match shape " + shape_str(s));
  }
  std::int64_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i < 0 || i >= s[axis]) throw ValidationError("index out of range");
    flat = flat * s[axis] + i;
    ++axis;
  }
  return impl_->data[static_cast<std::size_t>(flat)];
}

std::vector<double> Tensor::to_vector() const { return impl_->data; }

bool Tensor::requires_grad() const { return impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
  impl_->requires_grad = value;
  return *this;
}

bool Tensor::has_grad() const { return !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const { return impl_->grad; }

void Tensor::zero_grad() { impl_->grad.clear(); }

bool Tensor::is_leaf() const { return impl_->node == nullptr; }

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) {
  t_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Tensor make_result(Shape shape, std::vector<double> data, std::string_view op,
                   const std::vector<Tensor>& inputs, BackwardFn backward_fn) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  const bool any_grad =
      t_grad_enabled &&
      std::any_of(inputs.begin(), inputs.end(),
                  [](const Tensor& t) { return t.requires_grad(); });
  if (any_grad) {
    auto node = std::make_shared<Node>();
    node->seq = t_next_seq++;
    node->op = std::string(op);
    node->inputs.reserve(inputs.size());
    for (const auto& t : inputs) node->inputs.push_back(t.impl());
    node->backward = std::move(backward_fn);
    impl->node = std::move(node);
    impl->requires_grad = true;
  }
  return Tensor(std::move(impl));
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ValidationError("backward() needs a scalar loss, got shape " +
                          (loss.defined() ? shape_str(loss.shape()) : "()"));
  }
  if (!loss.requires_grad()) {
    throw ValidationError("backward() on a loss that does not require grad");
  }

  // Collect every tensor with recorded history reachable from the loss.
  std::vector<TensorImpl*> order;
  std::unordered_set<const TensorImpl*> seen;
  std::vector<TensorImpl*> stack{loss.impl().get()};
  while (!stack.empty()) {
    TensorImpl* t = stack.back();
    stack.pop_back();
    if (!seen.insert(t).second) continue;
    if (!t->node) continue;
    order.push_back(t);
    for (const auto& in : t->node->inputs) {
      if (in->requires_grad) stack.push_back(in.get());
    }
  }
  std::sort(order.begin(), order.end(), [](const TensorImpl* a, const TensorImpl* b) {
    return a->node->seq > b->node->seq;
  });

  loss.impl()->grad_buffer()[0] += 1.0;
  for (TensorImpl* t : order) {
    if (t->grad.empty()) t->grad_buffer();
    t->node->backward(*t);
  }
}

}  // namespace gain
