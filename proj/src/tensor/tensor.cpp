#include "mmfs/tensor/tensor.hpp"

#include <atomic>
#include <sstream>

#include "mmfs/core/error.hpp"
#include "mmfs/tensor/autograd.hpp"

namespace mmfs {

namespace {

std::atomic<Precision> g_precision{Precision::Float32};
thread_local bool t_grad_enabled = true;

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Precision current_precision() { return g_precision.load(std::memory_order_relaxed); }

void set_precision(Precision precision) { g_precision.store(precision, std::memory_order_relaxed); }

double round_to_precision(double value) {
  if (current_precision() == Precision::Float32) return static_cast<double>(static_cast<float>(value));
  return value;
}

PrecisionScope::PrecisionScope(Precision precision) : previous_(current_precision()) {
  set_precision(precision);
}

PrecisionScope::~PrecisionScope() { set_precision(previous_); }

bool GradMode::enabled() { return t_grad_enabled; }
void GradMode::set_enabled(bool enabled) { t_grad_enabled = enabled; }

struct Tensor::Impl {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::shared_ptr<Impl> grad;
  std::shared_ptr<Node> grad_fn;
};

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor", "empty dimension in shape " + shape_to_string(shape));
  }
  if (values.size() != shape_numel(shape)) {
    throw DimensionError("tensor", "shape " + shape_to_string(shape) + " needs " +
                                       std::to_string(shape_numel(shape)) + " values, got " +
                                       std::to_string(values.size()));
  }
  if (current_precision() == Precision::Float32) {
    for (double& v : values) v = static_cast<double>(static_cast<float>(v));
  }
  impl_ = std::make_shared<Impl>();
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::ones(Shape shape, bool requires_grad) { return full(std::move(shape), 1.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows, bool requires_grad) {
  const std::size_t n_rows = rows.size();
  const std::size_t n_cols = n_rows ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(n_rows * n_cols);
  for (const auto& row : rows) {
    if (row.size() != n_cols) throw DimensionError("matrix", "ragged rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor({n_rows, n_cols}, std::move(values), requires_grad);
}

Tensor Tensor::vector(std::initializer_list<double> values, bool requires_grad) {
  return Tensor({values.size()}, std::vector<double>(values), requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::size(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("size", "axis " + std::to_string(axis) + " out of range for shape " +
                                     shape_to_string(shape()));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->values.size(); }

std::span<const double> Tensor::values() const { return impl_->values; }

std::vector<double> Tensor::to_vector() const { return impl_->values; }

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item", "tensor of shape " + shape_to_string(shape()) + " is not a scalar");
  return impl_->values[0];
}

double Tensor::at(std::size_t flat_index) const { return impl_->values.at(flat_index); }

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw DimensionError("at", "expected a matrix, got " + shape_to_string(shape()));
  return impl_->values.at(row * impl_->shape[1] + col);
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool requires_grad) {
  impl_->requires_grad = requires_grad;
  return *this;
}

bool Tensor::is_leaf() const { return impl_->grad_fn == nullptr; }

Tensor Tensor::grad() const {
  Tensor g;
  g.impl_ = impl_->grad;
  return g;
}

void Tensor::zero_grad() { impl_->grad.reset(); }

void Tensor::accumulate_grad(const Tensor& gradient) {
  if (gradient.shape() != shape()) {
    throw DimensionError("accumulate_grad", "gradient shape " + shape_to_string(gradient.shape()) +
                                                " differs from " + shape_to_string(shape()));
  }
  if (!impl_->grad) {
    auto fresh = std::make_shared<Impl>();
    fresh->shape = gradient.shape();
    fresh->values = gradient.to_vector();
    impl_->grad = std::move(fresh);
    return;
  }
  auto& acc = impl_->grad->values;
  const auto incoming = gradient.values();
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = round_to_precision(acc[i] + incoming[i]);
}

Tensor Tensor::detach() const {
  Tensor out;
  out.impl_ = std::make_shared<Impl>();
  out.impl_->shape = impl_->shape;
  out.impl_->values = impl_->values;
  return out;
}

const std::shared_ptr<Node>& Tensor::grad_fn() const { return impl_->grad_fn; }

void Tensor::set_grad_fn(std::shared_ptr<Node> node) { impl_->grad_fn = std::move(node); }

std::span<double> Tensor::mutable_values() {
  if (!is_leaf()) throw Error("mutable_values: only leaf tensors may be modified in place");
  return impl_->values;
}

void Tensor::backward(bool retain_graph) const { mmfs::backward(*this, retain_graph); }

namespace detail {

Tensor make_result(Shape shape, std::vector<double> values) {
  return Tensor(std::move(shape), std::move(values), false);
}

bool any_requires_grad(std::initializer_list<const Tensor*> tensors) {
  for (const Tensor* t : tensors) {
    if (t->requires_grad()) return true;
  }
  return false;
}

void record(Tensor& output, std::string op, std::vector<Tensor> inputs, BackwardFn backward,
            bool differentiable_backward) {
  if (!GradMode::enabled()) return;
  bool needed = false;
  for (const Tensor& input : inputs) needed = needed || input.requires_grad();
  if (!needed) return;
  auto node = std::make_shared<Node>();
  node->op = std::move(op);
  node->inputs = std::move(inputs);
  node->backward = std::move(backward);
  node->output_shape = output.shape();
  node->differentiable_backward = differentiable_backward;
  output.set_requires_grad(true);
  output.set_grad_fn(std::move(node));
}

}  // namespace detail

}  // namespace mmfs
