#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mmfs {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// ---------------------------------------------------------------------------
// Numeric precision
//
// Values are held as doubles. In Float32 mode every stored value (operation
// results, leaves, optimizer updates) is rounded to the nearest float, so the
// tensors carry exactly the information a float buffer would. Float64 is the
// gradient-verification mode.
// ---------------------------------------------------------------------------

enum class Precision { Float32, Float64 };

Precision current_precision();
void set_precision(Precision precision);
double round_to_precision(double value);

class PrecisionScope {
 public:
  explicit PrecisionScope(Precision precision);
  ~PrecisionScope();
  PrecisionScope(const PrecisionScope&) = delete;
  PrecisionScope& operator=(const PrecisionScope&) = delete;

 private:
  Precision previous_;
};

// Recording of tape nodes is a per-thread switch.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool enabled);
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class EnableGradGuard {
 public:
  EnableGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(true); }
  ~EnableGradGuard() { GradMode::set_enabled(previous_); }
  EnableGradGuard(const EnableGradGuard&) = delete;
  EnableGradGuard& operator=(const EnableGradGuard&) = delete;

 private:
  bool previous_;
};

struct Node;

/// Dense row-major tensor handle. Copies share storage; values are treated
/// as immutable once built, except for leaf parameters updated by an
/// optimizer (or a gradient checker) through `mutable_values()`.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor ones(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);
  static Tensor vector(std::initializer_list<double> values, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  std::vector<double> to_vector() const;
  double item() const;
  double at(std::size_t flat_index) const;
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool requires_grad);
  bool is_leaf() const;

  /// Accumulated gradient from `backward`; undefined until one arrives.
  Tensor grad() const;
  void zero_grad();
  void accumulate_grad(const Tensor& gradient);

  /// Same values, no history, no gradient requirement.
  Tensor detach() const;

  const std::shared_ptr<Node>& grad_fn() const;
  void set_grad_fn(std::shared_ptr<Node> node);

  /// Writable view of a leaf's values. Rejects non-leaf tensors.
  std::span<double> mutable_values();

  /// Identity of the underlying storage.
  const void* id() const { return impl_.get(); }

  /// Reverse pass from this scalar. See autograd.hpp.
  void backward(bool retain_graph = false) const;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

using BackwardFn = std::function<std::vector<Tensor>(const Tensor& grad_output)>;

/// One recorded operation on the tape. `inputs` are the parents; the
/// backward function maps the output gradient to one gradient per input
/// (undefined entries mean "no contribution").
struct Node {
  std::string op;
  std::vector<Tensor> inputs;
  BackwardFn backward;
  Shape output_shape;
  // The backward function is itself built from recorded operations, so a
  // gradient computed with create_graph can be differentiated again.
  bool differentiable_backward = false;
  bool released = false;
};

namespace detail {

/// Builds an operation result, applying the precision policy.
Tensor make_result(Shape shape, std::vector<double> values);

/// Attaches a tape node to `output` when recording is on and any input
/// requires a gradient.
void record(Tensor& output, std::string op, std::vector<Tensor> inputs, BackwardFn backward,
            bool differentiable_backward);

bool any_requires_grad(std::initializer_list<const Tensor*> tensors);

}  // namespace detail

}  // namespace mmfs
