#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mmfs/tensor/tensor.hpp"

namespace mmfs {

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

/// Ordered registry of trainable tensors. Registration order is the
/// checkpoint order.
class ParameterList {
 public:
  /// Marks `tensor` as requiring a gradient and appends it. Names must be unique.
  void add(std::string name, Tensor tensor);

  const std::vector<NamedParameter>& entries() const { return entries_; }
  std::vector<Tensor> tensors() const;
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  /// Total number of scalar entries.
  std::size_t parameter_count() const;
  const NamedParameter* find(const std::string& name) const;
  void zero_grad();

 private:
  std::vector<NamedParameter> entries_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  // false: weight_decay * theta is added to the gradient before the moment
  // updates (L2-coupled). true: applied directly to the parameters.
  bool decoupled_weight_decay = false;
};

struct OptimizerState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;
};

class Adam {
 public:
  Adam(ParameterList parameters, AdamConfig config);

  /// One update from the parameters' accumulated `.grad()`; a missing
  /// gradient counts as zero. Throws NumericError naming the first
  /// parameter with a non-finite gradient, before anything is modified.
  void step();
  void zero_grad() { parameters_.zero_grad(); }

  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  double learning_rate() const { return config_.learning_rate; }
  const AdamConfig& config() const { return config_; }
  const OptimizerState& state() const { return state_; }

 private:
  ParameterList parameters_;
  AdamConfig config_;
  OptimizerState state_;
};

/// base_lr * factor^floor(epoch / period).
double lr_schedule(std::size_t epoch, double base_lr, std::size_t period = 80, double factor = 0.5);

}  // namespace mmfs
