#include "mmfs/tensor/optim.hpp"

#include <cmath>

#include "mmfs/core/error.hpp"

namespace mmfs {

void ParameterList::add(std::string name, Tensor tensor) {
  if (!tensor.defined()) throw Error("ParameterList: parameter '" + name + "' is undefined");
  if (!tensor.is_leaf()) throw Error("ParameterList: parameter '" + name + "' is not a leaf");
  if (find(name) != nullptr) throw Error("ParameterList: duplicate parameter '" + name + "'");
  tensor.set_requires_grad(true);
  entries_.push_back({std::move(name), std::move(tensor)});
}

std::vector<Tensor> ParameterList::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.tensor);
  return out;
}

std::size_t ParameterList::parameter_count() const {
  std::size_t total = 0;
  for (const auto& e : entries_) total += e.tensor.numel();
  return total;
}

const NamedParameter* ParameterList::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

void ParameterList::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

Adam::Adam(ParameterList parameters, AdamConfig config) : parameters_(std::move(parameters)), config_(config) {
  for (const auto& e : parameters_.entries()) {
    state_.first_moment.emplace_back(e.tensor.numel(), 0.0);
    state_.second_moment.emplace_back(e.tensor.numel(), 0.0);
  }
}

void Adam::step() {
  for (const auto& e : parameters_.entries()) {
    const Tensor g = e.tensor.grad();
    if (!g.defined()) continue;
    for (double v : g.values()) {
      if (!std::isfinite(v)) throw NumericError("adam: non-finite gradient in parameter '" + e.name + "'");
    }
  }

  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double bias1 = 1.0 - std::pow(config_.beta1, t);
  const double bias2 = 1.0 - std::pow(config_.beta2, t);
  const double lr = config_.learning_rate;
  const double wd = config_.weight_decay;

  auto& entries = parameters_.entries();
  for (std::size_t p = 0; p < entries.size(); ++p) {
    Tensor param = entries[p].tensor;
    const Tensor g = param.grad();
    auto theta = param.mutable_values();
    auto& m = state_.first_moment[p];
    auto& v = state_.second_moment[p];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      double gi = g.defined() ? g.values()[i] : 0.0;
      if (!config_.decoupled_weight_decay) gi += wd * theta[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gi;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi;
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      double updated = theta[i] - lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
      if (config_.decoupled_weight_decay) updated -= lr * wd * theta[i];
      theta[i] = round_to_precision(updated);
    }
  }
}

double lr_schedule(std::size_t epoch, double base_lr, std::size_t period, double factor) {
  if (period == 0) return base_lr;
  return base_lr * std::pow(factor, static_cast<double>(epoch / period));
}

}  // namespace mmfs
