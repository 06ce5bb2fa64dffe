#include "mmfs/tensor/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>
#include <unordered_set>

#include "mmfs/core/error.hpp"
#include "mmfs/tensor/ops.hpp"

namespace mmfs {

namespace {

void require_scalar_root(const Tensor& root, const char* who) {
  if (!root.defined()) throw Error(std::string(who) + ": undefined root");
  if (root.numel() != 1) {
    throw Error(std::string(who) + ": root must be a scalar, got shape " + shape_to_string(root.shape()));
  }
  if (!root.requires_grad()) throw Error(std::string(who) + ": root does not depend on any gradient-tracked tensor");
}

Tensor accumulate(const Tensor& existing, const Tensor& incoming) {
  if (!existing.defined()) return incoming;
  return add(existing, incoming);
}

void release(const std::shared_ptr<Node>& node) {
  node->released = true;
  node->backward = nullptr;
  node->inputs.clear();
}

}  // namespace

Tape Tape::from_root(const Tensor& root) {
  Tape tape;
  if (!root.defined() || !root.grad_fn()) return tape;
  std::unordered_set<const Node*> visited;
  // Iterative post-order DFS: a node is emitted once all its parents are.
  std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack;
  stack.emplace_back(root.grad_fn(), 0);
  visited.insert(root.grad_fn().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->released) {
      throw Error("backward: graph through '" + node->op +
                  "' was already released; retain the graph to traverse it again");
    }
    if (next < node->inputs.size()) {
      const Tensor& input = node->inputs[next++];
      const auto& parent = input.grad_fn();
      if (parent && visited.insert(parent.get()).second) stack.emplace_back(parent, 0);
      continue;
    }
    tape.nodes_.push_back(node);
    stack.pop_back();
  }
  return tape;
}

void backward(const Tensor& root, bool retain_graph) {
  require_scalar_root(root, "backward");
  if (root.is_leaf()) {
    Tensor leaf = root;
    leaf.accumulate_grad(Tensor::ones(root.shape()));
    return;
  }
  const Tape tape = Tape::from_root(root);
  std::unordered_map<const Node*, Tensor> grads;
  grads[root.grad_fn().get()] = Tensor::ones(root.shape());

  NoGradGuard no_grad;
  const auto nodes = tape.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    const auto& node = *it;
    auto found = grads.find(node.get());
    if (found == grads.end()) continue;
    const Tensor g = found->second;
    grads.erase(found);
    std::vector<Tensor> input_grads = node->backward(g);
    for (std::size_t i = 0; i < node->inputs.size(); ++i) {
      Tensor& input = node->inputs[i];
      if (!input.requires_grad() || i >= input_grads.size() || !input_grads[i].defined()) continue;
      if (input.grad_fn()) {
        Tensor& slot = grads[input.grad_fn().get()];
        slot = accumulate(slot, input_grads[i]);
      } else {
        input.accumulate_grad(input_grads[i]);
      }
    }
  }
  if (!retain_graph) {
    for (const auto& node : nodes) release(node);
  }
}

std::vector<Tensor> grad(const Tensor& root, std::span<const Tensor> inputs, bool create_graph, bool retain_graph) {
  require_scalar_root(root, "grad");
  retain_graph = retain_graph || create_graph;

  std::unordered_map<const void*, std::size_t> leaf_targets;
  std::unordered_map<const Node*, std::size_t> node_targets;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].grad_fn()) {
      node_targets.emplace(inputs[i].grad_fn().get(), i);
    } else {
      leaf_targets.emplace(inputs[i].id(), i);
    }
  }
  std::vector<Tensor> results(inputs.size());

  if (root.is_leaf()) {
    auto hit = leaf_targets.find(root.id());
    if (hit != leaf_targets.end()) results[hit->second] = Tensor::ones(root.shape());
  } else {
    const Tape tape = Tape::from_root(root);
    const auto nodes = tape.nodes();

    // A node is worth running when one of its inputs is a target or leads to one.
    std::unordered_set<const Node*> needed;
    for (const auto& node : nodes) {
      for (const Tensor& input : node->inputs) {
        const bool is_target = input.grad_fn() ? node_targets.contains(input.grad_fn().get())
                                               : leaf_targets.contains(input.id());
        if (is_target || (input.grad_fn() && needed.contains(input.grad_fn().get()))) {
          needed.insert(node.get());
          break;
        }
      }
    }

    std::unordered_map<const Node*, Tensor> grads;
    grads[root.grad_fn().get()] = Tensor::ones(root.shape());
    {
      NoGradGuard no_grad;
      GradMode::set_enabled(create_graph);
      for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
        const auto& node = *it;
        auto found = grads.find(node.get());
        if (found == grads.end()) continue;
        const Tensor g = found->second;
        if (auto target = node_targets.find(node.get()); target != node_targets.end()) {
          results[target->second] = g;
        }
        if (!needed.contains(node.get())) continue;
        if (create_graph && !node->differentiable_backward) {
          throw Error("grad: '" + node->op + "' does not support higher-order gradients");
        }
        std::vector<Tensor> input_grads = node->backward(g);
        for (std::size_t i = 0; i < node->inputs.size(); ++i) {
          const Tensor& input = node->inputs[i];
          if (!input.requires_grad() || i >= input_grads.size() || !input_grads[i].defined()) continue;
          if (input.grad_fn()) {
            if (!needed.contains(input.grad_fn().get()) && !node_targets.contains(input.grad_fn().get())) continue;
            Tensor& slot = grads[input.grad_fn().get()];
            slot = accumulate(slot, input_grads[i]);
          } else if (auto target = leaf_targets.find(input.id()); target != leaf_targets.end()) {
            results[target->second] = accumulate(results[target->second], input_grads[i]);
          }
        }
      }
    }
    if (!retain_graph) {
      for (const auto& node : nodes) {
        if (needed.contains(node.get())) release(node);
      }
    }
  }

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!results[i].defined()) results[i] = Tensor::zeros(inputs[i].shape());
  }
  return results;
}

FiniteDiffReport finite_diff_check(const std::function<Tensor()>& objective, std::vector<Tensor> parameters,
                                   double step) {
  Tensor root = objective();
  const std::vector<Tensor> analytic = grad(root, parameters);

  FiniteDiffReport report;
  NoGradGuard no_grad;
  for (std::size_t p = 0; p < parameters.size(); ++p) {
    auto values = parameters[p].mutable_values();
    const auto analytic_values = analytic[p].values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + step;
      const double plus = objective().item();
      values[i] = original - step;
      const double minus = objective().item();
      values[i] = original;
      const double numeric = (plus - minus) / (2.0 * step);
      const double a = analytic_values[i];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++report.entries_checked;
      if (!(err <= report.max_relative_error)) {
        report.max_relative_error = std::isnan(err) ? std::numeric_limits<double>::infinity() : err;
        report.worst_parameter = p;
        report.worst_index = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace mmfs
