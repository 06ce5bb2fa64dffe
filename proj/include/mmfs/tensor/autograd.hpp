#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "mmfs/tensor/tensor.hpp"

namespace mmfs {

/// Recorded operations reachable from a root, parents before children.
class Tape {
 public:
  static Tape from_root(const Tensor& root);

  std::span<const std::shared_ptr<Node>> nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::shared_ptr<Node>> nodes_;
};

/// Accumulates d(root)/d(leaf) into every leaf that requires a gradient.
/// `root` must hold a single value. Without `retain_graph` the traversed
/// nodes are released and a second pass through them throws.
void backward(const Tensor& root, bool retain_graph = false);

/// Returns d(root)/d(input) for each requested input without touching any
/// `.grad()` buffer. With `create_graph` the returned gradients are
/// themselves recorded, so they can be differentiated again. Inputs that
/// do not influence the root get zeros.
std::vector<Tensor> grad(const Tensor& root, std::span<const Tensor> inputs, bool create_graph = false,
                         bool retain_graph = false);

struct FiniteDiffReport {
  double max_relative_error = 0.0;
  std::size_t worst_parameter = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t entries_checked = 0;
};

/// Compares reverse-mode gradients of `objective` against central
/// differences, entry by entry. The objective must be deterministic and
/// read the parameters through the handles passed here; each entry is
/// perturbed in place and restored. Error per entry is
/// |analytic - numeric| / max(1, |analytic|, |numeric|).
FiniteDiffReport finite_diff_check(const std::function<Tensor()>& objective, std::vector<Tensor> parameters,
                                   double step = 1e-6);

}  // namespace mmfs
