#include "mmfs/fewshot/maml.hpp"

#include <array>
#include <cmath>

#include "mmfs/core/error.hpp"
#include "mmfs/tensor/autograd.hpp"
#include "mmfs/tensor/ops.hpp"

namespace mmfs {

void MamlConfig::validate() const {
  if (!(inner_lr >= 0.0) || !std::isfinite(inner_lr)) throw ConfigError("maml: inner learning rate must be >= 0");
}

MamlHead MamlHead::zeros(std::size_t ways, std::size_t dim) {
  return MamlHead{Tensor::zeros({ways, dim}, true), Tensor::zeros({ways}, true)};
}

Tensor MamlHead::logits(const Tensor& embeddings) const {
  return add_bias(matmul(embeddings, transpose(weight)), bias);
}

namespace {

// The inner loop does not need balanced classes, only well-formed rows and
// labels in range.
void check_batch(const EpisodeBatch& batch) {
  if (batch.ways == 0) throw DataError("maml: episode needs at least one class");
  if (!batch.support.defined() || !batch.query.defined() || batch.support.rank() != 2 || batch.query.rank() != 2 ||
      batch.support.size(1) != batch.query.size(1)) {
    throw DimensionError("maml", "support and query must be matrices of equal width");
  }
  if (batch.support.size(0) != batch.support_labels.size() || batch.query.size(0) != batch.query_labels.size()) {
    throw DimensionError("maml", "row and label counts disagree");
  }
  for (const auto* labels : {&batch.support_labels, &batch.query_labels}) {
    for (int label : *labels) {
      if (label < 0 || static_cast<std::size_t>(label) >= batch.ways) {
        throw DataError("maml: label " + std::to_string(label) + " outside 0.." + std::to_string(batch.ways - 1));
      }
    }
  }
}

}  // namespace

MamlResult maml_episode(const EpisodeBatch& batch, const MamlConfig& config) {
  check_batch(batch);
  config.validate();
  // The inner loop needs gradients even when the caller is evaluating.
  EnableGradGuard enable_grad;

  MamlResult result;
  MamlHead head = MamlHead::zeros(batch.ways, batch.support.size(1));
  for (std::size_t step = 0; step < config.inner_steps; ++step) {
    const Tensor loss = cross_entropy(head.logits(batch.support), batch.support_labels);
    result.support_losses.push_back(loss.item());
    const std::array<Tensor, 2> targets{head.weight, head.bias};
    const std::vector<Tensor> grads = grad(loss, targets, config.second_order);
    if (config.second_order) {
      head.weight = sub(head.weight, scale(grads[0], config.inner_lr));
      head.bias = sub(head.bias, scale(grads[1], config.inner_lr));
    } else {
      NoGradGuard no_grad;
      const Tensor w = sub(head.weight, scale(grads[0], config.inner_lr));
      const Tensor b = sub(head.bias, scale(grads[1], config.inner_lr));
      head.weight = Tensor(w.shape(), w.to_vector(), true);
      head.bias = Tensor(b.shape(), b.to_vector(), true);
    }
  }
  {
    NoGradGuard no_grad;
    result.support_losses.push_back(cross_entropy(head.logits(batch.support), batch.support_labels).item());
  }
  result.query_logits = head.logits(batch.query);
  result.adapted = head;
  return result;
}

}  // namespace mmfs
