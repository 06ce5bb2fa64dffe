#pragma once

#include <cstddef>
#include <vector>

#include "mmfs/fewshot/episode_batch.hpp"
#include "mmfs/tensor/tensor.hpp"

namespace mmfs {

struct MamlConfig {
  double inner_lr = 0.5;
  std::size_t inner_steps = 1;
  bool second_order = false;

  void validate() const;
};

/// Per-episode linear head W (N×d), b (N). Starts from zeros every episode.
struct MamlHead {
  Tensor weight;
  Tensor bias;

  static MamlHead zeros(std::size_t ways, std::size_t dim);
  Tensor logits(const Tensor& embeddings) const;
};

struct MamlResult {
  Tensor query_logits;
  MamlHead adapted;
  /// Support cross-entropy before each inner step, plus one entry after the last.
  std::vector<double> support_losses;
};

/// Adapts a zero head on the support set with `inner_steps` gradient steps of
/// size `inner_lr` and returns query logits through the adapted head. In
/// second-order mode the inner steps are recorded, so outer gradients flow
/// through them into the support embeddings; in first-order mode the inner
/// gradients are constants. Support classes need not be balanced.
MamlResult maml_episode(const EpisodeBatch& batch, const MamlConfig& config);

}  // namespace mmfs
