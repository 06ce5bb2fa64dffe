#pragma once

#include <cstddef>
#include <span>

#include "mmfs/fewshot/episode_batch.hpp"
#include "mmfs/tensor/tensor.hpp"

namespace mmfs {

/// N×d class means of the support rows.
Tensor class_prototypes(const Tensor& support, std::span<const int> labels, std::size_t ways);

/// logit(q, j) = -||q - c_j||^2 against the class prototypes.
Tensor protonet_logits(const EpisodeBatch& batch);

}  // namespace mmfs
