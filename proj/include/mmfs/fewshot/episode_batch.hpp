#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "mmfs/tensor/tensor.hpp"

namespace mmfs {

/// Embedded episode handed to a meta-learner.
struct EpisodeBatch {
  Tensor support;                 // (N·K)×d
  std::vector<int> support_labels;
  Tensor query;                   // (N·T)×d
  std::vector<int> query_labels;
  std::size_t ways = 0;
  std::size_t shots = 0;
  std::size_t queries_per_class = 0;

  /// Labels in 0..N-1 with exactly K support and T query rows per class.
  void validate() const;
};

enum class MetaLearner { ProtoNet, Maml };

/// Config tokens: "protonet", "maml".
MetaLearner parse_meta_learner(std::string_view token);
std::string_view to_string(MetaLearner learner);

}  // namespace mmfs
