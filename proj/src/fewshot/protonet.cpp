#include "mmfs/fewshot/protonet.hpp"

#include <vector>

#include "mmfs/core/error.hpp"
#include "mmfs/tensor/ops.hpp"

namespace mmfs {

void EpisodeBatch::validate() const {
  if (ways == 0 || shots == 0 || queries_per_class == 0) throw DataError("episode: N, K and T must be positive");
  if (!support.defined() || !query.defined() || support.rank() != 2 || query.rank() != 2 ||
      support.size(1) != query.size(1)) {
    throw DimensionError("episode", "support and query must be matrices of equal width");
  }
  if (support.size(0) != ways * shots || support_labels.size() != ways * shots) {
    throw DimensionError("episode", "support needs N·K = " + std::to_string(ways * shots) + " rows");
  }
  if (query.size(0) != ways * queries_per_class || query_labels.size() != ways * queries_per_class) {
    throw DimensionError("episode", "query needs N·T = " + std::to_string(ways * queries_per_class) + " rows");
  }
  auto check = [this](const std::vector<int>& labels, std::size_t per_class, const char* which) {
    std::vector<std::size_t> counts(ways, 0);
    for (int label : labels) {
      if (label < 0 || static_cast<std::size_t>(label) >= ways) {
        throw DataError(std::string("episode: ") + which + " label " + std::to_string(label) + " outside 0.." +
                        std::to_string(ways - 1));
      }
      ++counts[static_cast<std::size_t>(label)];
    }
    for (std::size_t c = 0; c < ways; ++c) {
      if (counts[c] != per_class) {
        throw DataError(std::string("episode: class ") + std::to_string(c) + " has " + std::to_string(counts[c]) +
                        " " + which + " rows, expected " + std::to_string(per_class));
      }
    }
  };
  check(support_labels, shots, "support");
  check(query_labels, queries_per_class, "query");
}

MetaLearner parse_meta_learner(std::string_view token) {
  if (token == "protonet") return MetaLearner::ProtoNet;
  if (token == "maml") return MetaLearner::Maml;
  throw ConfigError("unknown model '" + std::string(token) + "' (expected protonet or maml)");
}

std::string_view to_string(MetaLearner learner) {
  return learner == MetaLearner::ProtoNet ? "protonet" : "maml";
}

Tensor class_prototypes(const Tensor& support, std::span<const int> labels, std::size_t ways) {
  if (support.rank() != 2 || support.size(0) != labels.size()) {
    throw DimensionError("class_prototypes", "support rows and labels disagree");
  }
  std::vector<std::size_t> counts(ways, 0);
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= ways) {
      throw DataError("class_prototypes: label " + std::to_string(label) + " out of range");
    }
    ++counts[static_cast<std::size_t>(label)];
  }
  // Averaging matrix A (N×rows): prototypes = A · support.
  std::vector<double> averaging(ways * labels.size(), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    averaging[c * labels.size() + i] = 1.0 / static_cast<double>(counts[c]);
  }
  for (std::size_t c = 0; c < ways; ++c) {
    if (counts[c] == 0) throw DataError("class_prototypes: class " + std::to_string(c) + " has no support rows");
  }
  return matmul(Tensor({ways, labels.size()}, std::move(averaging)), support);
}

Tensor protonet_logits(const EpisodeBatch& batch) {
  batch.validate();
  const Tensor prototypes = class_prototypes(batch.support, batch.support_labels, batch.ways);
  return neg(pairwise_sq_dist(batch.query, prototypes));
}

}  // namespace mmfs
