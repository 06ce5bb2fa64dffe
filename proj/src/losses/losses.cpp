#include "mmfs/losses/losses.hpp"

#include <cmath>
#include <numeric>
#include <vector>

#include "mmfs/core/error.hpp"
#include "mmfs/tensor/ops.hpp"

namespace mmfs {

Tensor classification_loss(const Tensor& query_logits, std::span<const int> query_labels) {
  return cross_entropy(query_logits, query_labels);
}

MatchingLoss matching_loss(const Tensor& image_embeddings, const Tensor& text_embeddings, double temperature) {
  if (image_embeddings.rank() != 2 || text_embeddings.rank() != 2 ||
      image_embeddings.shape() != text_embeddings.shape()) {
    throw DimensionError("matching_loss", "image and text embeddings must be aligned N×d matrices, got " +
                                              shape_to_string(image_embeddings.shape()) + " and " +
                                              shape_to_string(text_embeddings.shape()));
  }
  if (!(temperature > 0.0)) throw ConfigError("matching_loss: temperature must be positive");
  const std::size_t rows = image_embeddings.size(0), cols = image_embeddings.size(1);
  for (const Tensor* t : {&image_embeddings, &text_embeddings}) {
    const auto v = t->values();
    for (std::size_t i = 0; i < rows; ++i) {
      double sq = 0.0;
      for (std::size_t j = 0; j < cols; ++j) sq += v[i * cols + j] * v[i * cols + j];
      if (!(sq > 0.0)) {
        throw NumericError("matching_loss: row " + std::to_string(i) + " has zero norm and cannot be normalized");
      }
    }
  }
  const Tensor image = l2_normalize(image_embeddings, 1);
  const Tensor text = l2_normalize(text_embeddings, 1);
  Tensor similarity = matmul(image, transpose(text));

  std::vector<int> pseudo(rows);
  std::iota(pseudo.begin(), pseudo.end(), 0);
  const double inv_tau = 1.0 / temperature;
  Tensor image_to_text = cross_entropy(scale(similarity, inv_tau), pseudo);
  Tensor text_to_image = cross_entropy(scale(transpose(similarity), inv_tau), pseudo);
  Tensor combined = scale(add(image_to_text, text_to_image), 0.5);
  return MatchingLoss{std::move(image_to_text), std::move(text_to_image), std::move(combined), std::move(similarity)};
}

Tensor total_loss(const Tensor& cls, const Tensor& matching, double cls_weight, double matching_weight) {
  return add(scale(cls, cls_weight), scale(matching, matching_weight));
}

}  // namespace mmfs
