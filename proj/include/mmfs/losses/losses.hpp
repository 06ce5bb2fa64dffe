#pragma once

#include <span>

#include "mmfs/tensor/tensor.hpp"

namespace mmfs {

/// Cross-entropy of query logits against query labels.
Tensor classification_loss(const Tensor& query_logits, std::span<const int> query_labels);

struct MatchingLoss {
  Tensor image_to_text;  // CE(S / tau, y_pseudo)
  Tensor text_to_image;  // CE(Sᵀ / tau, y_pseudo)
  Tensor combined;       // 0.5 · (image_to_text + text_to_image)
  Tensor similarity;     // S, cosine similarities of aligned rows
};

/// Contrastive alignment of paired raw image and text embeddings (row i of
/// each belongs to the same item). Rows are l2-normalized; a row with zero
/// norm is rejected. The pseudo labels are 0..rows-1.
MatchingLoss matching_loss(const Tensor& image_embeddings, const Tensor& text_embeddings, double temperature = 1.0);

/// cls_weight · cls + matching_weight · matching.
Tensor total_loss(const Tensor& cls, const Tensor& matching, double cls_weight = 1.0, double matching_weight = 1.0);

struct LossBreakdown {
  double cls = 0.0;
  double matching_image = 0.0;
  double matching_text = 0.0;
  double matching = 0.0;
  double total = 0.0;
};

}  // namespace mmfs
