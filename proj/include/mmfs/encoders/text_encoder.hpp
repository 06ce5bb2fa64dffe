#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mmfs/core/rng.hpp"
#include "mmfs/encoders/tokenizer.hpp"
#include "mmfs/tensor/linear.hpp"
#include "mmfs/tensor/optim.hpp"
#include "mmfs/tensor/tensor.hpp"

namespace mmfs {

struct TextEncoderConfig {
  std::size_t vocab_size = kDefaultVocabSize;
  std::size_t projection_dim = 256;
  std::size_t embed_dim = 128;

  void validate() const;
};

/// Sentence encoder with a frozen front end and a trainable last layer:
/// bag of token buckets → fixed seeded projection (V×h) → Linear(h→d).
/// Only the last layer is ever registered for optimization.
class TextEncoder {
 public:
  static constexpr double kProjectionStd = 0.25;

  /// The projection is drawn from `projection_rng`, the trainable layer
  /// from `init_rng`.
  TextEncoder(TextEncoderConfig config, Rng& projection_rng, Rng& init_rng);

  struct Output {
    Tensor stack;   // B×n×d, one row per sentence
    Tensor pooled;  // B×d, mean over the n sentences
  };

  /// `items[b]` holds the sentences of item b. Every item must carry
  /// exactly `sentences_per_item` sentences.
  Output encode(std::span<const std::vector<TokenSequence>> items, std::size_t sentences_per_item) const;
  Output encode_text(std::span<const std::vector<std::string>> items, std::size_t sentences_per_item) const;

  /// Frozen features of one sentence (count vector · projection), length h.
  std::vector<double> frozen_features(const TokenSequence& sentence) const;

  /// Copy of the frozen projection as a constant V×h tensor.
  Tensor projection() const;
  const Linear& head() const { return head_; }
  const TextEncoderConfig& config() const { return config_; }

  void register_parameters(ParameterList& params, const std::string& prefix) const;
  /// Trainable entries only.
  std::size_t parameter_count() const { return head_.weight.numel() + head_.bias.numel(); }

 private:
  TextEncoderConfig config_;
  std::vector<double> projection_;
  Linear head_;
};

}  // namespace mmfs
