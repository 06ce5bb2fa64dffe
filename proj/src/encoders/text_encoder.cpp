#include "mmfs/encoders/text_encoder.hpp"

#include "mmfs/core/error.hpp"
#include "mmfs/tensor/ops.hpp"

namespace mmfs {

void TextEncoderConfig::validate() const {
  if (vocab_size == 0 || projection_dim == 0 || embed_dim == 0) {
    throw ConfigError("text encoder: vocabulary, projection and embedding sizes must be positive");
  }
}

TextEncoder::TextEncoder(TextEncoderConfig config, Rng& projection_rng, Rng& init_rng) : config_(config) {
  config_.validate();
  projection_.resize(config_.vocab_size * config_.projection_dim);
  for (double& v : projection_) v = round_to_precision(kProjectionStd * projection_rng.normal());
  head_ = Linear::init(config_.projection_dim, config_.embed_dim, init_rng);
}

std::vector<double> TextEncoder::frozen_features(const TokenSequence& sentence) const {
  const std::size_t h = config_.projection_dim;
  std::vector<double> features(h, 0.0);
  for (std::size_t bucket : sentence) {
    if (bucket >= config_.vocab_size) {
      throw DataError("text encoder: token bucket " + std::to_string(bucket) + " outside vocabulary of " +
                      std::to_string(config_.vocab_size));
    }
    const double* row = projection_.data() + bucket * h;
    for (std::size_t j = 0; j < h; ++j) features[j] += row[j];
  }
  return features;
}

TextEncoder::Output TextEncoder::encode(std::span<const std::vector<TokenSequence>> items,
                                        std::size_t sentences_per_item) const {
  if (items.empty()) throw DimensionError("text_encode", "empty batch");
  if (sentences_per_item == 0) throw DataError("text_encode: items need at least one sentence");
  const std::size_t batch = items.size();
  const std::size_t h = config_.projection_dim;
  std::vector<double> features;
  features.reserve(batch * sentences_per_item * h);
  for (std::size_t b = 0; b < batch; ++b) {
    if (items[b].size() != sentences_per_item) {
      throw DataError("text_encode: item " + std::to_string(b) + " has " + std::to_string(items[b].size()) +
                      " sentences, expected " + std::to_string(sentences_per_item));
    }
    for (const auto& sentence : items[b]) {
      const auto f = frozen_features(sentence);
      features.insert(features.end(), f.begin(), f.end());
    }
  }
  // Constant input: gradients stop at the trainable layer.
  const Tensor frozen({batch * sentences_per_item, h}, std::move(features));
  const Tensor rows = head_.forward(frozen);
  Tensor stack = reshape(rows, {batch, sentences_per_item, config_.embed_dim});
  Tensor pooled = mean(stack, 1);
  return Output{std::move(stack), std::move(pooled)};
}

TextEncoder::Output TextEncoder::encode_text(std::span<const std::vector<std::string>> items,
                                             std::size_t sentences_per_item) const {
  std::vector<std::vector<TokenSequence>> tokens;
  tokens.reserve(items.size());
  for (const auto& sentences : items) {
    std::vector<TokenSequence> encoded;
    encoded.reserve(sentences.size());
    for (const auto& s : sentences) encoded.push_back(encode_sentence(s, config_.vocab_size));
    tokens.push_back(std::move(encoded));
  }
  return encode(tokens, sentences_per_item);
}

Tensor TextEncoder::projection() const {
  return Tensor({config_.vocab_size, config_.projection_dim}, projection_);
}

void TextEncoder::register_parameters(ParameterList& params, const std::string& prefix) const {
  head_.register_parameters(params, prefix + ".fc");
}

}  // namespace mmfs
