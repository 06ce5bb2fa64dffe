#include "mmfs/harness/model.hpp"

#include <optional>

#include "mmfs/core/error.hpp"
#include "mmfs/fewshot/maml.hpp"
#include "mmfs/fewshot/protonet.hpp"
#include "mmfs/tensor/ops.hpp"

namespace mmfs {

MultiModalModel::MultiModalModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)), seed_(seed) {
  config_.validate();
  if (config_.uses_images()) {
    Conv4Config conv;
    conv.in_channels = config_.image_channels;
    conv.height = config_.image_height;
    conv.width = config_.image_width;
    conv.hidden_channels = config_.conv_hidden;
    conv.embed_dim = config_.embed_dim;
    Rng rng = Rng::stream(seed_, "init/image");
    image_encoder_ = std::make_unique<Conv4Encoder>(conv, rng);
    image_encoder_->register_parameters(parameters_, "image");
  }
  if (config_.uses_text()) {
    TextEncoderConfig text;
    text.vocab_size = config_.vocab_size;
    text.projection_dim = config_.text_projection_dim;
    text.embed_dim = config_.embed_dim;
    Rng projection = Rng::stream(seed_, "text-projection");
    Rng rng = Rng::stream(seed_, "init/text");
    text_encoder_ = std::make_unique<TextEncoder>(text, projection, rng);
    text_encoder_->register_parameters(parameters_, "text");
  }
  if (config_.modality == Modality::MultiModal) {
    Rng rng = Rng::stream(seed_, "init/fusion");
    fusion_ = std::make_unique<Fusion>(config_.fusion, config_.embed_dim, config_.sentences_per_item, rng);
    fusion_->register_parameters(parameters_, "fusion");
  }
}

void MultiModalModel::check_compatible(const DatasetManifest& manifest) const {
  if (config_.uses_images()) {
    const auto shape = manifest.image_shape();
    if (shape[0] != config_.image_channels || shape[1] != config_.image_height || shape[2] != config_.image_width) {
      throw DataError("dataset images are " + std::to_string(shape[0]) + "x" + std::to_string(shape[1]) + "x" +
                      std::to_string(shape[2]) + ", model expects " + std::to_string(config_.image_channels) + "x" +
                      std::to_string(config_.image_height) + "x" + std::to_string(config_.image_width));
    }
  }
  if (config_.uses_text() && manifest.sentences_per_item() != config_.sentences_per_item) {
    throw DataError("dataset has " + std::to_string(manifest.sentences_per_item()) +
                    " sentences per item, model expects " + std::to_string(config_.sentences_per_item));
  }
}

MultiModalModel::Embeddings MultiModalModel::embed(const DatasetManifest& manifest, std::span<const std::size_t> items,
                                                   bool train, Rng* rng) const {
  if (items.empty()) throw DataError("embed: no items");
  Embeddings out;
  if (image_encoder_) {
    const auto shape = manifest.image_shape();
    const std::size_t per_item = shape[0] * shape[1] * shape[2];
    std::vector<double> pixels;
    pixels.reserve(items.size() * per_item);
    for (std::size_t index : items) {
      const auto& image = manifest.item(index).image;
      pixels.insert(pixels.end(), image.begin(), image.end());
    }
    Tensor images({items.size(), shape[0], shape[1], shape[2]}, std::move(pixels));
    out.image = image_encoder_->encode(images).embedding;
  }
  if (text_encoder_) {
    std::vector<std::vector<std::string>> sentences;
    sentences.reserve(items.size());
    for (std::size_t index : items) sentences.push_back(manifest.item(index).sentences);
    auto text = text_encoder_->encode_text(sentences, config_.sentences_per_item);
    out.text_stack = std::move(text.stack);
    out.text_pooled = std::move(text.pooled);
  }
  switch (config_.modality) {
    case Modality::ImageOnly: out.fused = out.image; break;
    case Modality::TextOnly: out.fused = out.text_pooled; break;
    case Modality::MultiModal: {
      FusionInputs inputs{out.image, out.text_pooled, out.text_stack, Tensor()};
      out.fused = fusion_->fuse(inputs, train, rng);
      break;
    }
  }
  return out;
}

MultiModalModel::EpisodeOutput MultiModalModel::run_episode(const DatasetManifest& manifest, const Episode& episode,
                                                            bool train, Rng* rng) const {
  std::optional<NoGradGuard> no_grad;
  if (!train) no_grad.emplace();

  const std::vector<std::size_t> items = episode.all_items();
  const Embeddings emb = embed(manifest, items, train, rng);
  const std::size_t n_support = episode.support.size();
  const std::size_t n_query = episode.query.size();

  EpisodeBatch batch;
  batch.support = slice(emb.fused, 0, 0, n_support);
  batch.support_labels = episode.support_labels;
  batch.query = slice(emb.fused, 0, n_support, n_query);
  batch.query_labels = episode.query_labels;
  batch.ways = episode.ways;
  batch.shots = episode.shots;
  batch.queries_per_class = episode.queries_per_class;

  EpisodeOutput out;
  if (config_.model == MetaLearner::ProtoNet) {
    out.query_logits = protonet_logits(batch);
  } else {
    out.query_logits = maml_episode(batch, config_.maml).query_logits;
  }
  out.cls_loss = classification_loss(out.query_logits, episode.query_labels);
  out.losses.cls = out.cls_loss.item();
  if (config_.modality == Modality::MultiModal) {
    MatchingLoss matching = matching_loss(emb.image, emb.text_pooled, config_.temperature);
    out.matching_loss = matching.combined;
    out.losses.matching_image = matching.image_to_text.item();
    out.losses.matching_text = matching.text_to_image.item();
    out.losses.matching = matching.combined.item();
    out.total_loss = total_loss(out.cls_loss, out.matching_loss, config_.cls_weight, config_.matching_weight);
  } else {
    out.total_loss = config_.cls_weight == 1.0 ? out.cls_loss : scale(out.cls_loss, config_.cls_weight);
  }
  out.losses.total = out.total_loss.item();
  out.accuracy = argmax_accuracy(out.query_logits, episode.query_labels);
  return out;
}

void adopt_dataset_shape(ModelConfig& config, const DatasetManifest& manifest) {
  const auto shape = manifest.image_shape();
  config.image_channels = shape[0];
  config.image_height = shape[1];
  config.image_width = shape[2];
  config.sentences_per_item = manifest.sentences_per_item();
}

double argmax_accuracy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.size(0) != labels.size()) {
    throw DimensionError("accuracy", "logits " + shape_to_string(logits.shape()) + " for " +
                                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t rows = logits.size(0);
  const std::size_t cols = logits.size(1);
  const auto values = logits.values();
  std::size_t correct = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c) {
      if (values[r * cols + c] > values[r * cols + best]) best = c;
    }
    if (static_cast<int>(best) == labels[r]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(rows);
}

}  // namespace mmfs
