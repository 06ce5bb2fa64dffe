#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>

#include "mmfs/core/rng.hpp"
#include "mmfs/encoders/conv4.hpp"
#include "mmfs/encoders/text_encoder.hpp"
#include "mmfs/episodes/manifest.hpp"
#include "mmfs/episodes/sampler.hpp"
#include "mmfs/fusion/fusion.hpp"
#include "mmfs/harness/config.hpp"
#include "mmfs/losses/losses.hpp"
#include "mmfs/tensor/optim.hpp"
#include "mmfs/tensor/tensor.hpp"

namespace mmfs {

/// Encoders, fusion and meta-learner of one run. Components a modality does
/// not use are never constructed.
class MultiModalModel {
 public:
  /// Parameters are drawn from streams of `seed`; the frozen text projection
  /// too, so (config, seed, trainable values) fully determine the model.
  MultiModalModel(ModelConfig config, std::uint64_t seed);

  struct Embeddings {
    Tensor image;        // B×d raw image embeddings (if images are used)
    Tensor text_stack;   // B×n×d (if text is used)
    Tensor text_pooled;  // B×d (if text is used)
    Tensor fused;        // B×d embedding handed to the meta-learner
  };

  /// Embeds the given manifest items. `rng` drives dropout in train mode.
  Embeddings embed(const DatasetManifest& manifest, std::span<const std::size_t> items, bool train,
                   Rng* rng) const;

  struct EpisodeOutput {
    Tensor query_logits;
    Tensor cls_loss;
    Tensor matching_loss;  // empty for single-modality runs
    Tensor total_loss;
    LossBreakdown losses;
    double accuracy = 0.0;  // fraction of correctly classified queries
  };

  /// Full forward pass of one episode: encode, fuse, meta-learner, losses.
  EpisodeOutput run_episode(const DatasetManifest& manifest, const Episode& episode, bool train, Rng* rng) const;

  const ModelConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  const ParameterList& parameters() const { return parameters_; }
  std::size_t parameter_count() const { return parameters_.parameter_count(); }

  bool has_image_encoder() const { return image_encoder_ != nullptr; }
  bool has_text_encoder() const { return text_encoder_ != nullptr; }
  bool has_fusion() const { return fusion_ != nullptr; }

  /// Throws DataError if the manifest's image shape or sentence count does
  /// not match what the model was built for.
  void check_compatible(const DatasetManifest& manifest) const;

 private:
  ModelConfig config_;
  std::uint64_t seed_;
  std::unique_ptr<Conv4Encoder> image_encoder_;
  std::unique_ptr<TextEncoder> text_encoder_;
  std::unique_ptr<Fusion> fusion_;
  ParameterList parameters_;
};

/// Copies the manifest's image geometry and sentence count into `config`.
void adopt_dataset_shape(ModelConfig& config, const DatasetManifest& manifest);

/// Fraction of rows whose argmax (ties to the lowest index) equals the label.
double argmax_accuracy(const Tensor& logits, std::span<const int> labels);

}  // namespace mmfs
