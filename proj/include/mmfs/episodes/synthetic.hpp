#pragma once

#include <cstddef>
#include <cstdint>

#include "mmfs/episodes/manifest.hpp"

namespace mmfs {

/// Controls a synthetic multi-modal dataset with tunable signal in each
/// modality.
struct SyntheticSpec {
  std::size_t train_classes = 20;
  std::size_t val_classes = 10;
  std::size_t test_classes = 10;
  std::size_t items_per_class = 30;
  std::size_t latent_dim = 16;
  double image_noise = 1.0;   // sigma of per-pixel gaussian noise
  double text_signal = 0.5;   // fraction of class-specific tokens per sentence
  std::size_t channels = 3;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t sentences_per_item = 10;
  std::size_t words_per_sentence = 12;
  std::size_t class_vocab = 8;       // distinct tokens owned by each class
  std::size_t shared_vocab = 200;    // class-agnostic noise tokens
  std::uint64_t seed = 0;

  /// Throws ConfigError on sigma < 0, rho outside [0,1] or empty sizes.
  void validate() const;
};

/// Per class c a latent mean mu_c ~ N(0, I) is rendered to pixels through a
/// fixed seeded linear map; each image adds N(0, sigma^2) noise. Each
/// sentence holds round(rho · L) tokens from the class vocabulary and the
/// rest from the shared vocabulary, in shuffled order. Deterministic in seed.
DatasetManifest generate_synthetic(const SyntheticSpec& spec);

}  // namespace mmfs
