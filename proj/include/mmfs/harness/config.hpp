#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"

#include "mmfs/episodes/synthetic.hpp"
#include "mmfs/fewshot/episode_batch.hpp"
#include "mmfs/fewshot/maml.hpp"
#include "mmfs/fusion/fusion.hpp"
#include "mmfs/tensor/tensor.hpp"

namespace mmfs {

enum class Modality { ImageOnly, TextOnly, MultiModal };

/// "image_only", "text_only", "multimodal".
Modality parse_modality(std::string_view token);
std::string_view to_string(Modality modality);

Precision parse_precision(std::string_view token);
std::string_view to_string(Precision precision);

/// Everything needed to rebuild a model. Image geometry and the sentence
/// count come from the dataset.
struct ModelConfig {
  Modality modality = Modality::MultiModal;
  FusionMethod fusion = FusionMethod::Mean;
  MetaLearner model = MetaLearner::ProtoNet;
  std::string backbone = "conv4";
  std::size_t embed_dim = 128;
  std::size_t conv_hidden = 64;
  std::size_t image_channels = 3;
  std::size_t image_height = 16;
  std::size_t image_width = 16;
  std::size_t sentences_per_item = 10;
  std::size_t vocab_size = 4096;
  std::size_t text_projection_dim = 256;
  MamlConfig maml{};
  double temperature = 1.0;
  double cls_weight = 1.0;
  double matching_weight = 1.0;

  bool uses_images() const { return modality != Modality::TextOnly; }
  bool uses_text() const { return modality != Modality::ImageOnly; }
  void validate() const;
};

struct OptimizerSettings {
  double learning_rate = 1e-3;
  double weight_decay = 1e-3;
  bool decoupled_weight_decay = false;
  std::size_t lr_decay_every = 80;
  double lr_decay_factor = 0.5;
};

/// Run configuration. JSON field names mirror the member names; unknown
/// fields are rejected.
struct RunConfig {
  // Data source: exactly one of the two.
  std::optional<SyntheticSpec> synthetic;
  std::optional<std::filesystem::path> manifest;

  ModelConfig model_config{};
  std::size_t ways = 5;
  std::size_t shots = 1;
  std::size_t queries = 15;
  OptimizerSettings optimizer{};
  std::size_t epochs = 500;
  std::size_t episodes_per_epoch = 100;
  std::size_t val_period = 50;
  std::size_t val_episodes = 200;
  std::size_t test_episodes = 600;
  // When set, epoch e replays the same episodes (and dropout masks) as
  // every other epoch.
  bool fixed_episode_pool = false;
  std::uint64_t seed = 0;
  Precision precision = Precision::Float32;
  std::filesystem::path output_dir;

  void validate() const;
};

nlohmann::json to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const RunConfig& config);
/// Throws ConfigError on unknown fields, wrong types or invalid values.
RunConfig run_config_from_json(const nlohmann::json& j);

RunConfig load_run_config(const std::filesystem::path& path);
SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);

}  // namespace mmfs
