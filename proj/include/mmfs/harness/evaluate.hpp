#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "mmfs/episodes/manifest.hpp"
#include "mmfs/episodes/sampler.hpp"
#include "mmfs/harness/model.hpp"
#include "mmfs/losses/losses.hpp"

namespace mmfs {

struct AccuracySummary {
  double mean = 0.0;  // percent
  double ci95 = 0.0;  // percent, 1.96 · sample std / sqrt(E); 0 for one episode
  std::size_t episodes = 0;
};

/// `accuracies` are per-episode fractions in [0, 1].
AccuracySummary summarize_accuracies(std::span<const double> accuracies);

struct EpisodeScore {
  double accuracy = 0.0;
  std::optional<LossBreakdown> losses;
};

/// Scores one episode; must be safe to call concurrently.
using EpisodeScorer = std::function<EpisodeScore(const Episode& episode, std::size_t index)>;

struct EvaluationSpec {
  Split split = Split::MetaTest;
  std::size_t ways = 5;
  std::size_t shots = 1;
  std::size_t queries = 15;
  std::size_t episodes = 600;
  std::uint64_t seed = 0;
  std::size_t workers = 0;  // 0: one per hardware thread
};

struct EvaluationResult {
  AccuracySummary summary;
  std::vector<double> accuracies;  // in episode-index order
  std::optional<LossBreakdown> mean_losses;
};

/// Episode i is drawn from stream (seed, "eval/<split>", i). Episodes are
/// scored in parallel and reduced in index order, so the result does not
/// depend on the worker count.
EvaluationResult evaluate_episodes(const DatasetManifest& manifest, const EvaluationSpec& spec,
                                   const EpisodeScorer& scorer);

/// Eval-mode forward passes of `model`.
EvaluationResult evaluate_model(const MultiModalModel& model, const DatasetManifest& manifest,
                                const EvaluationSpec& spec);

/// Loads a checkpoint and a manifest and evaluates with the checkpoint's
/// episode shape and precision.
EvaluationResult evaluate_checkpoint(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest,
                                     Split split, std::size_t episodes, std::uint64_t seed);

}  // namespace mmfs
