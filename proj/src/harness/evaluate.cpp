#include "mmfs/harness/evaluate.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <string>
#include <thread>

#include "mmfs/core/error.hpp"
#include "mmfs/harness/checkpoint.hpp"

namespace mmfs {

AccuracySummary summarize_accuracies(std::span<const double> accuracies) {
  AccuracySummary s;
  s.episodes = accuracies.size();
  if (accuracies.empty()) return s;
  double total = 0.0;
  for (double a : accuracies) total += a;
  const double n = static_cast<double>(accuracies.size());
  const double mean = total / n;
  s.mean = 100.0 * mean;
  if (accuracies.size() > 1) {
    double sq = 0.0;
    for (double a : accuracies) sq += (a - mean) * (a - mean);
    const double std_dev = std::sqrt(sq / (n - 1.0));
    s.ci95 = 100.0 * 1.96 * std_dev / std::sqrt(n);
  }
  return s;
}

EvaluationResult evaluate_episodes(const DatasetManifest& manifest, const EvaluationSpec& spec,
                                   const EpisodeScorer& scorer) {
  if (spec.episodes == 0) throw ConfigError("evaluate: episode count must be positive");
  const std::string tag = "eval/" + std::string(to_string(spec.split));
  std::vector<Episode> episodes;
  episodes.reserve(spec.episodes);
  for (std::size_t i = 0; i < spec.episodes; ++i) {
    Rng stream = Rng::stream(spec.seed, tag, i);
    episodes.push_back(sample_episode(manifest, spec.split, spec.ways, spec.shots, spec.queries, stream));
  }

  std::vector<EpisodeScore> scores(spec.episodes);
  std::vector<std::exception_ptr> errors(spec.episodes);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next.fetch_add(1); i < spec.episodes; i = next.fetch_add(1)) {
      try {
        scores[i] = scorer(episodes[i], i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::size_t workers = spec.workers ? spec.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, spec.episodes);
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  for (const auto& error : errors) {
    if (error) std::rethrow_exception(error);
  }

  EvaluationResult result;
  result.accuracies.reserve(spec.episodes);
  LossBreakdown sum;
  bool all_losses = true;
  for (const auto& score : scores) {
    result.accuracies.push_back(score.accuracy);
    if (!score.losses) {
      all_losses = false;
      continue;
    }
    sum.cls += score.losses->cls;
    sum.matching_image += score.losses->matching_image;
    sum.matching_text += score.losses->matching_text;
    sum.matching += score.losses->matching;
    sum.total += score.losses->total;
  }
  result.summary = summarize_accuracies(result.accuracies);
  if (all_losses) {
    const double n = static_cast<double>(spec.episodes);
    sum.cls /= n;
    sum.matching_image /= n;
    sum.matching_text /= n;
    sum.matching /= n;
    sum.total /= n;
    result.mean_losses = sum;
  }
  return result;
}

EvaluationResult evaluate_model(const MultiModalModel& model, const DatasetManifest& manifest,
                                const EvaluationSpec& spec) {
  model.check_compatible(manifest);
  return evaluate_episodes(manifest, spec, [&](const Episode& episode, std::size_t) {
    const auto out = model.run_episode(manifest, episode, false, nullptr);
    if (!std::isfinite(out.losses.total)) {
      throw NumericError("evaluate: non-finite loss on a " + std::string(to_string(spec.split)) + " episode");
    }
    return EpisodeScore{out.accuracy, out.losses};
  });
}

EvaluationResult evaluate_checkpoint(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest,
                                     Split split, std::size_t episodes, std::uint64_t seed) {
  LoadedCheckpoint loaded = load_checkpoint(checkpoint);
  PrecisionScope precision(loaded.header.precision);
  const DatasetManifest data = load_manifest(manifest);
  EvaluationSpec spec;
  spec.split = split;
  spec.ways = loaded.header.ways;
  spec.shots = loaded.header.shots;
  spec.queries = loaded.header.queries;
  spec.episodes = episodes;
  spec.seed = seed;
  return evaluate_model(*loaded.model, data, spec);
}

}  // namespace mmfs
