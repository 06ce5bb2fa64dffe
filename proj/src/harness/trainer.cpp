#include "mmfs/harness/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "mmfs/core/error.hpp"
#include "mmfs/episodes/synthetic.hpp"
#include "mmfs/harness/checkpoint.hpp"
#include "mmfs/harness/model.hpp"
#include "mmfs/tensor/autograd.hpp"
#include "mmfs/tensor/optim.hpp"

namespace mmfs {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

}  // namespace

std::string format_metrics_row(const MetricsRecord& r) {
  char buffer[256];
  std::snprintf(buffer, sizeof(buffer), "%zu,%s,%.6f,%.6f,%.9g,%.9g,%.9g", r.epoch,
                std::string(to_string(r.split)).c_str(), r.accuracy, r.ci95, r.cls_loss, r.matching_loss,
                r.total_loss);
  return buffer;
}

DatasetManifest load_run_dataset(const RunConfig& config) {
  if (config.synthetic) return generate_synthetic(*config.synthetic);
  if (config.manifest) return load_manifest(*config.manifest);
  throw ConfigError("config names no dataset");
}

TrainResult train(const RunConfig& config, const TrainOptions& options) {
  config.validate();
  if (config.output_dir.empty()) throw ConfigError("train: output directory not set");
  PrecisionScope precision(config.precision);

  std::optional<DatasetManifest> owned;
  if (!options.dataset) owned = load_run_dataset(config);
  const DatasetManifest& data = options.dataset ? *options.dataset : *owned;

  ModelConfig model_config = config.model_config;
  adopt_dataset_shape(model_config, data);
  MultiModalModel model(model_config, config.seed);

  TrainResult result;
  result.output_dir = config.output_dir;
  result.parameter_count = model.parameter_count();
  std::filesystem::create_directories(config.output_dir);
  {
    RunConfig recorded = config;
    recorded.model_config = model_config;
    auto out = open_output(config.output_dir / "config.json");
    out << to_json(recorded).dump(2) << '\n';
  }
  {
    auto out = open_output(config.output_dir / "parameters.csv");
    out << "name,shape,count\n";
    for (const auto& entry : model.parameters().entries()) {
      std::string shape = shape_to_string(entry.tensor.shape());
      out << entry.name << ",\"" << shape << "\"," << entry.tensor.numel() << '\n';
    }
    out << "total,," << result.parameter_count << '\n';
  }
  auto metrics = open_output(config.output_dir / "metrics.csv");
  auto timing = open_output(config.output_dir / "timing.csv");
  metrics << kMetricsHeader << '\n';
  timing << "epoch,split,seconds\n";

  auto emit = [&](const MetricsRecord& record) {
    metrics << format_metrics_row(record) << '\n';
    metrics.flush();
    char buffer[128];
    std::snprintf(buffer, sizeof(buffer), "%zu,%s,%.3f", record.epoch, std::string(to_string(record.split)).c_str(),
                  record.seconds);
    timing << buffer << '\n';
    timing.flush();
    result.records.push_back(record);
    if (options.on_record) options.on_record(record);
  };

  AdamConfig adam_config;
  adam_config.learning_rate = config.optimizer.learning_rate;
  adam_config.weight_decay = config.optimizer.weight_decay;
  adam_config.decoupled_weight_decay = config.optimizer.decoupled_weight_decay;
  Adam adam(model.parameters(), adam_config);

  CheckpointHeader header;
  header.ways = config.ways;
  header.shots = config.shots;
  header.queries = config.queries;
  header.precision = config.precision;

  EvaluationSpec val_spec;
  val_spec.split = Split::MetaVal;
  val_spec.ways = config.ways;
  val_spec.shots = config.shots;
  val_spec.queries = config.queries;
  val_spec.episodes = config.val_episodes;
  val_spec.seed = config.seed;

  bool have_best = false;
  const std::size_t per_epoch = config.episodes_per_epoch;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = Clock::now();
    adam.set_learning_rate(lr_schedule(epoch, config.optimizer.learning_rate, config.optimizer.lr_decay_every,
                                       config.optimizer.lr_decay_factor));
    std::vector<double> accuracies;
    accuracies.reserve(per_epoch);
    LossBreakdown sums;
    for (std::size_t e = 0; e < per_epoch; ++e) {
      const std::size_t index = config.fixed_episode_pool ? e : epoch * per_epoch + e;
      Rng sampler = Rng::stream(config.seed, "train/episode", index);
      const Episode episode =
          sample_episode(data, Split::MetaTrain, config.ways, config.shots, config.queries, sampler);
      Rng dropout_rng = Rng::stream(config.seed, "train/dropout", index);

      const std::string where = "epoch " + std::to_string(epoch + 1) + ", episode " + std::to_string(e + 1);
      adam.zero_grad();
      MultiModalModel::EpisodeOutput out;
      try {
        out = model.run_episode(data, episode, true, &dropout_rng);
        if (!std::isfinite(out.losses.total)) throw NumericError("non-finite loss");
        backward(out.total_loss);
        adam.step();
      } catch (const NumericError& err) {
        throw NumericError(std::string(err.what()) + " at " + where);
      }
      accuracies.push_back(out.accuracy);
      sums.cls += out.losses.cls;
      sums.matching += out.losses.matching;
      sums.total += out.losses.total;
    }
    const AccuracySummary summary = summarize_accuracies(accuracies);
    const double n = static_cast<double>(per_epoch);
    emit(MetricsRecord{epoch + 1, Split::MetaTrain, summary.mean, summary.ci95, sums.cls / n, sums.matching / n,
                       sums.total / n, seconds_since(start)});

    const bool validate_now = (config.val_period > 0 && (epoch + 1) % config.val_period == 0) ||
                              epoch + 1 == config.epochs;
    if (validate_now) {
      const auto val_start = Clock::now();
      const EvaluationResult val = evaluate_model(model, data, val_spec);
      const LossBreakdown losses = val.mean_losses.value_or(LossBreakdown{});
      emit(MetricsRecord{epoch + 1, Split::MetaVal, val.summary.mean, val.summary.ci95, losses.cls, losses.matching,
                         losses.total, seconds_since(val_start)});
      if (!have_best || val.summary.mean > result.best_val_accuracy) {
        have_best = true;
        result.best_val_accuracy = val.summary.mean;
        result.best_epoch = epoch + 1;
        header.epoch = epoch + 1;
        save_checkpoint(config.output_dir / "best.ckpt", model, header);
      }
    }
  }
  header.epoch = config.epochs;
  save_checkpoint(config.output_dir / "final.ckpt", model, header);

  if (config.test_episodes > 0 && have_best) {
    const auto test_start = Clock::now();
    const LoadedCheckpoint best = load_checkpoint(config.output_dir / "best.ckpt");
    EvaluationSpec test_spec = val_spec;
    test_spec.split = Split::MetaTest;
    test_spec.episodes = config.test_episodes;
    const EvaluationResult test = evaluate_model(*best.model, data, test_spec);
    const LossBreakdown losses = test.mean_losses.value_or(LossBreakdown{});
    result.test = test.summary;
    emit(MetricsRecord{config.epochs, Split::MetaTest, test.summary.mean, test.summary.ci95, losses.cls,
                       losses.matching, losses.total, seconds_since(test_start)});
  }
  return result;
}

}  // namespace mmfs
