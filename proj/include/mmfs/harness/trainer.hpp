#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mmfs/episodes/manifest.hpp"
#include "mmfs/harness/config.hpp"
#include "mmfs/harness/evaluate.hpp"

namespace mmfs {

/// One row of metrics.csv. Wall time goes to timing.csv so metrics files
/// of equal-seed runs compare byte for byte.
struct MetricsRecord {
  std::size_t epoch = 0;  // 1-based
  Split split = Split::MetaTrain;
  double accuracy = 0.0;  // percent
  double ci95 = 0.0;
  double cls_loss = 0.0;
  double matching_loss = 0.0;
  double total_loss = 0.0;
  double seconds = 0.0;
};

inline constexpr const char* kMetricsHeader = "epoch,split,accuracy,ci95,cls_loss,matching_loss,total_loss";
std::string format_metrics_row(const MetricsRecord& record);

struct TrainResult {
  std::filesystem::path output_dir;
  std::vector<MetricsRecord> records;
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0.0;
  std::optional<AccuracySummary> test;  // best checkpoint on meta_test
  std::size_t parameter_count = 0;
};

struct TrainOptions {
  /// Called after every metrics row is written.
  std::function<void(const MetricsRecord&)> on_record;
  /// Use this dataset instead of the one named in the config.
  const DatasetManifest* dataset = nullptr;
};

/// Episodic training. Per epoch: learning rate from the step schedule, then
/// `episodes_per_epoch` episodes each followed by an Adam step. Every
/// `val_period` epochs and after the last epoch the model is scored on
/// meta_val; the best (earliest on ties) is saved as best.ckpt. The run
/// directory receives config.json, metrics.csv, timing.csv,
/// parameters.csv, best.ckpt and final.ckpt; with test_episodes > 0 the
/// best checkpoint is finally scored on meta_test.
///
/// Throws NumericError with epoch/episode context on a non-finite loss.
TrainResult train(const RunConfig& config, const TrainOptions& options = {});

/// Dataset named by a run config: generated or loaded.
DatasetManifest load_run_dataset(const RunConfig& config);

}  // namespace mmfs
