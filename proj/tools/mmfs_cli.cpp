#include <cstdint>
#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "mmfs/core/error.hpp"
#include "mmfs/episodes/synthetic.hpp"
#include "mmfs/harness/checkpoint.hpp"
#include "mmfs/harness/config.hpp"
#include "mmfs/harness/evaluate.hpp"
#include "mmfs/harness/export.hpp"
#include "mmfs/harness/trainer.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int run_train(const std::string& config_path, const std::string& out_dir, bool quiet) {
  mmfs::RunConfig config = mmfs::load_run_config(config_path);
  if (!out_dir.empty()) config.output_dir = out_dir;
  mmfs::TrainOptions options;
  if (!quiet) {
    options.on_record = [](const mmfs::MetricsRecord& r) {
      std::fprintf(stderr, "epoch %zu %s acc %.2f +- %.2f loss %.4f (%.1fs)\n", r.epoch,
                   std::string(mmfs::to_string(r.split)).c_str(), r.accuracy, r.ci95, r.total_loss, r.seconds);
    };
  }
  const mmfs::TrainResult result = mmfs::train(config, options);
  std::printf("parameters %zu\n", result.parameter_count);
  std::printf("best_epoch %zu val_accuracy %.2f\n", result.best_epoch, result.best_val_accuracy);
  if (result.test) std::printf("test_accuracy %.2f ci95 %.2f\n", result.test->mean, result.test->ci95);
  std::printf("output %s\n", result.output_dir.string().c_str());
  return kExitOk;
}

int run_evaluate(const std::string& checkpoint, const std::string& data, const std::string& split,
                 std::size_t episodes, std::uint64_t seed) {
  const auto result = mmfs::evaluate_checkpoint(checkpoint, data, mmfs::parse_split(split), episodes, seed);
  std::printf("split %s episodes %zu accuracy %.2f ci95 %.2f\n", split.c_str(), result.summary.episodes,
              result.summary.mean, result.summary.ci95);
  return kExitOk;
}

int run_gen_data(const std::string& spec_path, const std::string& out) {
  const mmfs::SyntheticSpec spec = mmfs::load_synthetic_spec(spec_path);
  const mmfs::DatasetManifest manifest = mmfs::generate_synthetic(spec);
  mmfs::save_manifest(manifest, out);
  std::printf("items %zu classes %zu manifest %s\n", manifest.size(), manifest.classes().size(), out.c_str());
  return kExitOk;
}

int run_export(const std::string& checkpoint, const std::string& data, const std::string& out,
               const mmfs::ExportSpec& spec) {
  const mmfs::LoadedCheckpoint loaded = mmfs::load_checkpoint(checkpoint);
  mmfs::PrecisionScope precision(loaded.header.precision);
  const mmfs::DatasetManifest manifest = mmfs::load_manifest(data);
  const auto rows = mmfs::collect_embeddings(*loaded.model, manifest, spec);
  mmfs::write_embeddings_csv(out, rows);
  std::printf("rows %zu file %s\n", rows.size(), out.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-modal few-shot meta-learning engine"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  bool quiet = false;
  auto* train = app.add_subcommand("train", "Episodic training from a JSON run config");
  train->add_option("--config", config_path, "Run config (JSON)")->required();
  train->add_option("--out", out_dir, "Run directory (overrides output_dir)");
  train->add_flag("--quiet", quiet, "No per-epoch progress on stderr");

  std::string checkpoint, data, split = "meta_test";
  std::size_t episodes = 600;
  std::uint64_t seed = 0;
  auto* evaluate = app.add_subcommand("evaluate", "Mean accuracy and 95% CI of a checkpoint");
  evaluate->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  evaluate->add_option("--data", data, "Manifest (JSON lines)")->required();
  evaluate->add_option("--split", split, "meta_train, meta_val or meta_test");
  evaluate->add_option("--episodes", episodes, "Episode count");
  evaluate->add_option("--seed", seed, "Episode sampling seed");

  std::string spec_path, manifest_out;
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic multi-modal manifest");
  gen->add_option("--spec", spec_path, "Synthetic spec (JSON)")->required();
  gen->add_option("--out", manifest_out, "Manifest path")->required();

  std::string export_checkpoint, export_data, export_out, export_split = "meta_test";
  mmfs::ExportSpec export_spec;
  auto* exporter = app.add_subcommand("export-embeddings", "Dump embeddings of random items to CSV");
  exporter->add_option("--checkpoint", export_checkpoint, "Checkpoint file")->required();
  exporter->add_option("--data", export_data, "Manifest (JSON lines)")->required();
  exporter->add_option("--out", export_out, "CSV path")->required();
  exporter->add_option("--split", export_split, "Split to sample from");
  exporter->add_option("--classes", export_spec.classes, "Number of classes");
  exporter->add_option("--per-class", export_spec.per_class, "Items per class");
  exporter->add_option("--seed", export_spec.seed, "Selection seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return run_train(config_path, out_dir, quiet);
    if (*evaluate) return run_evaluate(checkpoint, data, split, episodes, seed);
    if (*gen) return run_gen_data(spec_path, manifest_out);
    if (*exporter) {
      export_spec.split = mmfs::parse_split(export_split);
      return run_export(export_checkpoint, export_data, export_out, export_spec);
    }
  } catch (const mmfs::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const mmfs::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const mmfs::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}
