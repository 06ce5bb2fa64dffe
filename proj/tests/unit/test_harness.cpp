#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "mmfs/core/error.hpp"
#include "mmfs/episodes/synthetic.hpp"
#include "mmfs/harness/checkpoint.hpp"
#include "mmfs/harness/config.hpp"
#include "mmfs/harness/evaluate.hpp"
#include "mmfs/harness/export.hpp"
#include "mmfs/harness/model.hpp"
#include "mmfs/harness/trainer.hpp"
#include "oracles.hpp"

using namespace mmfs;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("mmfs_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t line_count(const fs::path& path) {
  std::ifstream in(path);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

SyntheticSpec tiny_data() {
  SyntheticSpec s;
  s.train_classes = 6;
  s.val_classes = 5;
  s.test_classes = 5;
  s.items_per_class = 12;
  s.sentences_per_item = 3;
  s.channels = 1;
  s.seed = 2;
  return s;
}

RunConfig tiny_run(const fs::path& out) {
  RunConfig c;
  c.synthetic = tiny_data();
  c.model_config.embed_dim = 8;
  c.model_config.conv_hidden = 4;
  c.model_config.text_projection_dim = 16;
  c.model_config.vocab_size = 256;
  c.ways = 3;
  c.queries = 2;
  c.epochs = 2;
  c.episodes_per_epoch = 2;
  c.val_period = 1;
  c.val_episodes = 4;
  c.test_episodes = 4;
  c.seed = 11;
  c.output_dir = out;
  return c;
}

}  // namespace

TEST(Config, UnknownFieldRejected) {
  nlohmann::json j = to_json(tiny_run("/tmp/x"));
  j["learning_rat"] = 0.1;
  EXPECT_THROW(run_config_from_json(j), ConfigError);
  j = to_json(tiny_run("/tmp/x"));
  j["optimizer"]["momentum"] = 0.9;
  EXPECT_THROW(run_config_from_json(j), ConfigError);
}

TEST(Config, InvalidValuesRejected) {
  nlohmann::json j = to_json(tiny_run("/tmp/x"));
  j["fusion"] = "concat";
  EXPECT_THROW(run_config_from_json(j), ConfigError);
  j = to_json(tiny_run("/tmp/x"));
  j["ways"] = 0;
  EXPECT_THROW(run_config_from_json(j), ConfigError);
  j = to_json(tiny_run("/tmp/x"));
  j["epochs"] = "ten";
  EXPECT_THROW(run_config_from_json(j), ConfigError);
}

TEST(Config, JsonRoundTrip) {
  RunConfig c = tiny_run("/tmp/out");
  c.model_config.fusion = FusionMethod::AttentionResidual;
  c.model_config.model = MetaLearner::Maml;
  c.optimizer.decoupled_weight_decay = true;
  c.precision = Precision::Float64;
  const nlohmann::json j = to_json(c);
  EXPECT_EQ(to_json(run_config_from_json(j)), j);
}

TEST(Statistics, HandOracle) {
  const std::vector<double> pair{0.4, 0.6};
  const AccuracySummary s = summarize_accuracies(pair);
  EXPECT_NEAR(s.mean, 50.0, 1e-9);
  EXPECT_NEAR(s.ci95, 19.6, 1e-9);
  const std::vector<double> perfect(30, 1.0);
  const AccuracySummary p = summarize_accuracies(perfect);
  EXPECT_NEAR(p.mean, 100.0, 1e-9);
  EXPECT_EQ(p.ci95, 0.0);
  Rng rng(3);
  std::vector<double> random(600);
  for (double& v : random) v = static_cast<double>(rng.below(16)) / 15.0;
  const auto o = oracle::summarize(random);
  const AccuracySummary r = summarize_accuracies(random);
  EXPECT_NEAR(r.mean, o.mean, 1e-9);
  EXPECT_NEAR(r.ci95, o.ci95, 1e-9);
  EXPECT_EQ(summarize_accuracies(std::vector<double>{0.3}).ci95, 0.0);
}

TEST(Statistics, ArgmaxTiesGoToLowestIndex) {
  const Tensor logits = Tensor::matrix({{1, 1, 0}, {0, 2, 2}});
  EXPECT_EQ(argmax_accuracy(logits, std::vector<int>{0, 1}), 1.0);
  EXPECT_EQ(argmax_accuracy(logits, std::vector<int>{1, 2}), 0.0);
}

TEST(Evaluate, IndependentOfWorkerCount) {
  const DatasetManifest m = generate_synthetic(tiny_data());
  EvaluationSpec spec{Split::MetaTest, 3, 1, 2, 40, 5, 1};
  auto scorer = [](const Episode& e, std::size_t) {
    return EpisodeScore{static_cast<double>(e.support.front() % 7) / 6.0, std::nullopt};
  };
  const auto one = evaluate_episodes(m, spec, scorer);
  spec.workers = 4;
  const auto four = evaluate_episodes(m, spec, scorer);
  EXPECT_EQ(one.accuracies, four.accuracies);
  EXPECT_EQ(one.summary.mean, four.summary.mean);
}

TEST(Model, ImageOnlyCountsOnlyImageParameters) {
  ModelConfig c;
  c.modality = Modality::ImageOnly;
  c.embed_dim = 8;
  c.conv_hidden = 4;
  c.image_channels = 1;
  const MultiModalModel image_only(c, 1);
  EXPECT_FALSE(image_only.has_text_encoder());
  EXPECT_FALSE(image_only.has_fusion());
  for (const auto& entry : image_only.parameters().entries()) EXPECT_EQ(entry.name.rfind("image.", 0), 0u);

  c.modality = Modality::MultiModal;
  c.fusion = FusionMethod::Attention;
  const MultiModalModel full(c, 1);
  EXPECT_TRUE(full.has_fusion());
  EXPECT_GT(full.parameter_count(), image_only.parameter_count());
}

TEST(Checkpoint, BitwiseRoundTrip) {
  const auto dir = temp_dir("ckpt");
  const DatasetManifest m = generate_synthetic(tiny_data());
  ModelConfig c;
  c.fusion = FusionMethod::Attention;
  c.embed_dim = 8;
  c.conv_hidden = 4;
  c.text_projection_dim = 16;
  adopt_dataset_shape(c, m);
  const MultiModalModel model(c, 42);
  CheckpointHeader header;
  header.model = c;
  header.seed = 42;
  header.epoch = 3;
  save_checkpoint(dir / "a.ckpt", model, header);
  const LoadedCheckpoint loaded = load_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(loaded.header.epoch, 3u);
  EXPECT_EQ(loaded.header.seed, 42u);
  const auto& a = model.parameters().entries();
  const auto& b = loaded.model->parameters().entries();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_EQ(a[i].tensor.to_vector(), b[i].tensor.to_vector());
  }
  save_checkpoint(dir / "b.ckpt", *loaded.model, loaded.header);
  EXPECT_EQ(read_file(dir / "a.ckpt"), read_file(dir / "b.ckpt"));

  std::ofstream(dir / "bad.ckpt") << "not a checkpoint";
  EXPECT_THROW(load_checkpoint(dir / "bad.ckpt"), DataError);
}

TEST(Trainer, WritesExpectedRows) {
  const auto dir = temp_dir("rows");
  const TrainResult r = train(tiny_run(dir / "run"));
  // 2 epochs × (train + val) + final test.
  EXPECT_EQ(line_count(dir / "run" / "metrics.csv"), 1u + 5);
  std::ifstream in(dir / "run" / "metrics.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, kMetricsHeader);
  std::size_t last = 0;
  for (const auto& rec : r.records) {
    EXPECT_GE(rec.epoch, last);
    last = rec.epoch;
  }
  for (const char* name : {"config.json", "timing.csv", "parameters.csv", "best.ckpt", "final.ckpt"})
    EXPECT_TRUE(fs::exists(dir / "run" / name)) << name;
  ASSERT_TRUE(r.test.has_value());
  EXPECT_EQ(r.test->episodes, 4u);
  // Round trip through the written config.
  const RunConfig reloaded = load_run_config(dir / "run" / "config.json");
  RunConfig expected = tiny_run(dir / "run");
  adopt_dataset_shape(expected.model_config, generate_synthetic(tiny_data()));
  EXPECT_EQ(to_json(reloaded), to_json(expected));
}

TEST(Trainer, SameSeedIsByteIdentical) {
  const auto dir = temp_dir("determinism");
  train(tiny_run(dir / "a"));
  train(tiny_run(dir / "b"));
  EXPECT_EQ(read_file(dir / "a" / "metrics.csv"), read_file(dir / "b" / "metrics.csv"));
  EXPECT_EQ(read_file(dir / "a" / "final.ckpt"), read_file(dir / "b" / "final.ckpt"));
  EXPECT_EQ(read_file(dir / "a" / "best.ckpt"), read_file(dir / "b" / "best.ckpt"));
}

TEST(Trainer, ZeroLearningRateFixedPoolRepeatsLoss) {
  const auto dir = temp_dir("frozen");
  RunConfig c = tiny_run(dir / "run");
  c.optimizer.learning_rate = 0.0;
  c.optimizer.weight_decay = 0.0;
  c.fixed_episode_pool = true;
  c.epochs = 3;
  c.test_episodes = 0;
  const TrainResult r = train(c);
  std::vector<double> losses;
  for (const auto& rec : r.records)
    if (rec.split == Split::MetaTrain) losses.push_back(rec.total_loss);
  ASSERT_EQ(losses.size(), 3u);
  EXPECT_EQ(losses[0], losses[1]);
  EXPECT_EQ(losses[1], losses[2]);
  EXPECT_FALSE(r.test.has_value());
}

TEST(Trainer, DivergenceNamesEpochAndEpisode) {
  const auto dir = temp_dir("diverge");
  RunConfig c = tiny_run(dir / "run");
  c.optimizer.learning_rate = 1e300;
  c.epochs = 3;
  try {
    train(c);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch "), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("episode "), std::string::npos) << e.what();
  }
}

TEST(Trainer, LearnsEasyData) {
  const auto dir = temp_dir("learn");
  RunConfig c = tiny_run(dir / "run");
  c.synthetic->text_signal = 1.0;
  c.model_config.modality = Modality::TextOnly;
  c.optimizer.learning_rate = 1e-2;
  c.epochs = 4;
  c.episodes_per_epoch = 5;
  c.val_episodes = 20;
  c.test_episodes = 20;
  const TrainResult r = train(c);
  ASSERT_TRUE(r.test.has_value());
  EXPECT_GT(r.test->mean, 80.0);
}

TEST(Export, RowsAndDeterminism) {
  const auto dir = temp_dir("export");
  SyntheticSpec s = tiny_data();
  s.test_classes = 10;
  const DatasetManifest m = generate_synthetic(s);
  ModelConfig c;
  c.embed_dim = 8;
  c.conv_hidden = 4;
  c.text_projection_dim = 16;
  adopt_dataset_shape(c, m);
  const MultiModalModel model(c, 4);
  const ExportSpec spec{Split::MetaTest, 10, 10, 9};
  const auto rows = collect_embeddings(model, m, spec);
  ASSERT_EQ(rows.size(), 100u);
  EXPECT_EQ(rows.front().embedding.size(), 8u);
  write_embeddings_csv(dir / "a.csv", rows);
  write_embeddings_csv(dir / "b.csv", collect_embeddings(model, m, spec));
  EXPECT_EQ(line_count(dir / "a.csv"), 101u);
  EXPECT_EQ(read_file(dir / "a.csv"), read_file(dir / "b.csv"));
  EXPECT_THROW(collect_embeddings(model, m, ExportSpec{Split::MetaTest, 11, 10, 9}), DataError);
  EXPECT_THROW(collect_embeddings(model, m, ExportSpec{Split::MetaTest, 10, 13, 9}), DataError);
}

#ifdef MMFS_CLI_PATH
namespace {

int run_cli(const std::string& args) {
  const std::string command = std::string(MMFS_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, ExitCodes) {
  const auto dir = temp_dir("cli");
  EXPECT_EQ(run_cli("--bogus"), 2);
  EXPECT_EQ(run_cli("train --config " + (dir / "missing.json").string()), 2);
  std::ofstream(dir / "bad.json") << R"({"epochs": 1, "unknown_field": 3})";
  EXPECT_EQ(run_cli("train --config " + (dir / "bad.json").string()), 2);

  std::ofstream(dir / "spec.json") << to_json(tiny_data()).dump();
  ASSERT_EQ(run_cli("gen-data --spec " + (dir / "spec.json").string() + " --out " + (dir / "d.jsonl").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "d.jsonl"));

  std::ofstream(dir / "junk.ckpt") << "junk";
  EXPECT_EQ(run_cli("evaluate --checkpoint " + (dir / "junk.ckpt").string() + " --data " +
                    (dir / "d.jsonl").string()),
            3);
  EXPECT_EQ(run_cli("evaluate --checkpoint " + (dir / "junk.ckpt").string() + " --data " +
                    (dir / "nothing.jsonl").string()),
            3);

  RunConfig c = tiny_run(dir / "run");
  c.synthetic.reset();
  c.manifest = dir / "d.jsonl";
  c.epochs = 1;
  std::ofstream(dir / "run.json") << to_json(c).dump();
  ASSERT_EQ(run_cli("train --quiet --config " + (dir / "run.json").string()), 0);
  EXPECT_EQ(run_cli("evaluate --checkpoint " + (dir / "run" / "best.ckpt").string() + " --data " +
                    (dir / "d.jsonl").string() + " --episodes 5 --seed 1"),
            0);
  EXPECT_EQ(run_cli("export-embeddings --checkpoint " + (dir / "run" / "best.ckpt").string() + " --data " +
                    (dir / "d.jsonl").string() + " --out " + (dir / "e.csv").string() + " --classes 5 --per-class 4"),
            0);
  EXPECT_EQ(line_count(dir / "e.csv"), 21u);

  c.output_dir = dir / "diverged";
  c.optimizer.learning_rate = 1e300;
  c.epochs = 3;
  std::ofstream(dir / "diverge.json") << to_json(c).dump();
  EXPECT_EQ(run_cli("train --quiet --config " + (dir / "diverge.json").string()), 4);
}
#endif
