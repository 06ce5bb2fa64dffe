#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "mmfs/core/error.hpp"
#include "mmfs/episodes/manifest.hpp"
#include "mmfs/episodes/sampler.hpp"
#include "mmfs/episodes/synthetic.hpp"

using namespace mmfs;

namespace {

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.train_classes = 6;
  s.val_classes = 3;
  s.test_classes = 3;
  s.items_per_class = 8;
  s.sentences_per_item = 3;
  s.seed = 5;
  return s;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("mmfs_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

const char* kItemA = R"({"class":"a","image_shape":[1,1,2],"image":[0.5,1],"sentences":["x y"]})";
const char* kItemB = R"({"class":"b","image_shape":[1,1,2],"image":[2,3],"sentences":["z"]})";

}  // namespace

TEST(Synthetic, NoiselessImagesIdenticalWithinClass) {
  SyntheticSpec s = small_spec();
  s.image_noise = 0.0;
  const DatasetManifest m = generate_synthetic(s);
  for (const auto& name : m.classes()) {
    const auto& items = m.items_of_class(name);
    for (std::size_t i : items) EXPECT_EQ(m.item(i).image, m.item(items.front()).image);
  }
  EXPECT_NE(m.item(m.items_of_class(m.classes()[0]).front()).image,
            m.item(m.items_of_class(m.classes()[1]).front()).image);
}

TEST(Synthetic, TextSignalControlsClassTokens) {
  SyntheticSpec s = small_spec();
  s.text_signal = 1.0;
  const DatasetManifest full = generate_synthetic(s);
  for (const auto& item : full.items())
    for (const auto& sentence : item.sentences) EXPECT_EQ(sentence.find(" w"), std::string::npos) << sentence;
  s.text_signal = 0.0;
  const DatasetManifest none = generate_synthetic(s);
  for (const auto& item : none.items())
    for (const auto& sentence : item.sentences) EXPECT_EQ(sentence.find('c'), std::string::npos) << sentence;
}

TEST(Synthetic, DeterministicAndShaped) {
  const SyntheticSpec s = small_spec();
  const DatasetManifest a = generate_synthetic(s);
  EXPECT_TRUE(a == generate_synthetic(s));
  EXPECT_EQ(a.size(), 12u * 8);
  EXPECT_EQ(a.split_classes(Split::MetaTrain).size(), 6u);
  EXPECT_EQ(a.sentences_per_item(), 3u);
  EXPECT_EQ(a.image_shape(), (std::array<std::size_t, 3>{3, 16, 16}));
  SyntheticSpec other = s;
  other.seed = 6;
  EXPECT_FALSE(a == generate_synthetic(other));
}

TEST(Synthetic, SpecValidation) {
  SyntheticSpec s = small_spec();
  s.image_noise = -1.0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_spec();
  s.text_signal = 1.5;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Manifest, RoundTripIsExact) {
  const auto dir = temp_dir("roundtrip");
  const DatasetManifest m = generate_synthetic(small_spec());
  save_manifest(m, dir / "data.jsonl");
  EXPECT_TRUE(std::filesystem::exists(dir / "data.jsonl.splits.json"));
  EXPECT_TRUE(load_manifest(dir / "data.jsonl") == m);
}

TEST(Manifest, MinimalFile) {
  const auto dir = temp_dir("minimal");
  write_file(dir / "m.jsonl", std::string(kItemA) + "\n" + kItemB + "\n");
  write_file(dir / "m.jsonl.splits.json",
             R"({"meta_train":["a"],"meta_val":[],"meta_test":["b"],"n_sentences":1})");
  const DatasetManifest m = load_manifest(dir / "m.jsonl");
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m.item(0).class_name, "a");
  EXPECT_EQ(m.item(1).image, (std::vector<float>{2, 3}));
  EXPECT_EQ(m.split_classes(Split::MetaTest), (std::vector<std::string>{"b"}));
}

TEST(Manifest, SplitOverlapRejected) {
  const auto dir = temp_dir("overlap");
  write_file(dir / "m.jsonl", std::string(kItemA) + "\n" + kItemB + "\n");
  write_file(dir / "m.jsonl.splits.json",
             R"({"meta_train":["a"],"meta_val":[],"meta_test":["a","b"],"n_sentences":1})");
  try {
    load_manifest(dir / "m.jsonl");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("split overlap"), std::string::npos);
  }
}

TEST(Manifest, ErrorsCarryLineNumbers) {
  const auto dir = temp_dir("lines");
  write_file(dir / "m.jsonl.splits.json", R"({"meta_train":["a","b"],"meta_val":[],"meta_test":[],"n_sentences":1})");
  write_file(dir / "m.jsonl",
             std::string(kItemA) + "\n" + R"({"class":"b","image_shape":[1,1,2],"image":[2,3],"sentences":["z","q"]})");
  try {
    load_manifest(dir / "m.jsonl");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("m.jsonl:2"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("sentence count"), std::string::npos) << e.what();
  }
  write_file(dir / "m.jsonl", std::string(kItemA) + "\n" + R"({"class":"b","image":[2,3],"sentences":["z"]})");
  try {
    load_manifest(dir / "m.jsonl");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("m.jsonl:2"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("image_shape"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_manifest(dir / "missing.jsonl"), DataError);
}

TEST(Sampler, FullSplitUsesEveryClassOnce) {
  const DatasetManifest m = generate_synthetic(small_spec());
  Rng rng(1);
  const Episode e = sample_episode(m, Split::MetaTrain, 6, 2, 3, rng);
  std::set<std::string> classes(e.classes.begin(), e.classes.end());
  EXPECT_EQ(classes.size(), 6u);
  const auto& split = m.split_classes(Split::MetaTrain);
  EXPECT_EQ(classes, std::set<std::string>(split.begin(), split.end()));
}

TEST(Sampler, InvariantsAndDeterminism) {
  const DatasetManifest m = generate_synthetic(small_spec());
  for (std::uint64_t index = 0; index < 50; ++index) {
    Rng a = Rng::stream(9, "train/episode", index);
    Rng b = Rng::stream(9, "train/episode", index);
    const Episode e = sample_episode(m, Split::MetaTrain, 4, 2, 3, a);
    const Episode f = sample_episode(m, Split::MetaTrain, 4, 2, 3, b);
    EXPECT_EQ(e.support, f.support);
    EXPECT_EQ(e.query, f.query);
    std::set<std::size_t> support(e.support.begin(), e.support.end());
    for (std::size_t q : e.query) EXPECT_FALSE(support.contains(q));
    EXPECT_EQ(support.size(), 8u);
    std::map<int, int> support_count, query_count;
    for (std::size_t i = 0; i < e.support.size(); ++i) {
      ++support_count[e.support_labels[i]];
      EXPECT_EQ(m.item(e.support[i]).class_name, e.classes[e.support_labels[i]]);
    }
    for (std::size_t i = 0; i < e.query.size(); ++i) {
      ++query_count[e.query_labels[i]];
      EXPECT_EQ(m.item(e.query[i]).class_name, e.classes[e.query_labels[i]]);
    }
    for (int label = 0; label < 4; ++label) {
      EXPECT_EQ(support_count[label], 2);
      EXPECT_EQ(query_count[label], 3);
    }
  }
}

TEST(Sampler, ShortfallNamed) {
  const DatasetManifest m = generate_synthetic(small_spec());
  Rng rng(2);
  try {
    sample_episode(m, Split::MetaVal, 5, 1, 1, rng);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(sample_episode(m, Split::MetaTrain, 2, 5, 5, rng), DataError);
}

TEST(Sampler, ClassFrequenciesUniform) {
  SyntheticSpec s = small_spec();
  s.train_classes = 20;
  s.items_per_class = 3;
  s.channels = 1;
  const DatasetManifest m = generate_synthetic(s);
  std::map<std::string, int> counts;
  const int episodes = 10000;
  for (int i = 0; i < episodes; ++i) {
    Rng rng = Rng::stream(3, "freq", static_cast<std::uint64_t>(i));
    for (const auto& c : sample_episode(m, Split::MetaTrain, 5, 1, 1, rng).classes) ++counts[c];
  }
  const double p = 5.0 / 20.0;
  const double mean = episodes * p;
  const double sigma = std::sqrt(episodes * p * (1 - p));
  ASSERT_EQ(counts.size(), 20u);
  for (const auto& [name, count] : counts) EXPECT_LE(std::abs(count - mean), 3 * sigma) << name;
}

TEST(Splits, TokensRoundTrip) {
  for (Split s : kAllSplits) EXPECT_EQ(parse_split(to_string(s)), s);
  EXPECT_THROW(parse_split("train"), ConfigError);
}
