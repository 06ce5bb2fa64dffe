#include <gtest/gtest.h>

#include <algorithm>

#include "mmfs/core/error.hpp"
#include "mmfs/encoders/conv4.hpp"
#include "mmfs/encoders/text_encoder.hpp"
#include "mmfs/encoders/tokenizer.hpp"
#include "mmfs/tensor/ops.hpp"
#include "oracles.hpp"

using namespace mmfs;

namespace {

Tensor random_images(std::size_t b, std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(b * c * h * w);
  for (double& x : v) x = rng.normal();
  return Tensor({b, c, h, w}, v);
}

TextEncoder make_text_encoder(std::size_t vocab = 64, std::size_t h = 12, std::size_t d = 5, std::uint64_t seed = 1) {
  Rng projection = Rng::stream(seed, "text-projection");
  Rng init = Rng::stream(seed, "init/text");
  return TextEncoder(TextEncoderConfig{vocab, h, d}, projection, init);
}

}  // namespace

TEST(Tokenizer, LowercasesAndSplits) {
  EXPECT_EQ(tokenize("  The RED\tbird\n"), (std::vector<std::string>{"the", "red", "bird"}));
  EXPECT_TRUE(tokenize("   ").empty());
}

TEST(Tokenizer, BucketsAreStable) {
  EXPECT_EQ(token_bucket("bird", 4096), fnv1a64("bird") % 4096);
  EXPECT_EQ(encode_sentence("Bird bird", 4096), (TokenSequence{token_bucket("bird", 4096), token_bucket("bird", 4096)}));
}

TEST(Conv4, OutputShape) {
  PrecisionScope p(Precision::Float64);
  Rng rng(1);
  Conv4Encoder enc(Conv4Config{3, 16, 16, 8, 128, 1e-5}, rng);
  const auto out = enc.encode(random_images(2, 3, 16, 16, 2));
  EXPECT_EQ(out.embedding.shape(), (Shape{2, 128}));
  EXPECT_EQ(out.feature_map.shape(), (Shape{2, 8, 1, 1}));
}

TEST(Conv4, LargerResolution) {
  Rng rng(1);
  Conv4Encoder enc(Conv4Config{1, 32, 48, 4, 16, 1e-5}, rng);
  EXPECT_EQ(enc.encode(random_images(1, 1, 32, 48, 2)).embedding.shape(), (Shape{1, 16}));
}

TEST(Conv4, IndivisibleResolutionIsConfigError) {
  Rng rng(1);
  EXPECT_THROW(Conv4Encoder(Conv4Config{3, 20, 16, 8, 16, 1e-5}, rng), ConfigError);
}

TEST(Conv4, ZeroParametersGiveZeroEmbedding) {
  Rng rng(1);
  Conv4Encoder enc(Conv4Config{3, 16, 16, 4, 8, 1e-5}, rng);
  ParameterList params;
  enc.register_parameters(params, "image");
  for (const auto& entry : params.entries()) {
    Tensor t = entry.tensor;
    std::fill(t.mutable_values().begin(), t.mutable_values().end(), 0.0);
  }
  const Tensor out = enc.encode(random_images(2, 3, 16, 16, 3)).embedding;
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(Conv4, DeterministicAcrossConstructions) {
  auto run = [] {
    Rng rng(77);
    Conv4Encoder enc(Conv4Config{3, 16, 16, 6, 10, 1e-5}, rng);
    return enc.encode(random_images(2, 3, 16, 16, 5)).embedding.to_vector();
  };
  EXPECT_EQ(run(), run());
}

TEST(Conv4, ParameterCountReported) {
  Rng rng(1);
  Conv4Encoder enc(Conv4Config{3, 16, 16, 8, 16, 1e-5}, rng);
  // Conv kernels, per-channel scale/shift, FC.
  const std::size_t expected = (8 * 3 * 9 + 16) + 3 * (8 * 8 * 9 + 16) + (8 * 16 + 16);
  EXPECT_EQ(enc.parameter_count(), expected);
}

TEST(TextEncoder, MatchesLoopOracle) {
  PrecisionScope p(Precision::Float64);
  const TextEncoder enc = make_text_encoder();
  const auto projection = oracle::to_mat(enc.projection());
  const auto w = oracle::to_mat(enc.head().weight);
  const auto b = enc.head().bias.to_vector();
  Rng rng(8);
  std::vector<std::vector<TokenSequence>> items(3, std::vector<TokenSequence>(4));
  for (auto& item : items)
    for (auto& sentence : item)
      for (int t = 0; t < 7; ++t) sentence.push_back(rng.below(64));
  const auto out = enc.encode(items, 4);
  ASSERT_EQ(out.stack.shape(), (Shape{3, 4, 5}));
  ASSERT_EQ(out.pooled.shape(), (Shape{3, 5}));
  for (std::size_t i = 0; i < 3; ++i) {
    oracle::Vec pooled(5, 0.0);
    for (std::size_t s = 0; s < 4; ++s) {
      std::vector<double> counts(64, 0.0);
      for (std::size_t token : items[i][s]) counts[token] += 1.0;
      oracle::Vec hidden(12, 0.0);
      for (std::size_t v = 0; v < 64; ++v)
        for (std::size_t j = 0; j < 12; ++j) hidden[j] += counts[v] * projection[v][j];
      const auto row = oracle::linear(hidden, w, b);
      for (std::size_t k = 0; k < 5; ++k) {
        EXPECT_NEAR(out.stack.at((i * 4 + s) * 5 + k), row[k], 1e-6);
        pooled[k] += row[k] / 4.0;
      }
    }
    for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(out.pooled.at(i * 5 + k), pooled[k], 1e-6);
  }
}

TEST(TextEncoder, SingleSentencePooledEqualsRow) {
  const TextEncoder enc = make_text_encoder();
  const std::vector<std::vector<std::string>> items{{"a small red bird"}};
  const auto out = enc.encode_text(items, 1);
  EXPECT_EQ(out.stack.to_vector(), out.pooled.to_vector());
}

TEST(TextEncoder, IdenticalSentencesGiveIdenticalRows) {
  const TextEncoder enc = make_text_encoder();
  const std::vector<std::vector<std::string>> items{{"the bird sings", "the bird sings"}};
  const auto stack = enc.encode_text(items, 2).stack.to_vector();
  EXPECT_TRUE(std::equal(stack.begin(), stack.begin() + 5, stack.begin() + 5));
}

TEST(TextEncoder, PermutingSentencesPermutesRows) {
  PrecisionScope p(Precision::Float64);
  const TextEncoder enc = make_text_encoder();
  const std::vector<std::vector<std::string>> a{{"one two", "three four five", "six"}};
  const std::vector<std::vector<std::string>> b{{"six", "one two", "three four five"}};
  const auto oa = enc.encode_text(a, 3);
  const auto ob = enc.encode_text(b, 3);
  const auto sa = oa.stack.to_vector();
  const auto sb = ob.stack.to_vector();
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_EQ(sa[0 * 5 + k], sb[1 * 5 + k]);
    EXPECT_EQ(sa[1 * 5 + k], sb[2 * 5 + k]);
    EXPECT_EQ(sa[2 * 5 + k], sb[0 * 5 + k]);
  }
  const auto pa = oa.pooled.to_vector();
  const auto pb = ob.pooled.to_vector();
  for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(pa[k], pb[k], 1e-12);
}

TEST(TextEncoder, WrongSentenceCountNamesItem) {
  const TextEncoder enc = make_text_encoder();
  const std::vector<std::vector<std::string>> items{{"a", "b"}, {"c"}};
  try {
    enc.encode_text(items, 2);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("item 1"), std::string::npos);
  }
}

TEST(TextEncoder, FrozenProjectionReproducibleAndUntrained) {
  const TextEncoder a = make_text_encoder(64, 12, 5, 9);
  const TextEncoder b = make_text_encoder(64, 12, 5, 9);
  EXPECT_EQ(a.projection().to_vector(), b.projection().to_vector());
  ParameterList params;
  a.register_parameters(params, "text");
  ASSERT_EQ(params.size(), 2u);
  EXPECT_EQ(params.entries()[0].name, "text.fc.weight");
  EXPECT_EQ(params.parameter_count(), a.parameter_count());
  EXPECT_EQ(a.parameter_count(), 12u * 5 + 5);
  EXPECT_FALSE(a.projection().requires_grad());
}

TEST(TextEncoder, GradientStopsAtTrainableLayer) {
  const TextEncoder enc = make_text_encoder();
  ParameterList params;
  enc.register_parameters(params, "text");
  const std::vector<std::vector<std::string>> items{{"x y", "z"}};
  const auto out = enc.encode_text(items, 2);
  sum_all(out.pooled).backward();
  for (const auto& entry : params.entries()) EXPECT_TRUE(entry.tensor.grad().defined());
}
