#include <gtest/gtest.h>

#include <array>

#include "mmfs/core/error.hpp"
#include "mmfs/fewshot/maml.hpp"
#include "mmfs/fewshot/protonet.hpp"
#include "mmfs/losses/losses.hpp"
#include "mmfs/tensor/autograd.hpp"
#include "mmfs/tensor/linear.hpp"
#include "mmfs/tensor/ops.hpp"
#include "oracles.hpp"

using namespace mmfs;

namespace {

class FewShot : public ::testing::Test {
 protected:
  PrecisionScope precision_{Precision::Float64};
};

std::vector<int> grouped_labels(std::size_t ways, std::size_t per_class) {
  std::vector<int> labels;
  for (std::size_t c = 0; c < ways; ++c)
    for (std::size_t i = 0; i < per_class; ++i) labels.push_back(static_cast<int>(c));
  return labels;
}

EpisodeBatch random_batch(std::size_t ways, std::size_t shots, std::size_t queries, std::size_t d, Rng& rng) {
  EpisodeBatch b;
  b.ways = ways;
  b.shots = shots;
  b.queries_per_class = queries;
  b.support = oracle::to_tensor(oracle::random_mat(ways * shots, d, rng));
  b.query = oracle::to_tensor(oracle::random_mat(ways * queries, d, rng));
  b.support_labels = grouped_labels(ways, shots);
  b.query_labels = grouped_labels(ways, queries);
  return b;
}

}  // namespace

TEST_F(FewShot, QueryEqualToSupportWins) {
  Rng rng(1);
  EpisodeBatch b = random_batch(3, 1, 1, 4, rng);
  b.query = b.support;
  const auto logits = oracle::to_mat(protonet_logits(b));
  for (std::size_t q = 0; q < 3; ++q) {
    EXPECT_EQ(logits[q][q], 0.0);
    for (std::size_t j = 0; j < 3; ++j)
      if (j != q) EXPECT_LT(logits[q][j], 0.0);
  }
}

TEST_F(FewShot, EquidistantQueryGivesEvenProbabilities) {
  EpisodeBatch b;
  b.ways = 2;
  b.shots = 1;
  b.queries_per_class = 1;
  b.support = Tensor::matrix({{0, 0}, {2, 0}});
  b.support_labels = {0, 1};
  b.query = Tensor::matrix({{1, 0}, {1, 0}});
  b.query_labels = {0, 1};
  const Tensor p = softmax(protonet_logits(b), 1);
  for (double v : p.values()) EXPECT_NEAR(v, 0.5, 1e-12);
}

TEST_F(FewShot, ProtonetMatchesDoubleLoopOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const EpisodeBatch b = random_batch(3, 2, 2, 2, rng);
    const auto expected = oracle::protonet_logits(oracle::to_mat(b.support), b.support_labels, 3,
                                                  oracle::to_mat(b.query));
    EXPECT_LT(oracle::max_abs_diff(oracle::to_mat(protonet_logits(b)), expected), 1e-6);
  }
}

TEST_F(FewShot, PrototypeOfIdenticalRowsIsThatRow) {
  const Tensor row = Tensor::matrix({{0.1, 0.7, -3.3}});
  const Tensor support = concat({row, row, row}, 0);
  const std::vector<int> labels{0, 0, 0};
  EXPECT_EQ(class_prototypes(support, labels, 1).to_vector(), row.to_vector());
}

TEST(FewShotFloat32, TranslationInvariance) {
  PrecisionScope precision(Precision::Float32);
  Rng rng(3);
  EpisodeBatch b = random_batch(5, 2, 3, 8, rng);
  const auto base = oracle::to_mat(protonet_logits(b));
  std::vector<double> shift(8);
  for (double& v : shift) v = rng.normal();
  auto shifted = [&](const Tensor& t) {
    auto m = oracle::to_mat(t);
    for (auto& r : m)
      for (std::size_t k = 0; k < 8; ++k) r[k] += shift[k];
    return oracle::to_tensor(m);
  };
  b.support = shifted(b.support);
  b.query = shifted(b.query);
  EXPECT_LE(oracle::max_abs_diff(oracle::to_mat(protonet_logits(b)), base), 1e-5);
}

TEST_F(FewShot, ProbabilityRowsSumToOne) {
  Rng rng(4);
  const EpisodeBatch b = random_batch(5, 1, 4, 6, rng);
  const auto p = oracle::to_mat(softmax(protonet_logits(b), 1));
  for (const auto& row : p) {
    double total = 0.0;
    for (double v : row) total += v;
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST_F(FewShot, BatchValidation) {
  Rng rng(5);
  EpisodeBatch b = random_batch(2, 2, 1, 3, rng);
  EXPECT_NO_THROW(b.validate());
  b.support_labels = {0, 0, 0, 1};
  EXPECT_THROW(b.validate(), DataError);
  b.support_labels = {0, 0, 1, 2};
  EXPECT_THROW(b.validate(), DataError);
}

TEST_F(FewShot, ProtonetLossMatchesFiniteDifferences) {
  Rng rng(6);
  Tensor support = oracle::to_tensor(oracle::random_mat(2, 8, rng), true);
  Tensor query = oracle::to_tensor(oracle::random_mat(2, 8, rng), true);
  auto f = [&] {
    EpisodeBatch b{support, {0, 1}, query, {0, 1}, 2, 1, 1};
    return classification_loss(protonet_logits(b), b.query_labels);
  };
  EXPECT_LE(finite_diff_check(f, {support, query}).max_relative_error, 1e-4);
}

TEST_F(FewShot, MamlHandComputedStep) {
  EpisodeBatch b;
  b.ways = 2;
  b.shots = 1;
  b.queries_per_class = 1;
  b.support = Tensor::matrix({{1, 0}});
  b.support_labels = {0};
  b.query = Tensor::matrix({{1, 0}, {0, 1}});
  b.query_labels = {0, 1};
  for (bool second_order : {false, true}) {
    const MamlResult r = maml_episode(b, MamlConfig{0.5, 1, second_order});
    const auto w = r.adapted.weight.to_vector();
    const auto bias = r.adapted.bias.to_vector();
    const std::vector<double> w_expected{0.25, 0, -0.25, 0};
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(w[i], w_expected[i], 1e-6);
    EXPECT_NEAR(bias[0], 0.25, 1e-6);
    EXPECT_NEAR(bias[1], -0.25, 1e-6);
    EXPECT_NEAR(r.support_losses.front(), std::log(2.0), 1e-12);
  }
}

TEST_F(FewShot, MamlZeroStepIsExact) {
  Rng rng(7);
  const EpisodeBatch b = random_batch(3, 2, 2, 5, rng);
  const MamlResult r = maml_episode(b, MamlConfig{0.0, 1, false});
  const MamlHead zero = MamlHead::zeros(3, 5);
  EXPECT_EQ(r.adapted.weight.to_vector(), zero.weight.to_vector());
  EXPECT_EQ(r.adapted.bias.to_vector(), zero.bias.to_vector());
  EXPECT_EQ(r.query_logits.to_vector(), zero.logits(b.query).to_vector());
}

TEST_F(FewShot, MamlStepLowersSupportLoss) {
  Rng rng(8);
  int improved = 0;
  for (int e = 0; e < 100; ++e) {
    const EpisodeBatch b = random_batch(5, 1, 1, 8, rng);
    const MamlResult r = maml_episode(b, MamlConfig{0.5, 1, false});
    improved += r.support_losses[1] < r.support_losses[0];
  }
  EXPECT_GE(improved, 95);
}

TEST_F(FewShot, MamlSecondOrderAtZeroStepMatchesNoAdaptation) {
  Rng rng(9);
  Tensor support = oracle::to_tensor(oracle::random_mat(4, 3, rng), true);
  Tensor query = oracle::to_tensor(oracle::random_mat(4, 3, rng), true);
  EpisodeBatch b{support, {0, 0, 1, 1}, query, {0, 0, 1, 1}, 2, 2, 2};
  const std::array<Tensor, 2> inputs{support, query};
  const auto adapted = grad(cross_entropy(maml_episode(b, MamlConfig{0.0, 1, true}).query_logits, b.query_labels),
                            inputs);
  const MamlHead zero = MamlHead::zeros(2, 3);
  const auto plain = grad(cross_entropy(zero.logits(query), b.query_labels), inputs);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(adapted[i].to_vector(), plain[i].to_vector());
}

TEST_F(FewShot, MamlSecondOrderMatchesFiniteDifferences) {
  Rng rng(10);
  Linear encoder = Linear::init(4, 8, rng);  // 40 parameters
  encoder.weight.set_requires_grad(true);
  encoder.bias.set_requires_grad(true);
  const Tensor xs = oracle::to_tensor(oracle::random_mat(2, 4, rng));
  const Tensor xq = oracle::to_tensor(oracle::random_mat(2, 4, rng));
  for (std::size_t steps : {1u, 2u}) {
    auto f = [&] {
      EpisodeBatch b{encoder.forward(xs), {0, 1}, encoder.forward(xq), {0, 1}, 2, 1, 1};
      return cross_entropy(maml_episode(b, MamlConfig{0.5, steps, true}).query_logits, b.query_labels);
    };
    EXPECT_LE(finite_diff_check(f, {encoder.weight, encoder.bias}).max_relative_error, 1e-4) << steps;
  }
}

TEST_F(FewShot, MamlFirstOrderMatchesFirstOrderObjective) {
  Rng rng(11);
  Linear encoder = Linear::init(4, 8, rng);
  encoder.weight.set_requires_grad(true);
  encoder.bias.set_requires_grad(true);
  const Tensor xs = oracle::to_tensor(oracle::random_mat(2, 4, rng));
  const Tensor xq = oracle::to_tensor(oracle::random_mat(2, 4, rng));
  const MamlConfig config{0.5, 1, false};

  // Gradients produced by the first-order episode.
  EpisodeBatch b{encoder.forward(xs), {0, 1}, encoder.forward(xq), {0, 1}, 2, 1, 1};
  const MamlResult r = maml_episode(b, config);
  const std::array<Tensor, 2> params{encoder.weight, encoder.bias};
  const auto analytic = grad(cross_entropy(r.query_logits, b.query_labels), params);

  // First-order objective: the adapted head is a constant.
  const MamlHead head{r.adapted.weight.detach(), r.adapted.bias.detach()};
  auto f = [&] { return cross_entropy(head.logits(encoder.forward(xq)), b.query_labels); };
  const auto report = finite_diff_check(f, {encoder.weight, encoder.bias});
  EXPECT_LE(report.max_relative_error, 1e-4);
  encoder.weight.zero_grad();
  encoder.bias.zero_grad();
  f().backward();
  EXPECT_LT(oracle::max_abs_diff(analytic[0].to_vector(), encoder.weight.grad().to_vector()), 1e-12);
  EXPECT_LT(oracle::max_abs_diff(analytic[1].to_vector(), encoder.bias.grad().to_vector()), 1e-12);
}

TEST(MetaLearnerTokens, RoundTrip) {
  EXPECT_EQ(parse_meta_learner("protonet"), MetaLearner::ProtoNet);
  EXPECT_EQ(parse_meta_learner("maml"), MetaLearner::Maml);
  EXPECT_THROW(parse_meta_learner("relationnet"), ConfigError);
}
