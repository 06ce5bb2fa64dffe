#include <gtest/gtest.h>

#include <array>
#include <cmath>

#include "mmfs/core/error.hpp"
#include "mmfs/core/rng.hpp"
#include "mmfs/tensor/autograd.hpp"
#include "mmfs/tensor/linear.hpp"
#include "mmfs/tensor/ops.hpp"
#include "oracles.hpp"

using namespace mmfs;

namespace {

class Autograd : public ::testing::Test {
 protected:
  PrecisionScope precision_{Precision::Float64};
};

Tensor random_leaf(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = scale * rng.normal();
  return Tensor(std::move(shape), std::move(v), true);
}

}  // namespace

TEST_F(Autograd, ProductRule) {
  Tensor x = Tensor::scalar(3.0, true);
  Tensor y = Tensor::scalar(5.0, true);
  mul(x, y).backward();
  EXPECT_EQ(x.grad().item(), 5.0);
  EXPECT_EQ(y.grad().item(), 3.0);
}

TEST_F(Autograd, GradientsAccumulateAcrossUses) {
  Tensor x = Tensor::scalar(1.5, true);
  add(x, x).backward();
  EXPECT_EQ(x.grad().item(), 2.0);
}

TEST_F(Autograd, CrossEntropyGradientIsSoftmaxMinusOneHot) {
  Tensor logits = Tensor::matrix({{0.3, -1.2, 2.0}}, true);
  const std::vector<int> label{1};
  cross_entropy(logits, label).backward();
  const auto p = oracle::softmax({0.3, -1.2, 2.0});
  EXPECT_NEAR(logits.grad().at(0), p[0], 1e-12);
  EXPECT_NEAR(logits.grad().at(1), p[1] - 1.0, 1e-12);
  EXPECT_NEAR(logits.grad().at(2), p[2], 1e-12);
}

TEST_F(Autograd, NonScalarRootRejected) {
  Tensor x = Tensor::vector({1, 2}, true);
  EXPECT_THROW(backward(scale(x, 2.0)), Error);
}

TEST_F(Autograd, SecondBackwardWithoutRetainRejected) {
  Tensor x = Tensor::scalar(2.0, true);
  const Tensor y = mul(x, x);
  y.backward();
  EXPECT_THROW(y.backward(), Error);
}

TEST_F(Autograd, RetainedGraphCanBeReplayed) {
  Tensor x = Tensor::scalar(2.0, true);
  const Tensor y = mul(x, x);
  y.backward(true);
  y.backward(true);
  EXPECT_EQ(x.grad().item(), 8.0);
}

TEST_F(Autograd, SecondDerivativeThroughCreateGraph) {
  Tensor x = Tensor::scalar(1.5, true);
  const Tensor y = mul(mul(x, x), x);  // x^3
  const std::array<Tensor, 1> inputs{x};
  const Tensor dy = grad(y, inputs, true)[0];  // 3x^2
  EXPECT_NEAR(dy.item(), 3 * 1.5 * 1.5, 1e-12);
  const Tensor d2y = grad(dy, inputs)[0];  // 6x
  EXPECT_NEAR(d2y.item(), 9.0, 1e-12);
}

TEST_F(Autograd, FiniteDiffOnSquare) {
  Tensor theta = Tensor::scalar(3.0, true);
  const auto report = finite_diff_check([&] { return mul(theta, theta); }, {theta}, 1e-5);
  EXPECT_LT(report.max_relative_error, 1e-8);
}

TEST_F(Autograd, TwoLayerMlpMatchesFiniteDifferences) {
  Rng rng(4);
  Linear l1 = Linear::init(6, 6, rng);
  Linear l2 = Linear::init(6, 6, rng);
  for (Tensor* t : {&l1.weight, &l1.bias, &l2.weight, &l2.bias}) t->set_requires_grad(true);
  const Tensor x = oracle::to_tensor(oracle::random_mat(3, 6, rng));
  const std::vector<int> labels{0, 3, 5};
  auto f = [&] { return cross_entropy(l2.forward(relu(l1.forward(x))), labels); };
  const auto report = finite_diff_check(f, {l1.weight, l1.bias, l2.weight, l2.bias});
  EXPECT_LE(report.max_relative_error, 1e-4);
  EXPECT_EQ(report.entries_checked, 6u * 6 + 6 + 6 * 6 + 6);
}

TEST_F(Autograd, KernelCompositesMatchFiniteDifferences) {
  Rng rng(21);
  Tensor image = random_leaf({2, 2, 4, 4}, rng);
  Tensor kernel = random_leaf({3, 2, 3, 3}, rng, 0.5);
  Tensor gamma = random_leaf({3}, rng);
  Tensor beta = random_leaf({3}, rng);
  Tensor w = random_leaf({12, 5}, rng, 0.3);
  Tensor centers = random_leaf({4, 5}, rng);
  const std::vector<int> labels{1, 3};
  auto f = [&] {
    Tensor h = conv2d(image, kernel, 1, 1);
    h = layer_norm(h, 1);
    h = channel_affine(h, gamma, beta);
    h = relu(h);
    h = maxpool2d(h, 2);  // 2×3×2×2
    Tensor flat = reshape(h, {2, 12});
    Tensor e = l2_normalize(matmul(flat, w), 1);
    Tensor logits = neg(pairwise_sq_dist(e, centers));
    Tensor s = softmax(logits, 1);
    return add(cross_entropy(logits, labels), mean_all(mul(s, s)));
  };
  const auto report = finite_diff_check(f, {image, kernel, gamma, beta, w, centers});
  EXPECT_LE(report.max_relative_error, 1e-4) << "worst parameter " << report.worst_parameter;
}

TEST_F(Autograd, ShapeOpsMatchFiniteDifferences) {
  Rng rng(22);
  Tensor a = random_leaf({3, 4}, rng);
  Tensor b = random_leaf({3, 4}, rng);
  Tensor bias = random_leaf({4}, rng);
  Tensor s = random_leaf({1}, rng);
  auto f = [&] {
    Tensor c = concat({a, b}, 0);                        // 6×4
    Tensor t = transpose(slice(c, 0, 1, 4));             // 4×4
    Tensor e = expand(mean(add_bias(a, bias), 0), 0, 3); // 3×4
    Tensor m = mul_scalar(sub(e, b), s);
    Tensor p = pad_slice(m, 0, 1, 5);                    // 5×4
    Tensor r = sum(reshape(p, {5, 2, 2}), 2);            // 5×2
    return add(sum_all(mul(t, t)), sum_all(log_softmax(r, 1)));
  };
  const auto report = finite_diff_check(f, {a, b, bias, s});
  EXPECT_LE(report.max_relative_error, 1e-4) << "worst parameter " << report.worst_parameter;
}

TEST_F(Autograd, GradientsAreDeterministic) {
  auto run = [] {
    Rng rng(5);
    Tensor x = random_leaf({4, 4}, rng);
    Tensor k = random_leaf({2, 1, 3, 3}, rng);
    Tensor y = relu(conv2d(reshape(x, {1, 1, 4, 4}), k, 1, 1));
    sum_all(mul(y, y)).backward();
    return std::make_pair(x.grad().to_vector(), k.grad().to_vector());
  };
  EXPECT_EQ(run(), run());
}

TEST_F(Autograd, GradLeavesBuffersUntouched) {
  Tensor x = Tensor::vector({1, 2}, true);
  const std::array<Tensor, 1> inputs{x};
  const auto g = grad(sum_all(mul(x, x)), inputs);
  EXPECT_EQ(g[0].to_vector(), (std::vector<double>{2, 4}));
  EXPECT_FALSE(x.grad().defined());
}
