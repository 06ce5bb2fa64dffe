#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mmfs/core/rng.hpp"
#include "mmfs/tensor/tensor.hpp"

namespace mmfs {

// Every operation checks shapes up front and throws DimensionError naming
// itself on mismatch. Operations whose backward is marked differentiable can
// be traversed again after a create_graph gradient (second-order MAML);
// the others (convolution, pooling, normalization layers, distances) support
// first-order gradients only.

// Linear algebra and elementwise arithmetic.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor neg(const Tensor& a);
/// Multiplies every entry of `a` by the single value held in `s`.
Tensor mul_scalar(const Tensor& a, const Tensor& s);
/// `x` is M×n, `bias` is n (or 1×n); the bias is added to every row.
Tensor add_bias(const Tensor& x, const Tensor& bias);

// Shape manipulation.
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);
/// Places `a` at [start, start+len) of a zero tensor whose `axis` has `full_length`.
Tensor pad_slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t full_length);

// Reductions. `sum`/`mean` drop the reduced axis; `expand` inserts one.
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a, std::size_t axis);
Tensor expand(const Tensor& a, std::size_t axis, std::size_t length);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

// Activations and regularization.
Tensor relu(const Tensor& a);
/// Inverted dropout: survivors are scaled by 1/(1-p) in train mode; the
/// input handle itself is returned in eval mode or when p == 0.
Tensor dropout(const Tensor& a, double p, bool train, Rng* rng);

// Normalization.
/// x / max(||x||, eps) over slices along `axis`.
Tensor l2_normalize(const Tensor& a, std::size_t axis, double eps = 1e-12);
/// Zero-mean, unit-variance over all dims from `axis` to the end.
Tensor layer_norm(const Tensor& a, std::size_t axis, double eps = 1e-5);
/// Per-channel scale and shift along axis 1: y = gamma[c] * x + beta[c].
Tensor channel_affine(const Tensor& x, const Tensor& gamma, const Tensor& beta);

// Spatial kernels, NCHW layout.
/// Cross-correlation of B×Cin×H×W with Cout×Cin×kh×kw.
Tensor conv2d(const Tensor& input, const Tensor& weight, std::size_t stride = 1, std::size_t pad = 0);
/// Non-overlapping max pooling; ties resolve to the first maximum.
Tensor maxpool2d(const Tensor& input, std::size_t window);

// Probability.
Tensor softmax(const Tensor& a, std::size_t axis);
Tensor log_softmax(const Tensor& a, std::size_t axis);
/// Mean over rows of -log softmax(logits)[label].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

/// D[i][j] = ||q_i - c_j||^2 for M×d queries and N×d centers.
Tensor pairwise_sq_dist(const Tensor& queries, const Tensor& centers);

/// Constant tensor with one-hot rows.
Tensor one_hot(std::span<const int> labels, std::size_t classes);

}  // namespace mmfs
