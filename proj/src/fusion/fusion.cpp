#include "mmfs/fusion/fusion.hpp"

#include <cmath>
#include <vector>

#include "mmfs/core/error.hpp"
#include "mmfs/tensor/ops.hpp"

namespace mmfs {

namespace {

void require_same_width(const char* op, const Tensor& x, const Tensor& y) {
  if (x.rank() != 2 || y.rank() != 2 || x.shape() != y.shape()) {
    throw DimensionError(op, "expected two B×d inputs of equal shape, got " + shape_to_string(x.shape()) + " and " +
                                 shape_to_string(y.shape()));
  }
}

}  // namespace

FusionMethod parse_fusion_method(std::string_view token) {
  if (token == "mean") return FusionMethod::Mean;
  if (token == "fc") return FusionMethod::FC;
  if (token == "attention") return FusionMethod::Attention;
  if (token == "attention_residual") return FusionMethod::AttentionResidual;
  throw ConfigError("unknown fusion method '" + std::string(token) +
                    "' (expected mean, fc, attention or attention_residual)");
}

std::string_view to_string(FusionMethod method) {
  switch (method) {
    case FusionMethod::Mean: return "mean";
    case FusionMethod::FC: return "fc";
    case FusionMethod::Attention: return "attention";
    case FusionMethod::AttentionResidual: return "attention_residual";
  }
  return "mean";
}

Tensor fuse_mean(const Tensor& x, const Tensor& y) {
  require_same_width("fuse_mean", x, y);
  return scale(add(x, y), 0.5);
}

FcFusionParams FcFusionParams::init(std::size_t d, Rng& rng) {
  FcFusionParams p;
  p.hidden = Linear::init(2 * d, 2 * d, rng);
  p.output = Linear::init(2 * d, d, rng);
  return p;
}

void FcFusionParams::register_parameters(ParameterList& params, const std::string& prefix) const {
  hidden.register_parameters(params, prefix + ".hidden");
  output.register_parameters(params, prefix + ".output");
}

Tensor fuse_fc(const Tensor& x, const Tensor& y, const FcFusionParams& params, bool train, Rng* rng) {
  require_same_width("fuse_fc", x, y);
  if (params.hidden.in_features() != 2 * x.size(1)) {
    throw DimensionError("fuse_fc", "parameters built for width " + std::to_string(params.hidden.in_features() / 2) +
                                        ", inputs have width " + std::to_string(x.size(1)));
  }
  Tensor h = relu(params.hidden.forward(concat({x, y}, 1)));
  h = dropout(h, params.dropout, train, rng);
  return params.output.forward(h);
}

AttentionOutput attention_kernel(const Tensor& queries, const Tensor& keys, const Tensor& values) {
  if (queries.rank() != 2 || keys.rank() != 2 || values.rank() != 2) {
    throw DimensionError("attention", "expected matrices for q, K, V");
  }
  if (keys.size(0) == 0) throw DimensionError("attention", "no keys");
  if (queries.size(1) != keys.size(1)) {
    throw DimensionError("attention", "query width " + std::to_string(queries.size(1)) + " != key width " +
                                          std::to_string(keys.size(1)));
  }
  if (values.size(0) != keys.size(0)) {
    throw DimensionError("attention", std::to_string(keys.size(0)) + " keys but " + std::to_string(values.size(0)) +
                                          " values");
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(keys.size(1)));
  Tensor weights = softmax(scale(matmul(queries, transpose(keys)), inv_sqrt_d), 1);
  Tensor attended = matmul(weights, values);
  return AttentionOutput{std::move(attended), std::move(weights)};
}

AttentionFusionParams AttentionFusionParams::init(std::size_t d, std::size_t n, Rng& rng) {
  AttentionFusionParams p;
  p.sentences = n;
  p.dim = d;
  p.to_sequence = Linear::init(d, n * d, rng);
  p.query = Linear::init(d, d, rng);
  p.key = Linear::init(d, d, rng);
  p.value = Linear::init(d, d, rng);
  p.score_hidden = Linear::init(d, d, rng);
  p.score_output = Linear::init(d, 1, rng);
  return p;
}

void AttentionFusionParams::register_parameters(ParameterList& params, const std::string& prefix) const {
  to_sequence.register_parameters(params, prefix + ".to_sequence");
  query.register_parameters(params, prefix + ".query");
  key.register_parameters(params, prefix + ".key");
  value.register_parameters(params, prefix + ".value");
  score_hidden.register_parameters(params, prefix + ".score_hidden");
  score_output.register_parameters(params, prefix + ".score_output");
}

AttentionFusionResult fuse_attention_detailed(const Tensor& image, const Tensor& text_stack,
                                              const AttentionFusionParams& params, bool train, Rng* rng) {
  const std::size_t n = params.sentences;
  const std::size_t d = params.dim;
  if (image.rank() != 2 || image.size(1) != d) {
    throw DimensionError("fuse_attention", "image features must be B×" + std::to_string(d) + ", got " +
                                               shape_to_string(image.shape()));
  }
  const std::size_t batch = image.size(0);
  if (text_stack.rank() != 3 || text_stack.size(0) != batch || text_stack.size(2) != d) {
    throw DimensionError("fuse_attention", "text stack must be " + std::to_string(batch) + "×n×" + std::to_string(d) +
                                               ", got " + shape_to_string(text_stack.shape()));
  }
  if (text_stack.size(1) != n) {
    throw DimensionError("fuse_attention", "configured for " + std::to_string(n) + " sentences, got " +
                                               std::to_string(text_stack.size(1)));
  }

  const Tensor image_rows = reshape(params.to_sequence.forward(image), {batch * n, d});
  const Tensor text_rows = reshape(text_stack, {batch * n, d});
  const Tensor queries = params.query.forward(image_rows);
  const Tensor keys = params.key.forward(text_rows);
  const Tensor values = params.value.forward(text_rows);

  std::vector<Tensor> attended;
  std::vector<Tensor> attention_weights;
  attended.reserve(batch);
  attention_weights.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    AttentionOutput out = attention_kernel(slice(queries, 0, b * n, n), slice(keys, 0, b * n, n),
                                           slice(values, 0, b * n, n));
    attended.push_back(std::move(out.attended));
    attention_weights.push_back(reshape(out.weights, {1, n, n}));
  }
  const Tensor z = concat(attended, 0);  // (B·n)×d

  Tensor hidden = relu(params.score_hidden.forward(z));
  hidden = dropout(hidden, params.dropout, train, rng);
  const Tensor scores = reshape(params.score_output.forward(hidden), {batch, n});
  Tensor weights = softmax(scores, 1);

  Tensor fused = sum(mul(reshape(z, {batch, n, d}), expand(weights, 2, d)), 1);
  return AttentionFusionResult{std::move(fused), std::move(weights), concat(attention_weights, 0)};
}

Tensor fuse_attention(const Tensor& image, const Tensor& text_stack, const AttentionFusionParams& params, bool train,
                      Rng* rng) {
  return fuse_attention_detailed(image, text_stack, params, train, rng).fused;
}

Tensor fuse_attention_residual(const Tensor& image, const Tensor& text_stack, const AttentionFusionParams& params,
                               bool train, Rng* rng) {
  return scale(add(fuse_attention(image, text_stack, params, train, rng), image), 0.5);
}

Fusion::Fusion(FusionMethod method, std::size_t d, std::size_t sentences, Rng& rng) : method_(method) {
  switch (method_) {
    case FusionMethod::Mean: break;
    case FusionMethod::FC: fc_ = FcFusionParams::init(d, rng); break;
    case FusionMethod::Attention:
    case FusionMethod::AttentionResidual: attention_ = AttentionFusionParams::init(d, sentences, rng); break;
  }
}

Tensor Fusion::fuse(const FusionInputs& inputs, bool train, Rng* rng) const {
  switch (method_) {
    case FusionMethod::Mean: return fuse_mean(inputs.image, inputs.text_pooled);
    case FusionMethod::FC: return fuse_fc(inputs.image, inputs.text_pooled, *fc_, train, rng);
    case FusionMethod::Attention: return fuse_attention(inputs.image, inputs.text_stack, *attention_, train, rng);
    case FusionMethod::AttentionResidual:
      return fuse_attention_residual(inputs.image, inputs.text_stack, *attention_, train, rng);
  }
  throw Error("fusion: unhandled method");
}

void Fusion::register_parameters(ParameterList& params, const std::string& prefix) const {
  if (fc_) fc_->register_parameters(params, prefix + ".fc");
  if (attention_) attention_->register_parameters(params, prefix + ".attention");
}

std::size_t Fusion::parameter_count() const {
  ParameterList list;
  register_parameters(list, "fusion");
  return list.parameter_count();
}

}  // namespace mmfs
