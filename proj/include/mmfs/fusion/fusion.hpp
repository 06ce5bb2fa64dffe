#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "mmfs/core/rng.hpp"
#include "mmfs/tensor/linear.hpp"
#include "mmfs/tensor/optim.hpp"
#include "mmfs/tensor/tensor.hpp"

namespace mmfs {

enum class FusionMethod { Mean, FC, Attention, AttentionResidual };

/// Config tokens: "mean", "fc", "attention", "attention_residual".
FusionMethod parse_fusion_method(std::string_view token);
std::string_view to_string(FusionMethod method);

inline constexpr double kFusionDropout = 0.1;

/// (x + y) / 2, rowwise over B×d inputs.
Tensor fuse_mean(const Tensor& x, const Tensor& y);

/// FC(2d) - ReLU - Dropout - FC(d) over concat(x, y).
struct FcFusionParams {
  Linear hidden;  // 2d → 2d
  Linear output;  // 2d → d
  double dropout = kFusionDropout;

  static FcFusionParams init(std::size_t d, Rng& rng);
  void register_parameters(ParameterList& params, const std::string& prefix) const;
};

Tensor fuse_fc(const Tensor& x, const Tensor& y, const FcFusionParams& params, bool train, Rng* rng);

struct AttentionOutput {
  Tensor attended;  // m×d
  Tensor weights;   // m×n, rows sum to 1
};

/// softmax(q Kᵀ / sqrt(d)) V for m×d queries against n×d keys/values.
AttentionOutput attention_kernel(const Tensor& queries, const Tensor& keys, const Tensor& values);

/// Cross-modal attention fusion. The pooled image embedding is lifted to an
/// n×d sequence by a learned linear map (a 1×1 convolution over a 1×1
/// spatial map with d input and n·d output channels), attends over the n
/// sentence embeddings, and is reduced back to 1×d with weights from a
/// scoring MLP, softmax-normalized over the n positions.
struct AttentionFusionParams {
  std::size_t sentences = 0;
  std::size_t dim = 0;
  Linear to_sequence;   // d → n·d
  Linear query;         // d → d
  Linear key;           // d → d
  Linear value;         // d → d
  Linear score_hidden;  // d → d
  Linear score_output;  // d → 1
  double dropout = kFusionDropout;

  static AttentionFusionParams init(std::size_t d, std::size_t n, Rng& rng);
  void register_parameters(ParameterList& params, const std::string& prefix) const;
};

struct AttentionFusionResult {
  Tensor fused;              // B×d
  Tensor sequence_weights;   // B×n reduction weights
  Tensor attention_weights;  // B×n×n (row i: image position i over sentences)
};

/// `image` is B×d pooled; `text_stack` is B×n×d.
AttentionFusionResult fuse_attention_detailed(const Tensor& image, const Tensor& text_stack,
                                              const AttentionFusionParams& params, bool train, Rng* rng);
Tensor fuse_attention(const Tensor& image, const Tensor& text_stack, const AttentionFusionParams& params,
                      bool train, Rng* rng);
/// (fuse_attention(...) + image) / 2.
Tensor fuse_attention_residual(const Tensor& image, const Tensor& text_stack, const AttentionFusionParams& params,
                               bool train, Rng* rng);

/// Inputs handed to a fusion module. `image_features` (the encoder's map
/// before flattening) is carried for variants that consume it; the current
/// methods use the pooled forms.
struct FusionInputs {
  Tensor image;           // B×d
  Tensor text_pooled;     // B×d
  Tensor text_stack;      // B×n×d
  Tensor image_features;  // optional
};

/// Owns the parameters of one fusion method.
class Fusion {
 public:
  Fusion(FusionMethod method, std::size_t d, std::size_t sentences, Rng& rng);

  Tensor fuse(const FusionInputs& inputs, bool train, Rng* rng) const;

  FusionMethod method() const { return method_; }
  const std::optional<FcFusionParams>& fc() const { return fc_; }
  const std::optional<AttentionFusionParams>& attention() const { return attention_; }

  void register_parameters(ParameterList& params, const std::string& prefix) const;
  std::size_t parameter_count() const;

 private:
  FusionMethod method_;
  std::optional<FcFusionParams> fc_;
  std::optional<AttentionFusionParams> attention_;
};

}  // namespace mmfs
