#include "mmfs/encoders/conv4.hpp"

#include <cmath>
#include <vector>

#include "mmfs/core/error.hpp"
#include "mmfs/tensor/ops.hpp"

namespace mmfs {

void Conv4Config::validate() const {
  if (in_channels == 0 || hidden_channels == 0 || embed_dim == 0) {
    throw ConfigError("conv4: channel counts and embedding size must be positive");
  }
  if (height == 0 || width == 0 || height % 16 != 0 || width % 16 != 0) {
    throw ConfigError("conv4: image resolution " + std::to_string(height) + "x" + std::to_string(width) +
                      " must be divisible by 16 (four 2x2 poolings)");
  }
  if (!(norm_eps > 0.0)) throw ConfigError("conv4: norm_eps must be positive");
}

Conv4Encoder::Conv4Encoder(Conv4Config config, Rng& rng) : config_(config) {
  config_.validate();
  std::size_t in = config_.in_channels;
  for (auto& block : blocks_) {
    const std::size_t out = config_.hidden_channels;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * 9));
    std::vector<double> kernel(out * in * 9);
    for (double& v : kernel) v = rng.uniform(-bound, bound);
    block.kernel = Tensor({out, in, 3, 3}, std::move(kernel));
    block.scale = Tensor::ones({out});
    block.shift = Tensor::zeros({out});
    in = out;
  }
  const std::size_t flat = config_.hidden_channels * (config_.height / 16) * (config_.width / 16);
  head_ = Linear::init(flat, config_.embed_dim, rng);
}

Conv4Encoder::Output Conv4Encoder::encode(const Tensor& images) const {
  if (images.rank() != 4 || images.size(1) != config_.in_channels || images.size(2) != config_.height ||
      images.size(3) != config_.width) {
    throw DimensionError("conv4_encode", "expected B×" + std::to_string(config_.in_channels) + "×" +
                                             std::to_string(config_.height) + "×" + std::to_string(config_.width) +
                                             " images, got " + shape_to_string(images.shape()));
  }
  Tensor x = images;
  for (const auto& block : blocks_) {
    x = conv2d(x, block.kernel, 1, 1);
    x = layer_norm(x, 1, config_.norm_eps);
    x = channel_affine(x, block.scale, block.shift);
    x = relu(x);
    x = maxpool2d(x, 2);
  }
  const std::size_t batch = images.size(0);
  Tensor flat = reshape(x, {batch, x.numel() / batch});
  return Output{head_.forward(flat), x};
}

void Conv4Encoder::register_parameters(ParameterList& params, const std::string& prefix) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string name = prefix + ".block" + std::to_string(i);
    params.add(name + ".kernel", blocks_[i].kernel);
    params.add(name + ".scale", blocks_[i].scale);
    params.add(name + ".shift", blocks_[i].shift);
  }
  head_.register_parameters(params, prefix + ".fc");
}

std::size_t Conv4Encoder::parameter_count() const {
  std::size_t total = head_.weight.numel() + head_.bias.numel();
  for (const auto& b : blocks_) total += b.kernel.numel() + b.scale.numel() + b.shift.numel();
  return total;
}

}  // namespace mmfs
