#pragma once

#include <array>
#include <cstddef>
#include <string>

#include "mmfs/core/rng.hpp"
#include "mmfs/tensor/linear.hpp"
#include "mmfs/tensor/optim.hpp"
#include "mmfs/tensor/tensor.hpp"

namespace mmfs {

struct Conv4Config {
  std::size_t in_channels = 3;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t hidden_channels = 64;
  std::size_t embed_dim = 128;
  double norm_eps = 1e-5;

  /// Throws ConfigError unless H and W are positive multiples of 16.
  void validate() const;
};

// Conv(3×3, pad 1) → LayerNorm + per-channel scale/shift → ReLU → MaxPool(2).
struct ConvBlock {
  Tensor kernel;  // out×in×3×3
  Tensor scale;   // out
  Tensor shift;   // out
};

/// Four conv blocks followed by a fully-connected map to `embed_dim`.
class Conv4Encoder {
 public:
  Conv4Encoder(Conv4Config config, Rng& rng);

  struct Output {
    Tensor embedding;    // B×d
    Tensor feature_map;  // B×C×H/16×W/16, before flattening
  };

  Output encode(const Tensor& images) const;

  const Conv4Config& config() const { return config_; }
  const std::array<ConvBlock, 4>& blocks() const { return blocks_; }
  const Linear& head() const { return head_; }

  void register_parameters(ParameterList& params, const std::string& prefix) const;
  std::size_t parameter_count() const;

 private:
  Conv4Config config_;
  std::array<ConvBlock, 4> blocks_;
  Linear head_;
};

}  // namespace mmfs
