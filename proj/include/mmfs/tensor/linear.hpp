#pragma once

#include <cstddef>
#include <string>

#include "mmfs/core/rng.hpp"
#include "mmfs/tensor/optim.hpp"
#include "mmfs/tensor/tensor.hpp"

namespace mmfs {

/// y = x · W + b with W stored in×out.
struct Linear {
  Tensor weight;
  Tensor bias;

  /// Weights ~ U(-1/sqrt(in), 1/sqrt(in)), zero bias.
  static Linear init(std::size_t in_features, std::size_t out_features, Rng& rng);

  std::size_t in_features() const { return weight.size(0); }
  std::size_t out_features() const { return weight.size(1); }

  Tensor forward(const Tensor& x) const;
  void register_parameters(ParameterList& params, const std::string& prefix) const;
};

}  // namespace mmfs
