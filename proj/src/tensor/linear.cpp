#include "mmfs/tensor/linear.hpp"

#include <cmath>
#include <vector>

#include "mmfs/tensor/ops.hpp"

namespace mmfs {

Linear Linear::init(std::size_t in_features, std::size_t out_features, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
  std::vector<double> w(in_features * out_features);
  for (double& v : w) v = rng.uniform(-bound, bound);
  return Linear{Tensor({in_features, out_features}, std::move(w)), Tensor::zeros({out_features})};
}

Tensor Linear::forward(const Tensor& x) const { return add_bias(matmul(x, weight), bias); }

void Linear::register_parameters(ParameterList& params, const std::string& prefix) const {
  params.add(prefix + ".weight", weight);
  params.add(prefix + ".bias", bias);
}

}  // namespace mmfs
