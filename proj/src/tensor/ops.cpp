#include "mmfs/tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mmfs/core/error.hpp"

namespace mmfs {

using detail::make_result;
using detail::record;

namespace {

struct AxisLayout {
  std::size_t outer = 1;
  std::size_t length = 1;
  std::size_t inner = 1;
};

AxisLayout axis_layout(const Shape& shape, std::size_t axis) {
  AxisLayout layout;
  for (std::size_t i = 0; i < axis; ++i) layout.outer *= shape[i];
  layout.length = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) layout.inner *= shape[i];
  return layout;
}

void require_axis(const char* op, const Tensor& a, std::size_t axis) {
  if (axis >= a.rank()) {
    throw DimensionError(op, "axis " + std::to_string(axis) + " out of range for shape " +
                                 shape_to_string(a.shape()));
  }
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(op, "shapes " + shape_to_string(a.shape()) + " and " +
                                 shape_to_string(b.shape()) + " differ");
  }
}

void require_rank(const char* op, const Tensor& a, std::size_t rank) {
  if (a.rank() != rank) {
    throw DimensionError(op, "expected rank " + std::to_string(rank) + ", got shape " +
                                 shape_to_string(a.shape()));
  }
}

// C(m×n) += A(m×k) · B(k×n)
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* c_row = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double a_ip = a[i * k + p];
      const double* b_row = b + p * n;
      for (std::size_t j = 0; j < n; ++j) c_row[j] += a_ip * b_row[j];
    }
  }
}

// C(m×n) += A(m×k) · B(n×k)^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* a_row = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* b_row = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a_row[p] * b_row[p];
      c[i * n + j] += acc;
    }
  }
}

// C(m×n) += A(k×m)^T · B(k×n)
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* a_row = a + p * m;
    const double* b_row = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double a_pi = a_row[i];
      double* c_row = c + i * n;
      for (std::size_t j = 0; j < n; ++j) c_row[j] += a_pi * b_row[j];
    }
  }
}

template <typename F>
Tensor elementwise(const Tensor& a, F&& f) {
  const auto in = a.values();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return make_result(a.shape(), std::move(out));
}

struct ConvGeometry {
  std::size_t batch, in_channels, height, width;
  std::size_t out_channels, kernel_h, kernel_w;
  std::size_t stride, pad, out_h, out_w;

  std::size_t patch() const { return in_channels * kernel_h * kernel_w; }
  std::size_t out_pixels() const { return out_h * out_w; }
};

void im2col(const double* image, const ConvGeometry& g, double* cols) {
  const std::size_t pixels = g.out_pixels();
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        double* row = cols + ((c * g.kernel_h + ky) * g.kernel_w + kx) * pixels;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(g.height) &&
                                ix < static_cast<long>(g.width);
            row[oy * g.out_w + ox] =
                inside ? image[(c * g.height + static_cast<std::size_t>(iy)) * g.width + static_cast<std::size_t>(ix)]
                       : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* cols, const ConvGeometry& g, double* image) {
  const std::size_t pixels = g.out_pixels();
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        const double* row = cols + ((c * g.kernel_h + ky) * g.kernel_w + kx) * pixels;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix < 0 || ix >= static_cast<long>(g.width)) continue;
            image[(c * g.height + static_cast<std::size_t>(iy)) * g.width + static_cast<std::size_t>(ix)] +=
                row[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Linear algebra and arithmetic
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw DimensionError("matmul", "expected matrices, got " + shape_to_string(a.shape()) + " and " +
                                       shape_to_string(b.shape()));
  }
  const std::size_t m = a.size(0), k = a.size(1), n = b.size(1);
  if (b.size(0) != k) {
    throw DimensionError("matmul", "inner dimensions " + std::to_string(k) + " and " +
                                       std::to_string(b.size(0)) + " differ");
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.values().data(), b.values().data(), out.data(), m, k, n);
  Tensor result = make_result({m, n}, std::move(out));
  record(result, "matmul", {a, b},
         [a, b](const Tensor& g) -> std::vector<Tensor> {
           return {a.requires_grad() ? matmul(g, transpose(b)) : Tensor(),
                   b.requires_grad() ? matmul(transpose(a), g) : Tensor()};
         },
         true);
  return result;
}

Tensor transpose(const Tensor& a) {
  require_rank("transpose", a, 2);
  const std::size_t rows = a.size(0), cols = a.size(1);
  const auto in = a.values();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = in[i * cols + j];
  Tensor result = make_result({cols, rows}, std::move(out));
  record(result, "transpose", {a}, [](const Tensor& g) -> std::vector<Tensor> { return {transpose(g)}; }, true);
  return result;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  const auto x = a.values(), y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  Tensor result = make_result(a.shape(), std::move(out));
  record(result, "add", {a, b}, [](const Tensor& g) -> std::vector<Tensor> { return {g, g}; }, true);
  return result;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  const auto x = a.values(), y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  Tensor result = make_result(a.shape(), std::move(out));
  record(result, "sub", {a, b},
         [b](const Tensor& g) -> std::vector<Tensor> { return {g, b.requires_grad() ? neg(g) : Tensor()}; },
         true);
  return result;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  const auto x = a.values(), y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  Tensor result = make_result(a.shape(), std::move(out));
  record(result, "mul", {a, b},
         [a, b](const Tensor& g) -> std::vector<Tensor> {
           return {a.requires_grad() ? mul(g, b) : Tensor(), b.requires_grad() ? mul(g, a) : Tensor()};
         },
         true);
  return result;
}

Tensor scale(const Tensor& a, double factor) {
  Tensor result = elementwise(a, [factor](double v) { return v * factor; });
  record(result, "scale", {a}, [factor](const Tensor& g) -> std::vector<Tensor> { return {scale(g, factor)}; },
         true);
  return result;
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) throw DimensionError("mul_scalar", "factor has shape " + shape_to_string(s.shape()));
  const double factor = s.item();
  Tensor result = elementwise(a, [factor](double v) { return v * factor; });
  record(result, "mul_scalar", {a, s},
         [a, s](const Tensor& g) -> std::vector<Tensor> {
           return {a.requires_grad() ? mul_scalar(g, s) : Tensor(),
                   s.requires_grad() ? reshape(sum_all(mul(g, a)), s.shape()) : Tensor()};
         },
         true);
  return result;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank("add_bias", x, 2);
  const std::size_t rows = x.size(0), cols = x.size(1);
  if (bias.numel() != cols || bias.rank() > 2 || (bias.rank() == 2 && bias.size(0) != 1)) {
    throw DimensionError("add_bias", "bias shape " + shape_to_string(bias.shape()) + " does not match " +
                                         std::to_string(cols) + " columns");
  }
  const auto in = x.values(), b = bias.values();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = in[i * cols + j] + b[j];
  Tensor result = make_result(x.shape(), std::move(out));
  record(result, "add_bias", {x, bias},
         [bias](const Tensor& g) -> std::vector<Tensor> {
           return {g, bias.requires_grad() ? reshape(sum(g, 0), bias.shape()) : Tensor()};
         },
         true);
  return result;
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape", "cannot view " + shape_to_string(a.shape()) + " as " + shape_to_string(shape));
  }
  Tensor result = make_result(shape, a.to_vector());
  const Shape original = a.shape();
  record(result, "reshape", {a}, [original](const Tensor& g) -> std::vector<Tensor> { return {reshape(g, original)}; },
         true);
  return result;
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat", "no inputs");
  const Tensor& first = parts.front();
  require_axis("concat", first, axis);
  Shape out_shape = first.shape();
  out_shape[axis] = 0;
  for (const Tensor& part : parts) {
    if (part.rank() != first.rank()) throw DimensionError("concat", "rank mismatch");
    for (std::size_t d = 0; d < first.rank(); ++d) {
      if (d != axis && part.size(d) != first.size(d)) {
        throw DimensionError("concat", "shapes " + shape_to_string(first.shape()) + " and " +
                                           shape_to_string(part.shape()) + " differ off axis " +
                                           std::to_string(axis));
      }
    }
    out_shape[axis] += part.size(axis);
  }
  const AxisLayout out_layout = axis_layout(out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::size_t offset = 0;
  std::vector<std::size_t> starts;
  for (const Tensor& part : parts) {
    starts.push_back(offset);
    const AxisLayout l = axis_layout(part.shape(), axis);
    const auto in = part.values();
    const std::size_t block = l.length * l.inner;
    for (std::size_t o = 0; o < l.outer; ++o) {
      std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(o * block), block,
                  out.begin() + static_cast<std::ptrdiff_t>(o * out_layout.length * out_layout.inner +
                                                            offset * out_layout.inner));
    }
    offset += l.length;
  }
  Tensor result = make_result(out_shape, std::move(out));
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  std::vector<std::size_t> lengths;
  for (const Tensor& part : parts) lengths.push_back(part.size(axis));
  record(result, "concat", inputs,
         [axis, starts, lengths](const Tensor& g) -> std::vector<Tensor> {
           std::vector<Tensor> grads;
           grads.reserve(starts.size());
           for (std::size_t i = 0; i < starts.size(); ++i) grads.push_back(slice(g, axis, starts[i], lengths[i]));
           return grads;
         },
         true);
  return result;
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  require_axis("slice", a, axis);
  if (length == 0 || start + length > a.size(axis)) {
    throw DimensionError("slice", "range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                                      ") invalid for axis of length " + std::to_string(a.size(axis)));
  }
  const AxisLayout l = axis_layout(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape[axis] = length;
  const auto in = a.values();
  std::vector<double> out(l.outer * length * l.inner);
  for (std::size_t o = 0; o < l.outer; ++o) {
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>((o * l.length + start) * l.inner), length * l.inner,
                out.begin() + static_cast<std::ptrdiff_t>(o * length * l.inner));
  }
  Tensor result = make_result(out_shape, std::move(out));
  const std::size_t full = a.size(axis);
  record(result, "slice", {a},
         [axis, start, full](const Tensor& g) -> std::vector<Tensor> { return {pad_slice(g, axis, start, full)}; },
         true);
  return result;
}

Tensor pad_slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t full_length) {
  require_axis("pad_slice", a, axis);
  const std::size_t length = a.size(axis);
  if (start + length > full_length) throw DimensionError("pad_slice", "slice exceeds target length");
  const AxisLayout l = axis_layout(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape[axis] = full_length;
  const auto in = a.values();
  std::vector<double> out(l.outer * full_length * l.inner, 0.0);
  for (std::size_t o = 0; o < l.outer; ++o) {
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(o * length * l.inner), length * l.inner,
                out.begin() + static_cast<std::ptrdiff_t>((o * full_length + start) * l.inner));
  }
  Tensor result = make_result(out_shape, std::move(out));
  record(result, "pad_slice", {a},
         [axis, start, length](const Tensor& g) -> std::vector<Tensor> { return {slice(g, axis, start, length)}; },
         true);
  return result;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& a, std::size_t axis) {
  require_axis("sum", a, axis);
  const AxisLayout l = axis_layout(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  const auto in = a.values();
  std::vector<double> out(l.outer * l.inner, 0.0);
  for (std::size_t o = 0; o < l.outer; ++o)
    for (std::size_t k = 0; k < l.length; ++k)
      for (std::size_t i = 0; i < l.inner; ++i) out[o * l.inner + i] += in[(o * l.length + k) * l.inner + i];
  Tensor result = make_result(out_shape, std::move(out));
  const std::size_t length = l.length;
  record(result, "sum", {a},
         [axis, length](const Tensor& g) -> std::vector<Tensor> { return {expand(g, axis, length)}; }, true);
  return result;
}

Tensor mean(const Tensor& a, std::size_t axis) {
  require_axis("mean", a, axis);
  return scale(sum(a, axis), 1.0 / static_cast<double>(a.size(axis)));
}

Tensor expand(const Tensor& a, std::size_t axis, std::size_t length) {
  if (axis > a.rank()) throw DimensionError("expand", "axis " + std::to_string(axis) + " out of range");
  if (length == 0) throw DimensionError("expand", "zero length");
  Shape out_shape = a.shape();
  out_shape.insert(out_shape.begin() + static_cast<std::ptrdiff_t>(axis), length);
  const AxisLayout l = axis_layout(out_shape, axis);
  const auto in = a.values();
  std::vector<double> out(shape_numel(out_shape));
  for (std::size_t o = 0; o < l.outer; ++o)
    for (std::size_t k = 0; k < l.length; ++k)
      for (std::size_t i = 0; i < l.inner; ++i) out[(o * l.length + k) * l.inner + i] = in[o * l.inner + i];
  Tensor result = make_result(out_shape, std::move(out));
  record(result, "expand", {a}, [axis](const Tensor& g) -> std::vector<Tensor> { return {sum(g, axis)}; }, true);
  return result;
}

Tensor sum_all(const Tensor& a) { return sum(reshape(a, {a.numel()}), 0); }

Tensor mean_all(const Tensor& a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.numel())); }

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

Tensor relu(const Tensor& a) {
  Tensor result = elementwise(a, [](double v) { return v > 0.0 ? v : 0.0; });
  record(result, "relu", {a},
         [a](const Tensor& g) -> std::vector<Tensor> {
           Tensor mask = elementwise(a, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
           return {mul(g, mask)};
         },
         true);
  return result;
}

Tensor dropout(const Tensor& a, double p, bool train, Rng* rng) {
  if (!(p >= 0.0 && p < 1.0)) throw Error("dropout: p must lie in [0, 1), got " + std::to_string(p));
  if (!train || p == 0.0) return a;
  if (rng == nullptr) throw Error("dropout: train mode needs a random stream");
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(a.numel());
  for (double& m : mask) m = rng->uniform() >= p ? keep_scale : 0.0;
  return mul(a, make_result(a.shape(), std::move(mask)));
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

Tensor l2_normalize(const Tensor& a, std::size_t axis, double eps) {
  require_axis("l2_normalize", a, axis);
  if (!(eps > 0.0)) throw Error("l2_normalize: eps must be positive");
  const AxisLayout l = axis_layout(a.shape(), axis);
  const auto in = a.values();
  std::vector<double> out(in.size());
  std::vector<double> norms(l.outer * l.inner);
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      double sq = 0.0;
      for (std::size_t k = 0; k < l.length; ++k) {
        const double v = in[(o * l.length + k) * l.inner + i];
        sq += v * v;
      }
      const double norm = std::sqrt(sq);
      norms[o * l.inner + i] = norm;
      const double denom = std::max(norm, eps);
      for (std::size_t k = 0; k < l.length; ++k) {
        const std::size_t idx = (o * l.length + k) * l.inner + i;
        out[idx] = in[idx] / denom;
      }
    }
  }
  Tensor result = make_result(a.shape(), out);
  record(result, "l2_normalize", {a},
         [l, eps, y = std::move(out), norms = std::move(norms), shape = a.shape()](const Tensor& g) -> std::vector<Tensor> {
           const auto gv = g.values();
           std::vector<double> dx(gv.size());
           for (std::size_t o = 0; o < l.outer; ++o) {
             for (std::size_t i = 0; i < l.inner; ++i) {
               const double norm = norms[o * l.inner + i];
               if (norm > eps) {
                 double dot = 0.0;
                 for (std::size_t k = 0; k < l.length; ++k) {
                   const std::size_t idx = (o * l.length + k) * l.inner + i;
                   dot += y[idx] * gv[idx];
                 }
                 for (std::size_t k = 0; k < l.length; ++k) {
                   const std::size_t idx = (o * l.length + k) * l.inner + i;
                   dx[idx] = (gv[idx] - y[idx] * dot) / norm;
                 }
               } else {
                 for (std::size_t k = 0; k < l.length; ++k) {
                   const std::size_t idx = (o * l.length + k) * l.inner + i;
                   dx[idx] = gv[idx] / eps;
                 }
               }
             }
           }
           return {make_result(shape, std::move(dx))};
         },
         false);
  return result;
}

Tensor layer_norm(const Tensor& a, std::size_t axis, double eps) {
  require_axis("layer_norm", a, axis);
  if (!(eps > 0.0)) throw Error("layer_norm: eps must be positive");
  std::size_t groups = 1;
  for (std::size_t d = 0; d < axis; ++d) groups *= a.size(d);
  const std::size_t width = a.numel() / groups;
  const auto in = a.values();
  std::vector<double> xhat(in.size());
  std::vector<double> inv_std(groups);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const double* x = in.data() + gi * width;
    double mu = 0.0;
    for (std::size_t j = 0; j < width; ++j) mu += x[j];
    mu /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t j = 0; j < width; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(width);
    const double s = 1.0 / std::sqrt(var + eps);
    inv_std[gi] = s;
    for (std::size_t j = 0; j < width; ++j) xhat[gi * width + j] = (x[j] - mu) * s;
  }
  Tensor result = make_result(a.shape(), xhat);
  record(result, "layer_norm", {a},
         [groups, width, xhat = std::move(xhat), inv_std = std::move(inv_std), shape = a.shape()](
             const Tensor& g) -> std::vector<Tensor> {
           const auto gv = g.values();
           std::vector<double> dx(gv.size());
           const double inv_width = 1.0 / static_cast<double>(width);
           for (std::size_t gi = 0; gi < groups; ++gi) {
             const std::size_t base = gi * width;
             double g_mean = 0.0, gx_mean = 0.0;
             for (std::size_t j = 0; j < width; ++j) {
               g_mean += gv[base + j];
               gx_mean += gv[base + j] * xhat[base + j];
             }
             g_mean *= inv_width;
             gx_mean *= inv_width;
             for (std::size_t j = 0; j < width; ++j) {
               dx[base + j] = inv_std[gi] * (gv[base + j] - g_mean - xhat[base + j] * gx_mean);
             }
           }
           return {make_result(shape, std::move(dx))};
         },
         false);
  return result;
}

Tensor channel_affine(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
  if (x.rank() < 2) throw DimensionError("channel_affine", "input needs a channel axis, got " + shape_to_string(x.shape()));
  const std::size_t channels = x.size(1);
  if (gamma.shape() != Shape{channels} || beta.shape() != Shape{channels}) {
    throw DimensionError("channel_affine", "scale/shift must have shape [" + std::to_string(channels) + "]");
  }
  const AxisLayout l = axis_layout(x.shape(), 1);
  const auto in = x.values(), gm = gamma.values(), bt = beta.values();
  std::vector<double> out(in.size());
  for (std::size_t o = 0; o < l.outer; ++o)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t i = 0; i < l.inner; ++i) {
        const std::size_t idx = (o * channels + c) * l.inner + i;
        out[idx] = gm[c] * in[idx] + bt[c];
      }
  Tensor result = make_result(x.shape(), std::move(out));
  record(result, "channel_affine", {x, gamma, beta},
         [x, gamma, l](const Tensor& g) -> std::vector<Tensor> {
           const std::size_t channels = l.length;
           const auto gv = g.values(), xv = x.values(), gm = gamma.values();
           std::vector<double> dx(gv.size()), dgamma(channels, 0.0), dbeta(channels, 0.0);
           for (std::size_t o = 0; o < l.outer; ++o)
             for (std::size_t c = 0; c < channels; ++c)
               for (std::size_t i = 0; i < l.inner; ++i) {
                 const std::size_t idx = (o * channels + c) * l.inner + i;
                 dx[idx] = gv[idx] * gm[c];
                 dgamma[c] += gv[idx] * xv[idx];
                 dbeta[c] += gv[idx];
               }
           return {make_result(x.shape(), std::move(dx)), make_result({channels}, std::move(dgamma)),
                   make_result({channels}, std::move(dbeta))};
         },
         false);
  return result;
}

// ---------------------------------------------------------------------------
// Spatial kernels
// ---------------------------------------------------------------------------

Tensor conv2d(const Tensor& input, const Tensor& weight, std::size_t stride, std::size_t pad) {
  require_rank("conv2d", input, 4);
  require_rank("conv2d", weight, 4);
  if (stride == 0) throw DimensionError("conv2d", "stride must be positive");
  ConvGeometry g{};
  g.batch = input.size(0);
  g.in_channels = input.size(1);
  g.height = input.size(2);
  g.width = input.size(3);
  g.out_channels = weight.size(0);
  g.kernel_h = weight.size(2);
  g.kernel_w = weight.size(3);
  g.stride = stride;
  g.pad = pad;
  if (weight.size(1) != g.in_channels) {
    throw DimensionError("conv2d", "kernel expects " + std::to_string(weight.size(1)) + " input channels, got " +
                                       std::to_string(g.in_channels));
  }
  if (g.height + 2 * pad < g.kernel_h || g.width + 2 * pad < g.kernel_w) {
    throw DimensionError("conv2d", "kernel larger than padded input");
  }
  g.out_h = (g.height + 2 * pad - g.kernel_h) / stride + 1;
  g.out_w = (g.width + 2 * pad - g.kernel_w) / stride + 1;

  const std::size_t in_size = g.in_channels * g.height * g.width;
  const std::size_t out_size = g.out_channels * g.out_pixels();
  std::vector<double> cols(g.patch() * g.out_pixels());
  std::vector<double> out(g.batch * out_size, 0.0);
  const double* x = input.values().data();
  const double* w = weight.values().data();
  for (std::size_t b = 0; b < g.batch; ++b) {
    im2col(x + b * in_size, g, cols.data());
    gemm_nn(w, cols.data(), out.data() + b * out_size, g.out_channels, g.patch(), g.out_pixels());
  }
  Tensor result = make_result({g.batch, g.out_channels, g.out_h, g.out_w}, std::move(out));
  record(result, "conv2d", {input, weight},
         [input, weight, g, in_size, out_size](const Tensor& grad) -> std::vector<Tensor> {
           const bool need_input = input.requires_grad();
           const bool need_weight = weight.requires_grad();
           std::vector<double> cols(g.patch() * g.out_pixels());
           std::vector<double> dcols(need_input ? cols.size() : 0);
           std::vector<double> dx(need_input ? g.batch * in_size : 0, 0.0);
           std::vector<double> dw(need_weight ? weight.numel() : 0, 0.0);
           const double* x = input.values().data();
           const double* w = weight.values().data();
           const double* gv = grad.values().data();
           for (std::size_t b = 0; b < g.batch; ++b) {
             const double* g_b = gv + b * out_size;
             if (need_weight) {
               im2col(x + b * in_size, g, cols.data());
               gemm_nt(g_b, cols.data(), dw.data(), g.out_channels, g.out_pixels(), g.patch());
             }
             if (need_input) {
               std::fill(dcols.begin(), dcols.end(), 0.0);
               gemm_tn(w, g_b, dcols.data(), g.patch(), g.out_channels, g.out_pixels());
               col2im(dcols.data(), g, dx.data() + b * in_size);
             }
           }
           return {need_input ? make_result(input.shape(), std::move(dx)) : Tensor(),
                   need_weight ? make_result(weight.shape(), std::move(dw)) : Tensor()};
         },
         false);
  return result;
}

Tensor maxpool2d(const Tensor& input, std::size_t window) {
  require_rank("maxpool2d", input, 4);
  if (window == 0) throw DimensionError("maxpool2d", "window must be positive");
  const std::size_t batch = input.size(0), channels = input.size(1), h = input.size(2), w = input.size(3);
  if (h < window || w < window) {
    throw DimensionError("maxpool2d", "window " + std::to_string(window) + " exceeds spatial size " +
                                          shape_to_string(input.shape()));
  }
  const std::size_t oh = h / window, ow = w / window;
  const auto in = input.values();
  std::vector<double> out(batch * channels * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t bc = 0; bc < batch * channels; ++bc) {
    const std::size_t plane = bc * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = plane + (oy * window) * w + ox * window;
        for (std::size_t ky = 0; ky < window; ++ky)
          for (std::size_t kx = 0; kx < window; ++kx) {
            const std::size_t idx = plane + (oy * window + ky) * w + ox * window + kx;
            if (in[idx] > in[best]) best = idx;
          }
        const std::size_t o = (bc * oh + oy) * ow + ox;
        out[o] = in[best];
        argmax[o] = best;
      }
  }
  Tensor result = make_result({batch, channels, oh, ow}, std::move(out));
  record(result, "maxpool2d", {input},
         [argmax = std::move(argmax), shape = input.shape()](const Tensor& g) -> std::vector<Tensor> {
           const auto gv = g.values();
           std::vector<double> dx(shape_numel(shape), 0.0);
           for (std::size_t o = 0; o < gv.size(); ++o) dx[argmax[o]] += gv[o];
           return {make_result(shape, std::move(dx))};
         },
         false);
  return result;
}

// ---------------------------------------------------------------------------
// Probability
// ---------------------------------------------------------------------------

Tensor softmax(const Tensor& a, std::size_t axis) {
  require_axis("softmax", a, axis);
  const AxisLayout l = axis_layout(a.shape(), axis);
  const auto in = a.values();
  std::vector<double> out(in.size());
  for (std::size_t o = 0; o < l.outer; ++o)
    for (std::size_t i = 0; i < l.inner; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < l.length; ++k) mx = std::max(mx, in[(o * l.length + k) * l.inner + i]);
      double total = 0.0;
      for (std::size_t k = 0; k < l.length; ++k) {
        const std::size_t idx = (o * l.length + k) * l.inner + i;
        out[idx] = std::exp(in[idx] - mx);
        total += out[idx];
      }
      for (std::size_t k = 0; k < l.length; ++k) out[(o * l.length + k) * l.inner + i] /= total;
    }
  Tensor result = make_result(a.shape(), std::move(out));
  const std::size_t length = l.length;
  record(result, "softmax", {a},
         [a, axis, length](const Tensor& g) -> std::vector<Tensor> {
           Tensor y = softmax(a, axis);
           Tensor dot = expand(sum(mul(g, y), axis), axis, length);
           return {mul(y, sub(g, dot))};
         },
         true);
  return result;
}

Tensor log_softmax(const Tensor& a, std::size_t axis) {
  require_axis("log_softmax", a, axis);
  const AxisLayout l = axis_layout(a.shape(), axis);
  const auto in = a.values();
  std::vector<double> out(in.size());
  for (std::size_t o = 0; o < l.outer; ++o)
    for (std::size_t i = 0; i < l.inner; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < l.length; ++k) mx = std::max(mx, in[(o * l.length + k) * l.inner + i]);
      double total = 0.0;
      for (std::size_t k = 0; k < l.length; ++k) total += std::exp(in[(o * l.length + k) * l.inner + i] - mx);
      const double lse = mx + std::log(total);
      for (std::size_t k = 0; k < l.length; ++k) {
        const std::size_t idx = (o * l.length + k) * l.inner + i;
        out[idx] = in[idx] - lse;
      }
    }
  Tensor result = make_result(a.shape(), std::move(out));
  const std::size_t length = l.length;
  record(result, "log_softmax", {a},
         [a, axis, length](const Tensor& g) -> std::vector<Tensor> {
           Tensor total = expand(sum(g, axis), axis, length);
           return {sub(g, mul(softmax(a, axis), total))};
         },
         true);
  return result;
}

Tensor one_hot(std::span<const int> labels, std::size_t classes) {
  std::vector<double> values(labels.size() * classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw Error("one_hot: label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(classes) + ")");
    }
    values[i * classes + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return make_result({labels.size(), classes}, std::move(values));
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank("cross_entropy", logits, 2);
  const std::size_t rows = logits.size(0), classes = logits.size(1);
  if (labels.size() != rows) {
    throw DimensionError("cross_entropy", std::to_string(rows) + " rows but " + std::to_string(labels.size()) +
                                              " labels");
  }
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw Error("cross_entropy: label " + std::to_string(label) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
  const auto z = logits.values();
  double total = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = z.data() + i * classes;
    const double mx = *std::max_element(row, row + classes);
    double s = 0.0;
    for (std::size_t j = 0; j < classes; ++j) s += std::exp(row[j] - mx);
    total += mx + std::log(s) - row[labels[i]];
  }
  Tensor result = make_result({}, {total / static_cast<double>(rows)});
  std::vector<int> saved(labels.begin(), labels.end());
  record(result, "cross_entropy", {logits},
         [logits, saved = std::move(saved), classes, rows](const Tensor& g) -> std::vector<Tensor> {
           Tensor diff = sub(softmax(logits, 1), one_hot(saved, classes));
           return {mul_scalar(scale(diff, 1.0 / static_cast<double>(rows)), g)};
         },
         true);
  return result;
}

Tensor pairwise_sq_dist(const Tensor& queries, const Tensor& centers) {
  require_rank("pairwise_sq_dist", queries, 2);
  require_rank("pairwise_sq_dist", centers, 2);
  const std::size_t m = queries.size(0), n = centers.size(0), d = queries.size(1);
  if (centers.size(1) != d) {
    throw DimensionError("pairwise_sq_dist", "feature widths " + std::to_string(d) + " and " +
                                                 std::to_string(centers.size(1)) + " differ");
  }
  const auto q = queries.values(), c = centers.values();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = q[i * d + k] - c[j * d + k];
        acc += diff * diff;
      }
      out[i * n + j] = acc;
    }
  Tensor result = make_result({m, n}, std::move(out));
  record(result, "pairwise_sq_dist", {queries, centers},
         [queries, centers, m, n, d](const Tensor& g) -> std::vector<Tensor> {
           const auto q = queries.values(), c = centers.values(), gv = g.values();
           std::vector<double> dq(m * d, 0.0), dc(n * d, 0.0);
           for (std::size_t i = 0; i < m; ++i)
             for (std::size_t j = 0; j < n; ++j) {
               const double gij = 2.0 * gv[i * n + j];
               for (std::size_t k = 0; k < d; ++k) {
                 const double diff = gij * (q[i * d + k] - c[j * d + k]);
                 dq[i * d + k] += diff;
                 dc[j * d + k] -= diff;
               }
             }
           return {queries.requires_grad() ? make_result({m, d}, std::move(dq)) : Tensor(),
                   centers.requires_grad() ? make_result({n, d}, std::move(dc)) : Tensor()};
         },
         false);
  return result;
}

}  // namespace mmfs
