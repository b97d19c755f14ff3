// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "s2s/errors.hpp"
#include "s2s/nn.hpp"

namespace s2s::nn {

Tensor glu(const Tensor& x) {
  const std::size_t width = x.shape().back();
  if (width % 2 != 0) fail(ErrorKind::ShapeMismatch, "glu needs an even channel count, got " + std::to_string(width));
  const std::size_t half = width / 2;
  return ops::mul(ops::slice_last(x, 0, half), ops::sigmoid(ops::slice_last(x, half, half)));
}

Tensor conv1d_glu(const Tensor& x, const Tensor& kernel, const Tensor& bias, bool causal) {
  if (kernel.rank() != 3 || kernel.dim(2) % 2 != 0)
    fail(ErrorKind::ShapeMismatch, "conv kernel must be [width, in, 2*out], got " + shape_str(kernel.shape()));
  const std::size_t width = kernel.dim(0);
  if (!causal && width % 2 == 0) fail(ErrorKind::ShapeMismatch, "non-causal convolution needs an odd width");
  const std::size_t left = causal ? width - 1 : (width - 1) / 2;
  const std::size_t right = causal ? 0 : (width - 1) / 2;
  Tensor y = ops::conv1d(x, kernel, left, right);
  if (bias.defined()) y = ops::add_bias(y, bias);
  return glu(y);
}

ConvGlu::ConvGlu(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, std::size_t width,
                 bool causal, Rng& rng)
    : out_(out), causal_(causal) {
  if (width == 0 || (!causal && width % 2 == 0))
    fail(ErrorKind::ConfigInvalid, name + ": non-causal convolution needs an odd width");
  const double limit = std::sqrt(3.0 / static_cast<double>(width * in));
  direction_ = store.uniform(name + ".direction", {width, in, 2 * out}, limit, rng);
  double norm = 0.0;
  for (double v : direction_.data()) norm += v * v;
  scale_ = store.constant(name + ".scale", {1}, std::sqrt(norm));
  bias_ = store.constant(name + ".bias", {2 * out}, 0.0);
}

Tensor ConvGlu::operator()(const Tensor& x) const { return conv1d_glu(x, effective_kernel(), bias_, causal_); }

WeightNormLinear::WeightNormLinear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                                   Rng& rng) {
  direction_ = store.uniform(name + ".direction", {in, out}, glorot_limit(in, out), rng);
  double norm = 0.0;
  for (double v : direction_.data()) norm += v * v;
  scale_ = store.constant(name + ".scale", {1}, std::sqrt(norm));
  bias_ = store.constant(name + ".bias", {out}, 0.0);
}

}  // namespace s2s::nn
