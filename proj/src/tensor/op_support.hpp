// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "s2s/errors.hpp"
#include "s2s/tensor.hpp"

namespace s2s::detail {

inline void require(bool ok, const char* op, const std::string& what) {
  if (!ok) fail(ErrorKind::ShapeMismatch, std::string(op) + ": " + what);
}

inline void check_finite(const std::vector<double>& data, const char* op) {
  for (double v : data)
    if (!std::isfinite(v)) fail(ErrorKind::NonFiniteValue, std::string(op) + " produced a non-finite value");
}

// Gradient buffer of an op input, or an empty span when it needs none.
inline std::span<double> grad_of(const Tensor& t) {
  if (!t.defined() || !t.requires_grad()) return {};
  return const_cast<Tensor&>(t).grad_mut();
}

inline std::span<const double> out_grad(const Tape::Entry& e) { return e.output.grad(); }

// Wraps an op result: finiteness check, then a tape entry when needed.
inline Tensor finish(const char* op, Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                     Tape::BackwardFn backward) {
  check_finite(data, op);
  Tensor out = Tensor::from_data(std::move(shape), std::move(data));
  if (!grad_mode_enabled()) return out;
  bool needs = false;
  for (const auto& t : inputs) needs = needs || (t.defined() && t.requires_grad());
  if (!needs) return out;
  out.set_requires_grad(true);
  current_tape().record(std::move(inputs), out, std::move(backward));
  return out;
}

inline std::size_t last_dim(const Tensor& t) { return t.shape().back(); }
inline std::size_t leading(const Tensor& t) { return t.numel() / t.shape().back(); }

}  // namespace s2s::detail
