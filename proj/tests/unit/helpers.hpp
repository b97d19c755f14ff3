// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <doctest.h>

#include "s2s/errors.hpp"
#include "s2s/tensor.hpp"

namespace s2s::test {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = u(rng);
  return Tensor::from_data(std::move(shape), std::move(v), grad);
}

inline std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <class Fn>
ErrorKind error_kind(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an s2s::Error");
  return ErrorKind::IoError;
}

inline std::string source_path(const std::string& rel) { return std::string(S2S_SOURCE_DIR) + "/" + rel; }

}  // namespace s2s::test
