// SPDX-License-Identifier: Apache-2.0
#include "s2s/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "s2s/errors.hpp"

namespace s2s {

double grad_check(const std::function<Tensor()>& loss, std::vector<Tensor> leaves, double step) {
  if (!(step > 0.0)) fail(ErrorKind::ConfigInvalid, "grad_check step must be positive");
  std::vector<bool> saved_flags;
  for (auto& leaf : leaves) {
    saved_flags.push_back(leaf.requires_grad());
    leaf.set_requires_grad(true);
    leaf.zero_grad();
  }

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    const Tensor value = loss();
    tape.backward(value);
  }
  for (auto& leaf : leaves) {
    if (leaf.has_grad())
      analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());
    else
      analytic.emplace_back(leaf.numel(), 0.0);
    leaf.zero_grad();
  }

  double worst = 0.0;
  {
    NoGradGuard no_grad;
    for (std::size_t l = 0; l < leaves.size(); ++l) {
      auto data = leaves[l].data_mut();
      for (std::size_t i = 0; i < data.size(); ++i) {
        const double original = data[i];
        data[i] = original + step;
        const double up = loss().item();
        data[i] = original - step;
        const double down = loss().item();
        data[i] = original;
        const double numeric = (up - down) / (2.0 * step);
        if (!std::isfinite(numeric)) fail(ErrorKind::NonFiniteValue, "grad_check numeric derivative");
        const double a = analytic[l][i];
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
        worst = std::max(worst, std::abs(a - numeric) / denom);
      }
    }
  }
  for (std::size_t l = 0; l < leaves.size(); ++l) leaves[l].set_requires_grad(saved_flags[l]);
  return worst;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point, double step) {
  Tensor leaf = point.clone();
  return grad_check([&] { return f(leaf); }, {leaf}, step);
}

}  // namespace s2s
