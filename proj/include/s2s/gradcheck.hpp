// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "s2s/tensor.hpp"

namespace s2s {

// Compares reverse-mode gradients against central differences.
// Returns max over coordinates of
//   |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
// `loss` must build a fresh scalar from the current contents of `leaves`;
// the leaves are perturbed in place and restored before returning.
double grad_check(const std::function<Tensor()>& loss, std::vector<Tensor> leaves, double step);

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point, double step);

}  // namespace s2s
