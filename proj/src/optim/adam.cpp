// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "s2s/errors.hpp"
#include "s2s/optim.hpp"

namespace s2s::optim {

void Adam::step(ParamStore& store, std::span<const std::vector<double>> grads, double lr) {
  const auto& params = store.all();
  if (grads.size() != params.size())
    fail(ErrorKind::ShapeMismatch, std::to_string(grads.size()) + " gradient buffers for " +
                                       std::to_string(params.size()) + " parameters");
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2, lambda = config_.weight_decay;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = params[i];
    if (p.frozen) continue;
    Tensor w = p.tensor;
    const std::size_t n = w.numel();
    const auto& g = grads[i];
    if (!g.empty() && g.size() != n)
      fail(ErrorKind::ShapeMismatch, "gradient for '" + p.name + "' has " + std::to_string(g.size()) + " entries");
    Moments& mo = moments_[p.name];
    if (mo.m.empty()) {
      mo.m.assign(n, 0.0);
      mo.v.assign(n, 0.0);
    }
    auto data = w.data_mut();
    for (std::size_t j = 0; j < n; ++j) {
      const double gj = (g.empty() ? 0.0 : g[j]) + lambda * data[j];
      mo.m[j] = b1 * mo.m[j] + (1.0 - b1) * gj;
      mo.v[j] = b2 * mo.v[j] + (1.0 - b2) * gj * gj;
      data[j] -= lr * (mo.m[j] / c1) / (std::sqrt(mo.v[j] / c2) + config_.epsilon);
    }
  }
}

void Adam::restore(std::size_t t, std::map<std::string, Moments> moments) {
  t_ = t;
  moments_ = std::move(moments);
}

}  // namespace s2s::optim
