// SPDX-License-Identifier: Apache-2.0
#include "s2s/params.hpp"

#include <algorithm>

#include "s2s/errors.hpp"

namespace s2s {

Tensor ParamStore::add(const std::string& name, Tensor value) {
  if (contains(name)) fail(ErrorKind::ConfigInvalid, "duplicate parameter name " + name);
  value.set_requires_grad(true);
  params_.push_back(Parameter{name, value, false});
  return value;
}

Tensor ParamStore::uniform(const std::string& name, Shape shape, double limit, Rng& rng) {
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    v = (2.0 * u - 1.0) * limit;
  }
  return add(name, Tensor::from_data(std::move(shape), std::move(values)));
}

Tensor ParamStore::constant(const std::string& name, Shape shape, double value) {
  return add(name, Tensor::full(std::move(shape), value));
}

bool ParamStore::contains(const std::string& name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; });
}

Tensor ParamStore::get(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p.tensor;
  fail(ErrorKind::UnknownSelector, "no parameter named " + name);
}

std::size_t ParamStore::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

std::size_t ParamStore::trainable_element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (!p.frozen) n += p.tensor.numel();
  return n;
}

std::size_t ParamStore::set_frozen(const std::string& selector, bool frozen) {
  std::size_t matched = 0;
  for (auto& p : params_) {
    if (selector != "*" && p.name.rfind(selector, 0) != 0) continue;
    p.frozen = frozen;
    p.tensor.set_requires_grad(!frozen);
    if (frozen) p.tensor.zero_grad();
    ++matched;
  }
  if (matched == 0) fail(ErrorKind::UnknownSelector, "selector '" + selector + "' matches no parameter");
  return matched;
}

std::size_t ParamStore::freeze(const std::string& selector) { return set_frozen(selector, true); }
std::size_t ParamStore::unfreeze(const std::string& selector) { return set_frozen(selector, false); }

void ParamStore::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

}  // namespace s2s
