// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "s2s/tensor.hpp"

namespace s2s {

struct Parameter {
  std::string name;
  Tensor tensor;
  bool frozen = false;
};

// Named trainable tensors in creation order. Names are canonical: the same
// config always produces the same names in the same order, which is what
// checkpoints key on.
class ParamStore {
 public:
  Tensor add(const std::string& name, Tensor value);
  Tensor uniform(const std::string& name, Shape shape, double limit, Rng& rng);
  Tensor constant(const std::string& name, Shape shape, double value);

  bool contains(const std::string& name) const;
  Tensor get(const std::string& name) const;
  const std::vector<Parameter>& all() const noexcept { return params_; }

  std::size_t element_count() const;
  std::size_t trainable_element_count() const;

  // Selector "*" matches everything; anything else is a name prefix.
  // Frozen parameters stop requiring gradients. Throws UnknownSelector when
  // nothing matches.
  std::size_t freeze(const std::string& selector);
  std::size_t unfreeze(const std::string& selector);

  void zero_grad();

 private:
  std::size_t set_frozen(const std::string& selector, bool frozen);
  std::vector<Parameter> params_;
};

}  // namespace s2s
