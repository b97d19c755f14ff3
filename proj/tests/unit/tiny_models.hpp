// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>

#include "s2s/arch.hpp"
#include "s2s/data.hpp"

namespace s2s::test {

inline arch::StackConfig tiny_stack(arch::Family family, std::size_t dim = 16) {
  arch::StackConfig s;
  s.family = family;
  s.layers = 2;
  s.model_dim = dim;
  s.hidden_dim = 2 * dim;
  s.heads = 2;
  if (family == arch::Family::convs2s) s.conv_layers = {{dim, 3}, {dim + 8, 3}};
  return s;
}

inline arch::ModelConfig tiny_config(arch::Family encoder, arch::Family decoder, std::size_t vocab = 12) {
  arch::ModelConfig c;
  c.encoder = tiny_stack(encoder);
  c.decoder = tiny_stack(decoder);
  c.stacked = tiny_stack(arch::Family::transformer);
  c.vocab_size = vocab;
  c.residual_start_layer = 2;
  c.max_positions = 32;
  c.label_smoothing = 0.1;
  return c;
}

inline arch::TensorMap tensor_map(const arch::Model& model) {
  arch::TensorMap map;
  for (const auto& p : model.params().all()) map[p.name] = {p.tensor.data().begin(), p.tensor.data().end()};
  return map;
}

// Pretrained encoder sources for the two composite families.
struct TinyPretrained {
  arch::TensorMap rnmt, transformer;
  arch::Pretrained view() const { return {&rnmt, &transformer}; }
};

inline TinyPretrained tiny_pretrained(const arch::ModelConfig& composite, std::uint64_t seed = 77) {
  TinyPretrained out;
  Rng rng(seed);
  arch::ModelConfig r = composite;
  r.encoder.family = arch::Family::rnmt_plus;
  r.decoder = r.encoder;
  out.rnmt = tensor_map(*arch::build_model(r, rng));
  arch::ModelConfig t = composite;
  t.encoder = composite.stacked;
  t.decoder = composite.stacked;
  out.transformer = tensor_map(*arch::build_model(t, rng));
  return out;
}

inline std::unique_ptr<arch::Model> tiny_model(const arch::ModelConfig& c, std::uint64_t seed = 1) {
  Rng rng(seed);
  if (c.encoder.family == arch::Family::cascaded || c.encoder.family == arch::Family::multi_column) {
    const TinyPretrained pre = tiny_pretrained(c);
    return arch::build_model(c, rng, pre.view());
  }
  return arch::build_model(c, rng);
}

inline std::vector<arch::ModelConfig> every_family() {
  using arch::Family;
  return {tiny_config(Family::rnmt_plus, Family::rnmt_plus),   tiny_config(Family::transformer, Family::transformer),
          tiny_config(Family::convs2s, Family::convs2s),       tiny_config(Family::transformer, Family::rnmt_plus),
          tiny_config(Family::rnmt_plus, Family::transformer), tiny_config(Family::cascaded, Family::rnmt_plus),
          tiny_config(Family::multi_column, Family::rnmt_plus)};
}

}  // namespace s2s::test
