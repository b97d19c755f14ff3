// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "s2s/errors.hpp"
#include "s2s/nn.hpp"

namespace s2s::nn {

Tensor dropout(const Tensor& x, double p, const ForwardContext& ctx) {
  if (!ctx.training || p == 0.0) {
    if (!(p >= 0.0 && p < 1.0)) fail(ErrorKind::InvalidProbability, "dropout probability " + std::to_string(p));
    return x;
  }
  if (ctx.rng == nullptr) fail(ErrorKind::ConfigInvalid, "training-mode dropout needs an RNG");
  return ops::dropout(x, p, *ctx.rng, true);
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, std::size_t dim, bool enabled, double eps)
    : eps_(eps), enabled_(enabled) {
  if (!enabled) return;
  gain_ = store.constant(name + ".gain", {dim}, 1.0);
  bias_ = store.constant(name + ".bias", {dim}, 0.0);
}

Tensor LayerNorm::operator()(const Tensor& x) const {
  if (!enabled_) return x;
  return ops::layer_norm(x, gain_, bias_, eps_);
}

Linear::Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, bool bias,
               double init_limit, Rng& rng) {
  weight_ = store.uniform(name + ".weight", {in, out}, init_limit, rng);
  if (bias) bias_ = store.constant(name + ".bias", {out}, 0.0);
}

Tensor transformer_sublayer(const Tensor& x, const std::function<Tensor(const Tensor&)>& transform,
                            const LayerNorm& norm, double dropout_p, const ForwardContext& ctx) {
  const Tensor y = transform(norm(x));
  if (y.shape() != x.shape())
    fail(ErrorKind::ShapeMismatch, "sublayer transform changed shape " + shape_str(x.shape()) + " -> " +
                                       shape_str(y.shape()));
  return ops::add(x, dropout(y, dropout_p, ctx));
}

FeedForward::FeedForward(ParamStore& store, const std::string& name, std::size_t dim, std::size_t hidden,
                         double init_limit, Rng& rng)
    : inner_(store, name + ".inner", dim, hidden, true, init_limit, rng),
      outer_(store, name + ".outer", hidden, dim, true, init_limit, rng) {}

Tensor FeedForward::operator()(const Tensor& x, double relu_dropout, const ForwardContext& ctx) const {
  return outer_(dropout(ops::relu(inner_(x)), relu_dropout, ctx));
}

Tensor feed_forward(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2) {
  return ops::linear(ops::relu(ops::linear(x, w1, b1)), w2, b2);
}

Tensor sinusoidal_positions(std::size_t length, std::size_t dim) {
  std::vector<double> table(length * dim);
  for (std::size_t pos = 0; pos < length; ++pos)
    for (std::size_t j = 0; j < dim; ++j) {
      const double pair = static_cast<double>(j - j % 2);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, pair / static_cast<double>(dim));
      table[pos * dim + j] = j % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  return Tensor::from_data({length, dim}, std::move(table));
}

LearnedPositions::LearnedPositions(ParamStore& store, const std::string& name, std::size_t max_positions,
                                   std::size_t dim, double init_limit, Rng& rng)
    : table_(store.uniform(name + ".table", {max_positions, dim}, init_limit, rng)) {}

Tensor LearnedPositions::operator()(std::size_t length) const { return learned_positions(length, table_); }

Tensor learned_positions(std::size_t length, const Tensor& table) {
  if (length > table.dim(0))
    fail(ErrorKind::PositionOutOfRange,
         "position " + std::to_string(length - 1) + " beyond table of " + std::to_string(table.dim(0)));
  std::vector<int> ids(length);
  for (std::size_t i = 0; i < length; ++i) ids[i] = static_cast<int>(i);
  return ops::embedding(table, ids, {length});
}

Tensor add_positions(const Tensor& x, const Tensor& positions) {
  if (x.rank() != 3 || positions.rank() != 2 || positions.dim(0) != x.dim(1) || positions.dim(1) != x.dim(2))
    fail(ErrorKind::ShapeMismatch, "positions " + shape_str(positions.shape()) + " for " + shape_str(x.shape()));
  const std::vector<std::size_t> rows(x.dim(0), 0);
  const Tensor tiled = ops::gather_rows(ops::reshape(positions, {1, x.dim(1), x.dim(2)}), rows);
  return ops::add(x, tiled);
}

}  // namespace s2s::nn
