// SPDX-License-Identifier: Apache-2.0
#include "s2s/errors.hpp"
#include "s2s/nn.hpp"

namespace s2s::nn {

LstmCell::LstmCell(ParamStore& store, const std::string& name, std::size_t input_dim, std::size_t hidden,
                   const LstmOptions& options, Rng& rng)
    : hidden_(hidden), layer_norm_(options.layer_norm), raw_output_gate_(options.raw_output_gate) {
  w_input_ = store.uniform(name + ".w_input", {input_dim, 4 * hidden}, options.init_limit, rng);
  w_recurrent_ = store.uniform(name + ".w_recurrent", {hidden, 4 * hidden}, options.init_limit, rng);
  std::vector<double> bias(4 * hidden, 0.0);
  for (std::size_t j = hidden; j < 2 * hidden; ++j) bias[j] = 1.0;  // forget gate
  bias_ = store.add(name + ".bias", Tensor::from_data({4 * hidden}, std::move(bias)));
  if (layer_norm_) {
    gate_gain_ = store.constant(name + ".gate_norm.gain", {4 * hidden}, 1.0);
    gate_bias_ = store.constant(name + ".gate_norm.bias", {4 * hidden}, 0.0);
  }
  cell_norm_ = LayerNorm(store, name + ".cell_norm", hidden, layer_norm_);
}

Tensor LstmCell::normalized_gates(const Tensor& xw, const Tensor& h_prev) const {
  const Tensor z = ops::add(xw, ops::matmul(h_prev, w_recurrent_));
  if (!layer_norm_) return z;
  return ops::group_layer_norm(z, gate_gain_, gate_bias_, 4, kLayerNormEps);
}

std::pair<Tensor, Tensor> LstmCell::step_projected(const Tensor& xw, const Tensor& h_prev,
                                                   const Tensor& c_prev) const {
  if (xw.rank() != 2 || xw.dim(1) != 4 * hidden_ || h_prev.shape() != Shape{xw.dim(0), hidden_} ||
      c_prev.shape() != h_prev.shape())
    fail(ErrorKind::ShapeMismatch, "lstm step with projected input " + shape_str(xw.shape()) + ", state " +
                                       shape_str(h_prev.shape()));
  const Tensor a = ops::add_bias(normalized_gates(xw, h_prev), bias_);
  const std::size_t d = hidden_;
  const Tensor i = ops::sigmoid(ops::slice_last(a, 0, d));
  const Tensor f = ops::sigmoid(ops::slice_last(a, d, d));
  const Tensor g = ops::tanh(ops::slice_last(a, 2 * d, d));
  const Tensor o = ops::sigmoid(ops::slice_last(a, 3 * d, d));
  const Tensor c = ops::add(ops::mul(f, c_prev), ops::mul(i, g));
  const Tensor cn = cell_norm_(c);
  const Tensor h = ops::mul(o, raw_output_gate_ ? cn : ops::tanh(cn));
  return {h, c};
}

LstmLayer::LstmLayer(ParamStore& store, const std::string& name, std::size_t input_dim, std::size_t hidden,
                     bool reverse, const LstmOptions& options, Rng& rng)
    : cell_(store, name, input_dim, hidden, options, rng), reverse_(reverse) {}

Tensor LstmLayer::forward(const Tensor& x, std::span<const double> valid) const {
  if (x.rank() != 3) fail(ErrorKind::ShapeMismatch, "lstm layer input must be [B,T,d], got " + shape_str(x.shape()));
  const std::size_t batch = x.dim(0), steps = x.dim(1);
  if (!valid.empty() && valid.size() != batch * steps)
    fail(ErrorKind::ShapeMismatch, "lstm validity mask has " + std::to_string(valid.size()) + " entries");
  const Tensor projected = cell_.project_input(x);
  Tensor h = Tensor::zeros({batch, cell_.hidden()});
  Tensor c = Tensor::zeros({batch, cell_.hidden()});
  std::vector<Tensor> outputs(steps);
  std::vector<double> keep(batch);
  for (std::size_t n = 0; n < steps; ++n) {
    const std::size_t t = reverse_ ? steps - 1 - n : n;
    auto [h_new, c_new] = cell_.step_projected(ops::select_time(projected, t), h, c);
    bool all_valid = true;
    if (!valid.empty())
      for (std::size_t b = 0; b < batch; ++b) {
        keep[b] = valid[b * steps + t];
        all_valid = all_valid && keep[b] != 0.0;
      }
    if (all_valid) {
      h = h_new;
      c = c_new;
    } else {
      h = ops::row_blend(keep, h_new, h);
      c = ops::row_blend(keep, c_new, c);
    }
    outputs[t] = h;
  }
  return ops::stack_time(outputs);
}

BiLstmLayer::BiLstmLayer(ParamStore& store, const std::string& name, std::size_t input_dim, std::size_t hidden,
                         const LstmOptions& options, Rng& rng)
    : fwd_(store, name + ".fwd", input_dim, hidden, false, options, rng),
      bwd_(store, name + ".bwd", input_dim, hidden, true, options, rng) {}

Tensor BiLstmLayer::forward(const Tensor& x, std::span<const double> valid) const {
  return bidirectional_lstm_layer(x, fwd_, bwd_, valid);
}

Tensor bidirectional_lstm_layer(const Tensor& seq, const LstmLayer& fwd, const LstmLayer& bwd,
                                std::span<const double> valid) {
  if (seq.rank() != 3) fail(ErrorKind::ShapeMismatch, "bidirectional layer input " + shape_str(seq.shape()));
  if (!valid.empty()) {
    const std::size_t batch = seq.dim(0), steps = seq.dim(1);
    for (std::size_t b = 0; b < batch; ++b) {
      bool any = false;
      for (std::size_t t = 0; t < steps; ++t) any = any || valid[b * steps + t] != 0.0;
      if (!any) fail(ErrorKind::EmptySequence, "sequence " + std::to_string(b) + " has no tokens");
    }
  }
  return ops::concat({fwd.forward(seq, valid), bwd.forward(seq, valid)});
}

}  // namespace s2s::nn
