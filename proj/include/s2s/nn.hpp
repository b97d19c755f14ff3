// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "s2s/ops.hpp"
#include "s2s/params.hpp"
#include "s2s/tensor.hpp"

// Building blocks shared by every model family. Layers own handles to
// parameters registered in a ParamStore and are otherwise immutable.
namespace s2s::nn {

inline constexpr double kLayerNormEps = 1e-6;
// Additive score for masked attention positions.
inline constexpr double kMaskValue = -1e9;
// Default uniform init range for recurrent models.
inline constexpr double kRecurrentInit = 0.04;

struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;
};

struct DropoutSpec {
  double input = 0.0;
  double residual = 0.0;
  double relu = 0.0;
  double attention = 0.0;
};

// Dropout through the context's RNG; identity outside training.
Tensor dropout(const Tensor& x, double p, const ForwardContext& ctx);

inline double glorot_limit(std::size_t in, std::size_t out) {
  return std::sqrt(6.0 / static_cast<double>(in + out));
}

class LayerNorm {
 public:
  LayerNorm() = default;
  // A disabled norm owns no parameters and is the identity.
  LayerNorm(ParamStore& store, const std::string& name, std::size_t dim, bool enabled = true,
            double eps = kLayerNormEps);
  Tensor operator()(const Tensor& x) const;
  bool enabled() const noexcept { return enabled_; }
  const Tensor& gain() const noexcept { return gain_; }
  const Tensor& bias() const noexcept { return bias_; }

 private:
  Tensor gain_, bias_;
  double eps_ = kLayerNormEps;
  bool enabled_ = false;
};

class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, bool bias,
         double init_limit, Rng& rng);
  Tensor operator()(const Tensor& x) const { return ops::linear(x, weight_, bias_); }
  std::size_t in() const { return weight_.dim(0); }
  std::size_t out() const { return weight_.dim(1); }
  const Tensor& weight() const noexcept { return weight_; }

 private:
  Tensor weight_, bias_;
};

// ---------------------------------------------------------------------------
// LSTM with per-gate layer normalization.

struct LstmOptions {
  bool layer_norm = true;
  // h = o * LN(c) instead of o * tanh(LN(c)).
  bool raw_output_gate = false;
  double init_limit = kRecurrentInit;
};

// Gate order along the 4d axis: input, forget, candidate, output.
// Each gate's pre-activation (W x + U h) is layer-normalized with its own
// gain/bias, then the gate bias is added, then the nonlinearity applied.
// The cell state is normalized again before the output tanh.
class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(ParamStore& store, const std::string& name, std::size_t input_dim, std::size_t hidden,
           const LstmOptions& options, Rng& rng);

  // W x for any [..., input_dim] tensor; lets a layer project all steps at once.
  Tensor project_input(const Tensor& x) const { return ops::linear(x, w_input_); }
  // LN(W x + U h) before the gate bias; xw is [B, 4d].
  Tensor normalized_gates(const Tensor& xw, const Tensor& h_prev) const;
  std::pair<Tensor, Tensor> step_projected(const Tensor& xw, const Tensor& h_prev, const Tensor& c_prev) const;
  std::pair<Tensor, Tensor> step(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev) const {
    return step_projected(project_input(x), h_prev, c_prev);
  }

  std::size_t input_dim() const { return w_input_.dim(0); }
  std::size_t hidden() const { return hidden_; }

 private:
  Tensor w_input_, w_recurrent_, bias_, gate_gain_, gate_bias_;
  LayerNorm cell_norm_;
  std::size_t hidden_ = 0;
  bool layer_norm_ = true;
  bool raw_output_gate_ = false;
};

// Unidirectional layer over [B,T,in]. `valid` holds B*T flags (1 real token,
// 0 padding); at padded steps the state carries through unchanged.
class LstmLayer {
 public:
  LstmLayer() = default;
  LstmLayer(ParamStore& store, const std::string& name, std::size_t input_dim, std::size_t hidden, bool reverse,
            const LstmOptions& options, Rng& rng);
  Tensor forward(const Tensor& x, std::span<const double> valid = {}) const;
  const LstmCell& cell() const noexcept { return cell_; }

 private:
  LstmCell cell_;
  bool reverse_ = false;
};

// Forward and backward layers whose outputs are concatenated per position:
// row t = [fwd state after 1..t, bwd state after T..t].
class BiLstmLayer {
 public:
  BiLstmLayer() = default;
  BiLstmLayer(ParamStore& store, const std::string& name, std::size_t input_dim, std::size_t hidden,
              const LstmOptions& options, Rng& rng);
  Tensor forward(const Tensor& x, std::span<const double> valid = {}) const;
  const LstmLayer& forward_layer() const noexcept { return fwd_; }
  const LstmLayer& backward_layer() const noexcept { return bwd_; }

 private:
  LstmLayer fwd_, bwd_;
};

Tensor bidirectional_lstm_layer(const Tensor& seq, const LstmLayer& fwd, const LstmLayer& bwd,
                                std::span<const double> valid = {});

// ---------------------------------------------------------------------------
// Attention.

struct AttentionResult {
  Tensor context;
  Tensor weights;  // [B*h, Tq, S]
};

// Additive mask of shape [B*heads, Tq, S]; undefined tensor when nothing is
// masked. key_valid has B*S flags. Throws AllMasked if a query row would have
// no legal position.
Tensor attention_mask(std::span<const double> key_valid, std::size_t batch, std::size_t heads, std::size_t tq,
                      std::size_t s, bool causal);

// Scaled dot-product core on already split heads:
// q [B*h,Tq,k], k [B*h,S,k], v [B*h,S,dv].
AttentionResult dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& mask,
                                      double scale, double attention_dropout, const ForwardContext& ctx);

class AdditiveAttention {
 public:
  AdditiveAttention() = default;
  // Scores per head i: v_i . tanh(Wq_i q + Wk_i k_t). Head i weights its own
  // value_dim/heads slice of the values; the head contexts are concatenated
  // back to value_dim and optionally projected to out_dim.
  AdditiveAttention(ParamStore& store, const std::string& name, std::size_t query_dim, std::size_t key_dim,
                    std::size_t value_dim, std::size_t attn_dim, std::size_t heads, bool output_projection,
                    std::size_t out_dim, double init_limit, Rng& rng);

  Tensor project_keys(const Tensor& keys) const { return ops::linear(keys, key_proj_.weight()); }
  AttentionResult attend(const Tensor& queries, const Tensor& projected_keys, const Tensor& values,
                         std::span<const double> key_valid, double attention_dropout,
                         const ForwardContext& ctx) const;

  std::size_t heads() const noexcept { return heads_; }
  std::size_t output_dim() const noexcept { return out_dim_; }
  const Tensor& query_weight() const { return query_proj_.weight(); }
  const Tensor& key_weight() const { return key_proj_.weight(); }
  const Tensor& score_vector() const noexcept { return score_; }
  const Linear& output_projection() const noexcept { return out_proj_; }
  bool has_output_projection() const noexcept { return has_out_proj_; }

 private:
  Linear query_proj_, key_proj_, out_proj_;
  Tensor score_;
  std::size_t heads_ = 1;
  std::size_t out_dim_ = 0;
  bool has_out_proj_ = true;
};

// Multi-head scaled dot-product attention with Q/K/V/output projections.
class DotAttention {
 public:
  DotAttention() = default;
  DotAttention(ParamStore& store, const std::string& name, std::size_t model_dim, std::size_t memory_dim,
               std::size_t heads, bool scaled, Rng& rng);
  AttentionResult attend(const Tensor& queries, const Tensor& memory, std::span<const double> key_valid,
                         bool causal, double attention_dropout, const ForwardContext& ctx) const;
  std::size_t heads() const noexcept { return heads_; }

 private:
  Linear wq_, wk_, wv_, wo_;
  std::size_t heads_ = 1;
  bool scaled_ = true;
};

// ---------------------------------------------------------------------------
// Transformer pieces.

// x + dropout(transform(LN(x))), in exactly that order.
Tensor transformer_sublayer(const Tensor& x, const std::function<Tensor(const Tensor&)>& transform,
                            const LayerNorm& norm, double dropout_p, const ForwardContext& ctx);

class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParamStore& store, const std::string& name, std::size_t dim, std::size_t hidden, double init_limit,
              Rng& rng);
  // W2 relu_dropout(relu(W1 x + b1)) + b2
  Tensor operator()(const Tensor& x, double relu_dropout, const ForwardContext& ctx) const;

 private:
  Linear inner_, outer_;
};

Tensor feed_forward(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2);

// PE[pos, 2i] = sin(pos / 10000^(2i/d)), PE[pos, 2i+1] = cos(same angle).
Tensor sinusoidal_positions(std::size_t length, std::size_t dim);

class LearnedPositions {
 public:
  LearnedPositions() = default;
  LearnedPositions(ParamStore& store, const std::string& name, std::size_t max_positions, std::size_t dim,
                   double init_limit, Rng& rng);
  // Rows 0..length-1 of the table; PositionOutOfRange past the end.
  Tensor operator()(std::size_t length) const;
  const Tensor& table() const noexcept { return table_; }

 private:
  Tensor table_;
};

Tensor learned_positions(std::size_t length, const Tensor& table);

// x [B,T,d] + pos [T,d] for every batch row.
Tensor add_positions(const Tensor& x, const Tensor& positions);

// ---------------------------------------------------------------------------
// Convolution.

// A * sigmoid(B) where [A; B] is x split in half along the last axis.
Tensor glu(const Tensor& x);

// conv1d (+ bias) followed by GLU. Causal pads width-1 on the left only;
// otherwise (width-1)/2 each side. Output has the input's length.
Tensor conv1d_glu(const Tensor& x, const Tensor& kernel, const Tensor& bias, bool causal);

// w = g * v / ||v||
inline Tensor weight_norm_reparam(const Tensor& v, const Tensor& g) { return ops::weight_norm(v, g); }

class ConvGlu {
 public:
  ConvGlu() = default;
  ConvGlu(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, std::size_t width,
          bool causal, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  Tensor effective_kernel() const { return ops::weight_norm(direction_, scale_); }
  std::size_t out() const noexcept { return out_; }

 private:
  Tensor direction_, scale_, bias_;
  std::size_t out_ = 0;
  bool causal_ = false;
};

// Linear layer with a weight-normalized matrix.
class WeightNormLinear {
 public:
  WeightNormLinear() = default;
  WeightNormLinear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  Tensor operator()(const Tensor& x) const { return ops::linear(x, ops::weight_norm(direction_, scale_), bias_); }

 private:
  Tensor direction_, scale_, bias_;
};

}  // namespace s2s::nn
