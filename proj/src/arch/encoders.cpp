// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "internal.hpp"
#include "s2s/errors.hpp"

namespace s2s::arch::detail {

namespace {

constexpr double kHalfSqrt = 0.70710678118654752440;  // sqrt(0.5)

}  // namespace

Tensor embed(const Tensor& table, const data::TokenMatrix& tokens) {
  return ops::embedding(table, tokens.ids, {tokens.rows, tokens.cols});
}

Tensor mask_time(const Tensor& x, std::span<const double> valid) {
  bool all = true;
  for (double v : valid) all = all && v != 0.0;
  if (all) return x;
  const std::size_t width = x.dim(2);
  std::vector<double> mask(x.numel());
  for (std::size_t r = 0; r < valid.size(); ++r)
    for (std::size_t j = 0; j < width; ++j) mask[r * width + j] = valid[r];
  return ops::mul(x, Tensor::from_data(x.shape(), std::move(mask)));
}

nn::LstmOptions lstm_options(const ModelConfig& config) {
  nn::LstmOptions o;
  o.layer_norm = config.layer_norm;
  o.raw_output_gate = config.raw_output_gate;
  return o;
}

std::vector<ConvLayerSpec> conv_layers(const StackConfig& stack) {
  if (!stack.conv_layers.empty()) return stack.conv_layers;
  return std::vector<ConvLayerSpec>(stack.layers, ConvLayerSpec{stack.model_dim, 3});
}

double embedding_limit(std::size_t dim) { return std::sqrt(3.0 / static_cast<double>(dim)); }

// ---------------------------------------------------------------------------

RnmtEncoder::RnmtEncoder(ParamStore& store, const std::string& prefix, const ModelConfig& config,
                         const StackConfig& stack, Rng& rng)
    : dropout_(config.dropout), residual_start_(config.residual_start_layer) {
  const std::size_t d = stack.model_dim;
  embedding_ = store.uniform(prefix + ".embedding", {config.vocab_size, d}, nn::kRecurrentInit, rng);
  for (std::size_t l = 0; l < stack.layers; ++l)
    layers_.emplace_back(store, prefix + ".layer" + std::to_string(l), l == 0 ? d : 2 * d, d,
                         lstm_options(config), rng);
  projection_ = nn::Linear(store, prefix + ".projection", 2 * d, d, true, nn::kRecurrentInit, rng);
}

EncoderOutput RnmtEncoder::encode(const data::TokenMatrix& source, const nn::ForwardContext& ctx) const {
  Tensor x = nn::dropout(embed(embedding_, source), dropout_.input, ctx);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Tensor out = nn::dropout(layers_[l].forward(x, source.valid), dropout_.residual, ctx);
    x = l + 1 >= residual_start_ ? ops::add(x, out) : out;
  }
  EncoderOutput enc;
  enc.features = projection_(x);
  enc.valid = source.valid;
  enc.batch = source.rows;
  enc.length = source.cols;
  return enc;
}

// ---------------------------------------------------------------------------

TransformerStack::TransformerStack(ParamStore& store, const std::string& prefix, const StackConfig& stack,
                                   std::size_t memory_dim, bool cross_attention, bool layer_norm,
                                   const nn::DropoutSpec& dropout, Rng& rng)
    : dropout_(dropout) {
  const std::size_t d = stack.model_dim;
  for (std::size_t l = 0; l < stack.layers; ++l) {
    const std::string name = prefix + ".layer" + std::to_string(l);
    TransformerLayer layer;
    layer.self_norm = nn::LayerNorm(store, name + ".self_norm", d, layer_norm);
    layer.self_attention = nn::DotAttention(store, name + ".self_attention", d, d, stack.heads, true, rng);
    if (cross_attention) {
      layer.cross_norm = nn::LayerNorm(store, name + ".cross_norm", d, layer_norm);
      layer.cross_attention =
          nn::DotAttention(store, name + ".cross_attention", d, memory_dim, stack.heads, true, rng);
    }
    layer.ffn_norm = nn::LayerNorm(store, name + ".ffn_norm", d, layer_norm);
    layer.ffn = nn::FeedForward(store, name + ".ffn", d, stack.hidden_dim, nn::glorot_limit(d, stack.hidden_dim), rng);
    layers_.push_back(std::move(layer));
  }
  final_norm_ = nn::LayerNorm(store, prefix + ".final_norm", d, layer_norm);
}

Tensor TransformerStack::forward(const Tensor& input, std::span<const double> valid, const EncoderOutput* memory,
                                 bool causal, const nn::ForwardContext& ctx) const {
  Tensor x = input;
  for (const auto& layer : layers_) {
    x = nn::transformer_sublayer(
        x,
        [&](const Tensor& n) {
          return layer.self_attention.attend(n, n, valid, causal, dropout_.attention, ctx).context;
        },
        layer.self_norm, dropout_.residual, ctx);
    if (memory != nullptr)
      x = nn::transformer_sublayer(
          x,
          [&](const Tensor& n) {
            return layer.cross_attention.attend(n, memory->features, memory->valid, false, dropout_.attention, ctx)
                .context;
          },
          layer.cross_norm, dropout_.residual, ctx);
    x = nn::transformer_sublayer(
        x, [&](const Tensor& n) { return layer.ffn(n, dropout_.relu, ctx); }, layer.ffn_norm, dropout_.residual, ctx);
  }
  return final_norm_(x);
}

TransformerEncoder::TransformerEncoder(ParamStore& store, const std::string& prefix, const ModelConfig& config,
                                       const StackConfig& stack, Rng& rng)
    : dim_(stack.model_dim), input_dropout_(config.dropout.input) {
  embedding_ = store.uniform(prefix + ".embedding", {config.vocab_size, dim_}, embedding_limit(dim_), rng);
  stack_ = TransformerStack(store, prefix, stack, 0, false, config.layer_norm, config.dropout, rng);
}

EncoderOutput TransformerEncoder::encode(const data::TokenMatrix& source, const nn::ForwardContext& ctx) const {
  Tensor x = ops::scale(embed(embedding_, source), std::sqrt(static_cast<double>(dim_)));
  x = nn::dropout(nn::add_positions(x, nn::sinusoidal_positions(source.cols, dim_)), input_dropout_, ctx);
  EncoderOutput enc;
  enc.features = stack_.forward(x, source.valid, nullptr, false, ctx);
  enc.valid = source.valid;
  enc.batch = source.rows;
  enc.length = source.cols;
  return enc;
}

// ---------------------------------------------------------------------------

ConvEncoder::ConvEncoder(ParamStore& store, const std::string& prefix, const ModelConfig& config,
                         const StackConfig& stack, Rng& rng)
    : dim_(stack.model_dim), dropout_(config.dropout) {
  const auto specs = conv_layers(stack);
  embedding_ = store.uniform(prefix + ".embedding", {config.vocab_size, dim_}, embedding_limit(dim_), rng);
  positions_ = nn::LearnedPositions(store, prefix + ".positions", config.max_positions, dim_, embedding_limit(dim_), rng);
  input_projection_ = nn::WeightNormLinear(store, prefix + ".input_projection", dim_, specs.front().channels, rng);
  std::size_t in = specs.front().channels;
  for (std::size_t l = 0; l < specs.size(); ++l) {
    const std::string name = prefix + ".block" + std::to_string(l);
    ConvBlock block;
    if (specs[l].channels != in) {
      block.project_residual = true;
      block.residual = nn::WeightNormLinear(store, name + ".residual", in, specs[l].channels, rng);
    }
    block.conv = nn::ConvGlu(store, name + ".conv", in, specs[l].channels, specs[l].width, false, rng);
    blocks_.push_back(std::move(block));
    in = specs[l].channels;
  }
  output_projection_ = nn::WeightNormLinear(store, prefix + ".output_projection", in, dim_, rng);
}

EncoderOutput ConvEncoder::encode(const data::TokenMatrix& source, const nn::ForwardContext& ctx) const {
  const Tensor e =
      nn::dropout(nn::add_positions(embed(embedding_, source), positions_(source.cols)), dropout_.input, ctx);
  Tensor x = input_projection_(e);
  for (const auto& block : blocks_) {
    const Tensor residual = block.project_residual ? block.residual(x) : x;
    const Tensor h = block.conv(mask_time(nn::dropout(x, dropout_.residual, ctx), source.valid));
    x = ops::scale(ops::add(h, residual), kHalfSqrt);
  }
  EncoderOutput enc;
  enc.features = output_projection_(x);
  enc.values = ops::scale(ops::add(enc.features, e), kHalfSqrt);
  enc.valid = source.valid;
  enc.batch = source.rows;
  enc.length = source.cols;
  return enc;
}

// ---------------------------------------------------------------------------

CascadedEncoder::CascadedEncoder(ParamStore& store, const std::string& prefix, const ModelConfig& config, Rng& rng)
    : base_(store, prefix + ".rnmt", config, config.encoder, rng) {
  input_norm_ = nn::LayerNorm(store, prefix + ".input_norm", base_.output_dim(), config.layer_norm);
  stack_ = TransformerStack(store, prefix + ".stack", config.stacked, 0, false, config.layer_norm, config.dropout, rng);
}

Tensor CascadedEncoder::stack(const Tensor& input, std::span<const double> valid,
                              const nn::ForwardContext& ctx) const {
  return stack_.forward(input, valid, nullptr, false, ctx);
}

EncoderOutput CascadedEncoder::encode(const data::TokenMatrix& source, const nn::ForwardContext& ctx) const {
  EncoderOutput enc = base_.encode(source, ctx);
  enc.features = stack(input_norm_(enc.features), enc.valid, ctx);
  return enc;
}

// ---------------------------------------------------------------------------

MultiColumnEncoder::MultiColumnEncoder(ParamStore& store, const std::string& prefix, const ModelConfig& config,
                                       Rng& rng)
    : rnmt_(store, prefix + ".column0", config, config.encoder, rng),
      transformer_(store, prefix + ".column1", config, config.stacked, rng) {
  const std::size_t concat_dim = rnmt_.output_dim() + transformer_.output_dim();
  const std::size_t out = config.decoder.model_dim;
  rnmt_norm_ = nn::LayerNorm(store, prefix + ".column0_norm", rnmt_.output_dim(), config.layer_norm);
  merge_ = nn::Linear(store, prefix + ".merge", concat_dim, out, true, nn::glorot_limit(concat_dim, out), rng);
  output_norm_ = nn::LayerNorm(store, prefix + ".merge_norm", out, config.layer_norm);
}

Tensor MultiColumnEncoder::merge(const Tensor& rnmt_column, const Tensor& transformer_column) const {
  if (rnmt_column.rank() != 3 || transformer_column.rank() != 3 || rnmt_column.dim(0) != transformer_column.dim(0) ||
      rnmt_column.dim(1) != transformer_column.dim(1))
    fail(ErrorKind::ColumnDimMismatch, "columns " + shape_str(rnmt_column.shape()) + " and " +
                                           shape_str(transformer_column.shape()) + " do not align");
  if (rnmt_column.dim(2) + transformer_column.dim(2) != merge_.in())
    fail(ErrorKind::ColumnDimMismatch, "column widths sum to " +
                                           std::to_string(rnmt_column.dim(2) + transformer_column.dim(2)) +
                                           ", merger expects " + std::to_string(merge_.in()));
  return output_norm_(merge_(ops::concat({rnmt_norm_(rnmt_column), transformer_column})));
}

EncoderOutput MultiColumnEncoder::encode(const data::TokenMatrix& source, const nn::ForwardContext& ctx) const {
  EncoderOutput a = rnmt_.encode(source, ctx);
  EncoderOutput b = transformer_.encode(source, ctx);
  EncoderOutput enc;
  enc.features = merge(a.features, b.features);
  enc.columns = {a.features, b.features};
  enc.valid = source.valid;
  enc.batch = source.rows;
  enc.length = source.cols;
  return enc;
}

}  // namespace s2s::arch::detail
