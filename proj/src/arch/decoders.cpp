// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "internal.hpp"
#include "s2s/errors.hpp"

namespace s2s::arch::detail {

namespace {

constexpr double kHalfSqrt = 0.70710678118654752440;

Tensor last_step(const Tensor& x) { return ops::select_time(x, x.dim(1) - 1); }

struct RnmtState final : DecoderState {
  EncoderOutput enc;
  Tensor keys;
  std::vector<Tensor> h, c;

  void reorder(std::span<const std::size_t> rows) override {
    enc = enc.gather(rows);
    keys = ops::gather_rows(keys, rows);
    for (auto& t : h) t = ops::gather_rows(t, rows);
    for (auto& t : c) t = ops::gather_rows(t, rows);
  }
  std::size_t rows() const override { return enc.batch; }
};

}  // namespace

PrefixState::PrefixState(EncoderOutput e) : enc(std::move(e)), tokens(enc.batch) {}

void PrefixState::reorder(std::span<const std::size_t> rows) {
  enc = enc.gather(rows);
  std::vector<std::vector<int>> next;
  next.reserve(rows.size());
  for (std::size_t r : rows) next.push_back(tokens[r]);
  tokens = std::move(next);
}

void PrefixState::append(std::span<const int> step) {
  if (step.size() != tokens.size())
    fail(ErrorKind::ShapeMismatch, std::to_string(step.size()) + " tokens for " + std::to_string(tokens.size()) +
                                       " decoder rows");
  for (std::size_t r = 0; r < tokens.size(); ++r) tokens[r].push_back(step[r]);
}

data::TokenMatrix PrefixState::prefix() const { return data::pad_rows(tokens); }

// ---------------------------------------------------------------------------

RnmtDecoder::RnmtDecoder(ParamStore& store, const ModelConfig& config, std::size_t memory_dim, Rng& rng)
    : dropout_(config.dropout),
      residual_start_(config.residual_start_layer),
      feed_context_(config.feed_context_to_softmax) {
  const StackConfig& stack = config.decoder;
  const std::size_t d = stack.model_dim;
  embedding_ = store.uniform("decoder.embedding", {config.vocab_size, d}, nn::kRecurrentInit, rng);
  attention_ = nn::AdditiveAttention(store, "decoder.attention", d, memory_dim, memory_dim, d, stack.heads,
                                     config.attention_output_projection, d, nn::kRecurrentInit, rng);
  const std::size_t context = attention_.output_dim();
  for (std::size_t l = 0; l < stack.layers; ++l)
    layers_.emplace_back(store, "decoder.layer" + std::to_string(l), l == 0 ? d : d + context, d, false,
                         lstm_options(config), rng);
  softmax_ = nn::Linear(store, "decoder.softmax", feed_context_ ? d + context : d, config.vocab_size, true,
                        nn::kRecurrentInit, rng);
}

Tensor RnmtDecoder::output(const Tensor& top, const Tensor& context) const {
  return softmax_(feed_context_ ? ops::concat({top, context}) : top);
}

Tensor RnmtDecoder::logits(const EncoderOutput& enc, const data::TokenMatrix& target_in,
                           const nn::ForwardContext& ctx) const {
  const Tensor emb = nn::dropout(embed(embedding_, target_in), dropout_.input, ctx);
  Tensor y = nn::dropout(layers_[0].forward(emb), dropout_.residual, ctx);
  if (residual_start_ <= 1) y = ops::add(y, emb);
  const Tensor keys = attention_.project_keys(enc.features);
  const Tensor context = attention_.attend(y, keys, enc.features, enc.valid, dropout_.attention, ctx).context;
  for (std::size_t l = 1; l < layers_.size(); ++l) {
    const Tensor out = nn::dropout(layers_[l].forward(ops::concat({y, context})), dropout_.residual, ctx);
    y = l + 1 >= residual_start_ ? ops::add(y, out) : out;
  }
  return output(y, context);
}

std::unique_ptr<DecoderState> RnmtDecoder::start(const EncoderOutput& enc) const {
  auto state = std::make_unique<RnmtState>();
  state->enc = enc;
  state->keys = attention_.project_keys(enc.features);
  for (const auto& layer : layers_) {
    state->h.push_back(Tensor::zeros({enc.batch, layer.cell().hidden()}));
    state->c.push_back(Tensor::zeros({enc.batch, layer.cell().hidden()}));
  }
  return state;
}

Tensor RnmtDecoder::step(DecoderState& base, std::span<const int> tokens) const {
  auto& state = dynamic_cast<RnmtState&>(base);
  const std::size_t rows = state.rows();
  if (tokens.size() != rows)
    fail(ErrorKind::ShapeMismatch, std::to_string(tokens.size()) + " tokens for " + std::to_string(rows) + " rows");
  const Tensor emb = ops::embedding(embedding_, tokens, {rows});
  std::tie(state.h[0], state.c[0]) = layers_[0].cell().step(emb, state.h[0], state.c[0]);
  Tensor y = residual_start_ <= 1 ? ops::add(state.h[0], emb) : state.h[0];
  const nn::ForwardContext ctx;
  const std::size_t d = y.dim(1);
  Tensor context = attention_.attend(ops::reshape(y, {rows, 1, d}), state.keys, state.enc.features, state.enc.valid,
                                     0.0, ctx)
                       .context;
  context = ops::reshape(context, {rows, context.dim(2)});
  for (std::size_t l = 1; l < layers_.size(); ++l) {
    std::tie(state.h[l], state.c[l]) = layers_[l].cell().step(ops::concat({y, context}), state.h[l], state.c[l]);
    y = l + 1 >= residual_start_ ? ops::add(y, state.h[l]) : state.h[l];
  }
  return output(y, context);
}

// ---------------------------------------------------------------------------

TransformerDecoder::TransformerDecoder(ParamStore& store, const ModelConfig& config, std::size_t memory_dim,
                                       Rng& rng)
    : dim_(config.decoder.model_dim), input_dropout_(config.dropout.input) {
  embedding_ = store.uniform("decoder.embedding", {config.vocab_size, dim_}, embedding_limit(dim_), rng);
  stack_ = TransformerStack(store, "decoder", config.decoder, memory_dim, true, config.layer_norm, config.dropout, rng);
  softmax_ = nn::Linear(store, "decoder.softmax", dim_, config.vocab_size, true,
                        1.0 / std::sqrt(static_cast<double>(dim_)), rng);
}

Tensor TransformerDecoder::logits(const EncoderOutput& enc, const data::TokenMatrix& target_in,
                                  const nn::ForwardContext& ctx) const {
  Tensor x = ops::scale(embed(embedding_, target_in), std::sqrt(static_cast<double>(dim_)));
  x = nn::dropout(nn::add_positions(x, nn::sinusoidal_positions(target_in.cols, dim_)), input_dropout_, ctx);
  return softmax_(stack_.forward(x, {}, &enc, true, ctx));
}

std::unique_ptr<DecoderState> TransformerDecoder::start(const EncoderOutput& enc) const {
  return std::make_unique<PrefixState>(enc);
}

Tensor TransformerDecoder::step(DecoderState& base, std::span<const int> tokens) const {
  auto& state = dynamic_cast<PrefixState&>(base);
  state.append(tokens);
  return last_step(logits(state.enc, state.prefix(), nn::ForwardContext{}));
}

// ---------------------------------------------------------------------------

ConvDecoder::ConvDecoder(ParamStore& store, const ModelConfig& config, std::size_t memory_dim, Rng& rng)
    : dropout_(config.dropout) {
  const std::size_t e = config.decoder.model_dim;
  if (memory_dim != e)
    fail(ErrorKind::ConfigInvalid, "convolutional decoder embedding " + std::to_string(e) +
                                       " differs from encoder output " + std::to_string(memory_dim));
  const auto specs = conv_layers(config.decoder);
  grad_scale_ = config.encoder_grad_scale >= 0.0 ? config.encoder_grad_scale
                                                 : 1.0 / (2.0 * static_cast<double>(specs.size()));
  embedding_ = store.uniform("decoder.embedding", {config.vocab_size, e}, embedding_limit(e), rng);
  positions_ = nn::LearnedPositions(store, "decoder.positions", config.max_positions, e, embedding_limit(e), rng);
  input_projection_ = nn::WeightNormLinear(store, "decoder.input_projection", e, specs.front().channels, rng);
  std::size_t in = specs.front().channels;
  for (std::size_t l = 0; l < specs.size(); ++l) {
    const std::string name = "decoder.block" + std::to_string(l);
    const std::size_t c = specs[l].channels;
    ConvBlock block;
    if (c != in) {
      block.project_residual = true;
      block.residual = nn::WeightNormLinear(store, name + ".residual", in, c, rng);
    }
    block.conv = nn::ConvGlu(store, name + ".conv", in, c, specs[l].width, true, rng);
    block.attention_in = nn::WeightNormLinear(store, name + ".attention_in", c, e, rng);
    block.attention_out = nn::WeightNormLinear(store, name + ".attention_out", e, c, rng);
    blocks_.push_back(std::move(block));
    in = c;
  }
  output_projection_ = nn::WeightNormLinear(store, "decoder.output_projection", in, e, rng);
  softmax_ = nn::Linear(store, "decoder.softmax", e, config.vocab_size, true, nn::glorot_limit(e, config.vocab_size),
                        rng);
}

Tensor ConvDecoder::logits(const EncoderOutput& enc, const data::TokenMatrix& target_in,
                           const nn::ForwardContext& ctx) const {
  const Tensor keys = ops::scale_grad(enc.features, grad_scale_);
  const Tensor values = ops::scale_grad(enc.values, grad_scale_);
  const std::size_t batch = target_in.rows, steps = target_in.cols;
  const Tensor mask = nn::attention_mask(enc.valid, batch, 1, steps, enc.length, false);
  const Tensor g =
      nn::dropout(nn::add_positions(embed(embedding_, target_in), positions_(steps)), dropout_.input, ctx);
  Tensor x = input_projection_(g);
  for (const auto& block : blocks_) {
    const Tensor residual = block.project_residual ? block.residual(x) : x;
    Tensor h = block.conv(nn::dropout(x, dropout_.residual, ctx));
    const Tensor query = ops::scale(ops::add(block.attention_in(h), g), kHalfSqrt);
    Tensor scores = ops::bmm(query, keys, true);
    if (mask.defined()) scores = ops::add(scores, mask);
    const Tensor weights = nn::dropout(ops::softmax(scores), dropout_.attention, ctx);
    h = ops::scale(ops::add(h, block.attention_out(ops::bmm(weights, values))), kHalfSqrt);
    x = ops::scale(ops::add(h, residual), kHalfSqrt);
  }
  return softmax_(nn::dropout(output_projection_(x), dropout_.residual, ctx));
}

std::unique_ptr<DecoderState> ConvDecoder::start(const EncoderOutput& enc) const {
  return std::make_unique<PrefixState>(enc);
}

Tensor ConvDecoder::step(DecoderState& base, std::span<const int> tokens) const {
  auto& state = dynamic_cast<PrefixState&>(base);
  state.append(tokens);
  return last_step(logits(state.enc, state.prefix(), nn::ForwardContext{}));
}

}  // namespace s2s::arch::detail
