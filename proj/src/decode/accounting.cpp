// SPDX-License-Identifier: Apache-2.0
#include "s2s/decode.hpp"
#include "s2s/errors.hpp"

namespace s2s::decode {

using arch::Family;
using arch::ModelConfig;
using arch::StackConfig;

namespace {

using Count = std::size_t;

// ---------------------------------------------------------------------------
// Parameter shapes, mirroring the builders.

Count linear(Count in, Count out, bool bias) { return in * out + (bias ? out : 0); }
Count wn_linear(Count in, Count out) { return in * out + out + 1; }
Count norm(Count d, bool enabled) { return enabled ? 2 * d : 0; }
Count lstm(Count in, Count d, bool ln) { return in * 4 * d + d * 4 * d + 4 * d + (ln ? 2 * 4 * d + 2 * d : 0); }
Count dot_attention(Count d, Count memory) { return 2 * d * d + 2 * memory * d; }
Count feed_forward(Count d, Count hidden) { return linear(d, hidden, true) + linear(hidden, d, true); }
Count conv_glu(Count in, Count out, Count width) { return width * in * 2 * out + 1 + 2 * out; }

std::vector<arch::ConvLayerSpec> conv_layers(const StackConfig& s) {
  if (!s.conv_layers.empty()) return s.conv_layers;
  return std::vector<arch::ConvLayerSpec>(s.layers, arch::ConvLayerSpec{s.model_dim, 3});
}

Count rnmt_encoder_params(const ModelConfig& c, const StackConfig& s) {
  const Count d = s.model_dim;
  Count n = c.vocab_size * d;
  for (Count l = 0; l < s.layers; ++l) n += 2 * lstm(l == 0 ? d : 2 * d, d, c.layer_norm);
  return n + linear(2 * d, d, true);
}

Count transformer_stack_params(const ModelConfig& c, const StackConfig& s, Count memory, bool cross) {
  const Count d = s.model_dim;
  Count per_layer = 2 * norm(d, c.layer_norm) + dot_attention(d, d) + feed_forward(d, s.hidden_dim);
  if (cross) per_layer += norm(d, c.layer_norm) + dot_attention(d, memory);
  return s.layers * per_layer + norm(d, c.layer_norm);
}

Count transformer_encoder_params(const ModelConfig& c, const StackConfig& s) {
  return c.vocab_size * s.model_dim + transformer_stack_params(c, s, 0, false);
}

Count conv_stack_params(const ModelConfig& c, const StackConfig& s, bool decoder) {
  const Count e = s.model_dim;
  const auto blocks = conv_layers(s);
  Count n = c.vocab_size * e + c.max_positions * e + wn_linear(e, blocks.front().channels);
  Count in = blocks.front().channels;
  for (const auto& b : blocks) {
    if (b.channels != in) n += wn_linear(in, b.channels);
    n += conv_glu(in, b.channels, b.width);
    if (decoder) n += wn_linear(b.channels, e) + wn_linear(e, b.channels);
    in = b.channels;
  }
  n += wn_linear(in, e);
  if (decoder) n += linear(e, c.vocab_size, true);
  return n;
}

Count encoder_output_dim(const ModelConfig& c) {
  return c.encoder.family == Family::multi_column ? c.decoder.model_dim : c.encoder.model_dim;
}

Count encoder_params(const ModelConfig& c) {
  switch (c.encoder.family) {
    case Family::rnmt_plus: return rnmt_encoder_params(c, c.encoder);
    case Family::transformer: return transformer_encoder_params(c, c.encoder);
    case Family::convs2s: return conv_stack_params(c, c.encoder, false);
    case Family::cascaded:
      return rnmt_encoder_params(c, c.encoder) + norm(c.encoder.model_dim, c.layer_norm) +
             transformer_stack_params(c, c.stacked, 0, false);
    case Family::multi_column: {
      const Count d0 = c.encoder.model_dim, d1 = c.stacked.model_dim, out = c.decoder.model_dim;
      return rnmt_encoder_params(c, c.encoder) + transformer_encoder_params(c, c.stacked) + norm(d0, c.layer_norm) +
             linear(d0 + d1, out, true) + norm(out, c.layer_norm);
    }
  }
  return 0;
}

Count decoder_params(const ModelConfig& c) {
  const StackConfig& s = c.decoder;
  const Count d = s.model_dim, memory = encoder_output_dim(c);
  switch (s.family) {
    case Family::rnmt_plus: {
      const bool proj = c.attention_output_projection;
      const Count context = proj ? d : memory;
      Count n = c.vocab_size * d + d * d + memory * d + d + (proj ? linear(memory, d, true) : 0);
      for (Count l = 0; l < s.layers; ++l) n += lstm(l == 0 ? d : d + context, d, c.layer_norm);
      return n + linear(c.feed_context_to_softmax ? d + context : d, c.vocab_size, true);
    }
    case Family::transformer:
      return c.vocab_size * d + transformer_stack_params(c, s, memory, true) + linear(d, c.vocab_size, true);
    case Family::convs2s: return conv_stack_params(c, s, true);
    default: break;
  }
  fail(ErrorKind::ConfigInvalid, "unsupported decoder family");
}

// ---------------------------------------------------------------------------
// Forward FLOPs for one sentence pair (S source, T target positions).

Count mm(Count rows, Count in, Count out) { return 2 * rows * in * out; }
Count lstm_flops(Count steps, Count in, Count d) { return mm(steps, in, 4 * d) + mm(steps, d, 4 * d); }

Count dot_attention_flops(Count queries, Count keys, Count d, Count memory) {
  return mm(queries, d, d) + 2 * mm(keys, memory, d) + 2 * mm(queries, keys, d) + mm(queries, d, d);
}

Count rnmt_encoder_flops(const StackConfig& s, Count S) {
  const Count d = s.model_dim;
  Count f = 0;
  for (Count l = 0; l < s.layers; ++l) f += 2 * lstm_flops(S, l == 0 ? d : 2 * d, d);
  return f + mm(S, 2 * d, d);
}

Count transformer_stack_flops(const StackConfig& s, Count N, Count M, Count memory, bool cross) {
  const Count d = s.model_dim;
  Count per_layer = dot_attention_flops(N, N, d, d) + mm(N, d, s.hidden_dim) + mm(N, s.hidden_dim, d);
  if (cross) per_layer += dot_attention_flops(N, M, d, memory);
  return s.layers * per_layer;
}

Count conv_stack_flops(const StackConfig& s, Count N, Count S, bool decoder) {
  const Count e = s.model_dim;
  const auto blocks = conv_layers(s);
  Count f = mm(N, e, blocks.front().channels);
  Count in = blocks.front().channels;
  for (const auto& b : blocks) {
    if (b.channels != in) f += mm(N, in, b.channels);
    f += mm(N, b.width * in, 2 * b.channels);
    if (decoder) f += mm(N, b.channels, e) + 2 * mm(N, S, e) + mm(N, e, b.channels);
    in = b.channels;
  }
  return f + mm(N, in, e);
}

Count encoder_flops(const ModelConfig& c, Count S) {
  switch (c.encoder.family) {
    case Family::rnmt_plus: return rnmt_encoder_flops(c.encoder, S);
    case Family::transformer: return transformer_stack_flops(c.encoder, S, S, 0, false);
    case Family::convs2s: return conv_stack_flops(c.encoder, S, S, false);
    case Family::cascaded:
      return rnmt_encoder_flops(c.encoder, S) + transformer_stack_flops(c.stacked, S, S, 0, false);
    case Family::multi_column:
      return rnmt_encoder_flops(c.encoder, S) + transformer_stack_flops(c.stacked, S, S, 0, false) +
             mm(S, c.encoder.model_dim + c.stacked.model_dim, c.decoder.model_dim);
  }
  return 0;
}

Count decoder_flops(const ModelConfig& c, Count S, Count T) {
  const StackConfig& s = c.decoder;
  const Count d = s.model_dim, memory = encoder_output_dim(c), V = c.vocab_size;
  switch (s.family) {
    case Family::rnmt_plus: {
      const bool proj = c.attention_output_projection;
      const Count context = proj ? d : memory;
      Count f = 0;
      for (Count l = 0; l < s.layers; ++l) f += lstm_flops(T, l == 0 ? d : d + context, d);
      f += mm(S, memory, d) + mm(T, d, d) + 2 * T * S * d + 2 * T * S * memory;
      if (proj) f += mm(T, memory, d);
      return f + mm(T, c.feed_context_to_softmax ? d + context : d, V);
    }
    case Family::transformer: return transformer_stack_flops(s, T, S, memory, true) + mm(T, d, V);
    case Family::convs2s: return conv_stack_flops(s, T, S, true) + mm(T, s.model_dim, V);
    default: break;
  }
  fail(ErrorKind::ConfigInvalid, "unsupported decoder family");
}

}  // namespace

std::size_t count_params(const ModelConfig& config) {
  config.validate();
  return encoder_params(config) + decoder_params(config);
}

std::size_t count_flops(const ModelConfig& config, std::size_t source_length, std::size_t target_length) {
  config.validate();
  if (source_length == 0 || target_length == 0) fail(ErrorKind::ConfigInvalid, "sequence lengths must be positive");
  return encoder_flops(config, source_length) + decoder_flops(config, source_length, target_length);
}

std::string counting_conventions() {
  return "parameters: separate source and target embeddings; softmax weights not tied; all biases, layer-norm "
         "gains/biases and weight-norm scales counted; learned position tables counted; sinusoidal positions free\n"
         "flops: 2 per multiply-add over matmuls, convolutions and attention score/context products, one "
         "teacher-forced forward pass; nonlinearities, softmax and layer norm excluded";
}

}  // namespace s2s::decode
