// SPDX-License-Identifier: Apache-2.0
#include "s2s/arch.hpp"
#include "s2s/errors.hpp"

namespace s2s::arch {

Family parse_family(const std::string& name) {
  if (name == "rnmt_plus") return Family::rnmt_plus;
  if (name == "transformer") return Family::transformer;
  if (name == "convs2s") return Family::convs2s;
  if (name == "cascaded") return Family::cascaded;
  if (name == "multi_column") return Family::multi_column;
  fail(ErrorKind::ConfigInvalid, "unknown model family '" + name + "'");
}

const char* to_string(Family family) {
  switch (family) {
    case Family::rnmt_plus: return "rnmt_plus";
    case Family::transformer: return "transformer";
    case Family::convs2s: return "convs2s";
    case Family::cascaded: return "cascaded";
    case Family::multi_column: return "multi_column";
  }
  return "?";
}

std::string ModelConfig::family_name() const {
  if (encoder.family == Family::cascaded || encoder.family == Family::multi_column) return to_string(encoder.family);
  if (encoder.family == decoder.family) return to_string(encoder.family);
  return "hybrid";
}

bool ModelConfig::sentence_level_loss() const {
  switch (loss_normalization) {
    case LossNormalization::sentence: return true;
    case LossNormalization::token: return false;
    case LossNormalization::automatic: break;
  }
  return decoder.family == Family::rnmt_plus;
}

namespace {

void invalid(const std::string& message) { fail(ErrorKind::ConfigInvalid, message); }

void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p < 1.0)) invalid(std::string(what) + " must lie in [0, 1), got " + std::to_string(p));
}

void check_stack(const StackConfig& s, const char* side) {
  const std::string where(side);
  if (s.layers == 0) invalid(where + " needs at least one layer");
  if (s.model_dim == 0) invalid(where + " model_dim must be positive");
  if (s.heads == 0) invalid(where + " needs at least one head");
  if (s.family == Family::transformer) {
    if (s.model_dim % s.heads != 0)
      invalid(where + " model_dim " + std::to_string(s.model_dim) + " not divisible by " + std::to_string(s.heads) +
              " heads");
    if (s.hidden_dim == 0) invalid(where + " hidden_dim must be positive");
  }
  if (s.family == Family::convs2s)
    for (const auto& c : s.conv_layers)
      if (c.channels == 0 || c.width == 0) invalid(where + " convolution blocks need positive channels and width");
}

std::size_t rnmt_memory_dim(const ModelConfig& c) {
  switch (c.encoder.family) {
    case Family::multi_column: return c.decoder.model_dim;
    default: return c.encoder.model_dim;
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size <= data::kReserved) invalid("vocab_size must exceed the " + std::to_string(data::kReserved) +
                                             " reserved ids");
  if (residual_start_layer < 1) invalid("residual_start_layer must be at least 1");
  check_probability(dropout.input, "input dropout");
  check_probability(dropout.residual, "residual dropout");
  check_probability(dropout.relu, "relu dropout");
  check_probability(dropout.attention, "attention dropout");
  check_probability(label_smoothing, "label_smoothing");
  if (max_positions == 0) invalid("max_positions must be positive");
  check_stack(encoder, "encoder");
  check_stack(decoder, "decoder");

  const Family e = encoder.family, d = decoder.family;
  if (d == Family::cascaded || d == Family::multi_column) invalid(std::string(to_string(d)) + " is encoder-only");
  if ((e == Family::convs2s) != (d == Family::convs2s))
    invalid("convolutional stacks only pair with each other, got " + std::string(to_string(e)) + " encoder and " +
            to_string(d) + " decoder");
  if (e == Family::convs2s && encoder.model_dim != decoder.model_dim)
    invalid("convolutional encoder and decoder embeddings differ");
  if ((e == Family::cascaded || e == Family::multi_column) && d != Family::rnmt_plus)
    invalid(std::string(to_string(e)) + " encoder requires an rnmt_plus decoder");
  if (e == Family::cascaded || e == Family::multi_column) {
    if (stacked.family != Family::transformer) invalid("stacked encoder layers must be transformer");
    check_stack(stacked, "stacked");
  }
  if (e == Family::cascaded && stacked.model_dim != encoder.model_dim)
    invalid("cascaded transformer layers need model_dim " + std::to_string(encoder.model_dim));
  if (d == Family::rnmt_plus) {
    if (decoder.model_dim % decoder.heads != 0)
      invalid("decoder attention dim " + std::to_string(decoder.model_dim) + " not divisible by " +
              std::to_string(decoder.heads) + " heads");
    const std::size_t memory = e == Family::transformer ? encoder.model_dim : rnmt_memory_dim(*this);
    if (memory % decoder.heads != 0)
      invalid("encoder output dim " + std::to_string(memory) + " not divisible by " + std::to_string(decoder.heads) +
              " attention heads");
  }
}

}  // namespace s2s::arch
