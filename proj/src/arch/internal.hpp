// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "s2s/arch.hpp"

namespace s2s::arch::detail {

Tensor embed(const Tensor& table, const data::TokenMatrix& tokens);
// Zeroes padded time steps of x [B,T,d].
Tensor mask_time(const Tensor& x, std::span<const double> valid);
nn::LstmOptions lstm_options(const ModelConfig& config);
std::vector<ConvLayerSpec> conv_layers(const StackConfig& stack);
double embedding_limit(std::size_t dim);

class RnmtEncoder final : public Encoder {
 public:
  RnmtEncoder(ParamStore& store, const std::string& prefix, const ModelConfig& config, const StackConfig& stack,
              Rng& rng);
  EncoderOutput encode(const data::TokenMatrix& source, const nn::ForwardContext& ctx) const override;
  std::size_t output_dim() const override { return projection_.out(); }

 private:
  Tensor embedding_;
  std::vector<nn::BiLstmLayer> layers_;
  nn::Linear projection_;
  nn::DropoutSpec dropout_;
  std::size_t residual_start_;
};

struct TransformerLayer {
  nn::LayerNorm self_norm, cross_norm, ffn_norm;
  nn::DotAttention self_attention, cross_attention;
  nn::FeedForward ffn;
};

// Pre-norm layers followed by a final layer norm.
class TransformerStack {
 public:
  TransformerStack() = default;
  TransformerStack(ParamStore& store, const std::string& prefix, const StackConfig& stack, std::size_t memory_dim,
                   bool cross_attention, bool layer_norm, const nn::DropoutSpec& dropout, Rng& rng);
  Tensor forward(const Tensor& x, std::span<const double> valid, const EncoderOutput* memory, bool causal,
                 const nn::ForwardContext& ctx) const;

 private:
  std::vector<TransformerLayer> layers_;
  nn::LayerNorm final_norm_;
  nn::DropoutSpec dropout_;
};

class TransformerEncoder final : public Encoder {
 public:
  TransformerEncoder(ParamStore& store, const std::string& prefix, const ModelConfig& config,
                     const StackConfig& stack, Rng& rng);
  EncoderOutput encode(const data::TokenMatrix& source, const nn::ForwardContext& ctx) const override;
  std::size_t output_dim() const override { return dim_; }

 private:
  Tensor embedding_;
  TransformerStack stack_;
  std::size_t dim_;
  double input_dropout_;
};

struct ConvBlock {
  nn::ConvGlu conv;
  nn::WeightNormLinear residual;
  bool project_residual = false;
  nn::WeightNormLinear attention_in, attention_out;
};

class ConvEncoder final : public Encoder {
 public:
  ConvEncoder(ParamStore& store, const std::string& prefix, const ModelConfig& config, const StackConfig& stack,
              Rng& rng);
  EncoderOutput encode(const data::TokenMatrix& source, const nn::ForwardContext& ctx) const override;
  std::size_t output_dim() const override { return dim_; }

 private:
  Tensor embedding_;
  nn::LearnedPositions positions_;
  nn::WeightNormLinear input_projection_, output_projection_;
  std::vector<ConvBlock> blocks_;
  std::size_t dim_;
  nn::DropoutSpec dropout_;
};

class CascadedEncoder final : public Encoder {
 public:
  CascadedEncoder(ParamStore& store, const std::string& prefix, const ModelConfig& config, Rng& rng);
  EncoderOutput encode(const data::TokenMatrix& source, const nn::ForwardContext& ctx) const override;
  std::size_t output_dim() const override { return base_.output_dim(); }
  Tensor stack(const Tensor& input, std::span<const double> valid, const nn::ForwardContext& ctx) const;

 private:
  RnmtEncoder base_;
  nn::LayerNorm input_norm_;
  TransformerStack stack_;
};

class MultiColumnEncoder final : public Encoder {
 public:
  MultiColumnEncoder(ParamStore& store, const std::string& prefix, const ModelConfig& config, Rng& rng);
  EncoderOutput encode(const data::TokenMatrix& source, const nn::ForwardContext& ctx) const override;
  std::size_t output_dim() const override { return merge_.out(); }
  Tensor merge(const Tensor& rnmt_column, const Tensor& transformer_column) const;

 private:
  RnmtEncoder rnmt_;
  TransformerEncoder transformer_;
  nn::LayerNorm rnmt_norm_, output_norm_;
  nn::Linear merge_;
};

class RnmtDecoder final : public Decoder {
 public:
  RnmtDecoder(ParamStore& store, const ModelConfig& config, std::size_t memory_dim, Rng& rng);
  Tensor logits(const EncoderOutput& enc, const data::TokenMatrix& target_in,
                const nn::ForwardContext& ctx) const override;
  std::unique_ptr<DecoderState> start(const EncoderOutput& enc) const override;
  Tensor step(DecoderState& state, std::span<const int> tokens) const override;

 private:
  Tensor output(const Tensor& top, const Tensor& context) const;

  Tensor embedding_;
  std::vector<nn::LstmLayer> layers_;
  nn::AdditiveAttention attention_;
  nn::Linear softmax_;
  nn::DropoutSpec dropout_;
  std::size_t residual_start_;
  bool feed_context_;
};

class TransformerDecoder final : public Decoder {
 public:
  TransformerDecoder(ParamStore& store, const ModelConfig& config, std::size_t memory_dim, Rng& rng);
  Tensor logits(const EncoderOutput& enc, const data::TokenMatrix& target_in,
                const nn::ForwardContext& ctx) const override;
  std::unique_ptr<DecoderState> start(const EncoderOutput& enc) const override;
  Tensor step(DecoderState& state, std::span<const int> tokens) const override;

 private:
  Tensor embedding_;
  TransformerStack stack_;
  nn::Linear softmax_;
  std::size_t dim_;
  double input_dropout_;
};

class ConvDecoder final : public Decoder {
 public:
  ConvDecoder(ParamStore& store, const ModelConfig& config, std::size_t memory_dim, Rng& rng);
  Tensor logits(const EncoderOutput& enc, const data::TokenMatrix& target_in,
                const nn::ForwardContext& ctx) const override;
  std::unique_ptr<DecoderState> start(const EncoderOutput& enc) const override;
  Tensor step(DecoderState& state, std::span<const int> tokens) const override;

 private:
  Tensor embedding_;
  nn::LearnedPositions positions_;
  nn::WeightNormLinear input_projection_, output_projection_;
  std::vector<ConvBlock> blocks_;
  nn::Linear softmax_;
  nn::DropoutSpec dropout_;
  double grad_scale_;
};

// Recomputes the whole prefix at every step; used by the non-recurrent
// decoders.
class PrefixState final : public DecoderState {
 public:
  explicit PrefixState(EncoderOutput enc);
  void reorder(std::span<const std::size_t> rows) override;
  std::size_t rows() const override { return enc.batch; }
  void append(std::span<const int> tokens);
  data::TokenMatrix prefix() const;

  EncoderOutput enc;
  std::vector<std::vector<int>> tokens;
};

}  // namespace s2s::arch::detail
