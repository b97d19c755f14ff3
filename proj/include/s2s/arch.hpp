// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "s2s/data.hpp"
#include "s2s/nn.hpp"
#include "s2s/params.hpp"
#include "s2s/tensor.hpp"

namespace s2s::arch {

// Stack families. cascaded and multi_column are encoder-only.
enum class Family { rnmt_plus, transformer, convs2s, cascaded, multi_column };

Family parse_family(const std::string& name);
const char* to_string(Family family);

struct ConvLayerSpec {
  std::size_t channels = 0;
  std::size_t width = 3;
};

struct StackConfig {
  Family family = Family::rnmt_plus;
  std::size_t layers = 2;
  // LSTM units / d_model / convolutional embedding size.
  std::size_t model_dim = 64;
  // Transformer feed-forward width.
  std::size_t hidden_dim = 256;
  std::size_t heads = 4;
  // ConvS2S only; empty means `layers` blocks of model_dim channels, width 3.
  std::vector<ConvLayerSpec> conv_layers;
};

enum class LossNormalization { automatic, sentence, token };

struct ModelConfig {
  StackConfig encoder;
  StackConfig decoder;
  std::size_t vocab_size = 16;
  std::size_t residual_start_layer = 3;
  nn::DropoutSpec dropout;
  double label_smoothing = 0.1;
  LossNormalization loss_normalization = LossNormalization::automatic;
  bool feed_context_to_softmax = true;
  bool layer_norm = true;
  bool raw_output_gate = false;
  bool attention_output_projection = true;
  // ConvS2S encoder gradient factor; negative means 1 / (2 * decoder layers).
  double encoder_grad_scale = -1.0;
  std::size_t max_positions = 256;
  // Cascaded: the Transformer layers stacked on the RNMT+ encoder (encoder
  // holds the RNMT+ part). Multi-column: the second column's shape.
  StackConfig stacked{Family::transformer, 4, 64, 256, 4, {}};
  // Pretrained encoder parameters stay fixed during training.
  bool freeze_pretrained = true;

  // rnmt_plus | transformer | convs2s | hybrid | cascaded | multi_column
  std::string family_name() const;
  bool sentence_level_loss() const;
  // Throws ConfigInvalid on inconsistent settings.
  void validate() const;
};

// Canonical parameter values keyed by name, as read from a checkpoint.
using TensorMap = std::map<std::string, std::vector<double>>;

// Encoder parameters of previously trained models, for the cascaded and
// multi-column families. Each map holds a whole source model's parameters.
struct Pretrained {
  const TensorMap* rnmt_encoder = nullptr;         // from an RNMT+ model
  const TensorMap* transformer_encoder = nullptr;  // from a Transformer-encoder model
};

struct EncoderOutput {
  Tensor features;          // [B, S, d], keys for attention
  Tensor values;            // ConvS2S only: features + embeddings
  std::vector<double> valid;  // B*S flags
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<Tensor> columns;  // multi-column: raw per-column outputs

  EncoderOutput gather(std::span<const std::size_t> rows) const;
};

class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual EncoderOutput encode(const data::TokenMatrix& source, const nn::ForwardContext& ctx) const = 0;
  virtual std::size_t output_dim() const = 0;
};

// Per-row incremental decoding state.
class DecoderState {
 public:
  virtual ~DecoderState() = default;
  // Row i of the new state is row rows[i] of the old one; rows may repeat.
  virtual void reorder(std::span<const std::size_t> rows) = 0;
  virtual std::size_t rows() const = 0;
};

class Decoder {
 public:
  virtual ~Decoder() = default;
  // Teacher-forced logits [B, T, V] for target_in.
  virtual Tensor logits(const EncoderOutput& enc, const data::TokenMatrix& target_in,
                        const nn::ForwardContext& ctx) const = 0;
  virtual std::unique_ptr<DecoderState> start(const EncoderOutput& enc) const = 0;
  // Feeds one token per row; returns next-token logits [rows, V].
  virtual Tensor step(DecoderState& state, std::span<const int> tokens) const = 0;
};

class Model {
 public:
  Model(ModelConfig config, std::unique_ptr<ParamStore> params, std::unique_ptr<Encoder> encoder,
        std::unique_ptr<Decoder> decoder);

  const ModelConfig& config() const noexcept { return config_; }
  ParamStore& params() noexcept { return *params_; }
  const ParamStore& params() const noexcept { return *params_; }
  const Encoder& encoder() const noexcept { return *encoder_; }
  const Decoder& decoder() const noexcept { return *decoder_; }

  EncoderOutput encode(const data::TokenMatrix& source, const nn::ForwardContext& ctx) const {
    return encoder_->encode(source, ctx);
  }
  Tensor logits(const data::Batch& batch, const nn::ForwardContext& ctx) const;
  std::unique_ptr<DecoderState> start(const EncoderOutput& enc) const { return decoder_->start(enc); }
  // Next-token log-probabilities [rows, V].
  Tensor step(DecoderState& state, std::span<const int> tokens) const;

 private:
  ModelConfig config_;
  std::unique_ptr<ParamStore> params_;
  std::unique_ptr<Encoder> encoder_;
  std::unique_ptr<Decoder> decoder_;
};

// Builds any supported family. Pretrained encoders are required by the
// cascaded and multi-column families (MissingPretrainedEncoder otherwise).
std::unique_ptr<Model> build_model(const ModelConfig& config, Rng& rng, const Pretrained& pretrained = {});

std::unique_ptr<Model> build_rnmt_plus(const ModelConfig& config, Rng& rng);
std::unique_ptr<Model> build_transformer(const ModelConfig& config, Rng& rng);
std::unique_ptr<Model> build_convs2s_mini(const ModelConfig& config, Rng& rng);
std::unique_ptr<Model> build_hybrid(Family encoder_family, Family decoder_family, const ModelConfig& config,
                                    Rng& rng);
std::unique_ptr<Model> build_cascaded_encoder(const ModelConfig& config, Rng& rng, const TensorMap* rnmt_encoder);
std::unique_ptr<Model> build_multi_column_encoder(const ModelConfig& config, Rng& rng, const TensorMap* rnmt_encoder,
                                                  const TensorMap* transformer_encoder);

struct LossResult {
  Tensor loss;
  std::size_t tokens = 0;
  std::size_t sentences = 0;
  // Weight of this batch when averaging gradients across replicas.
  double normalizer() const;
  bool sentence_level = false;
};

// Teacher-forced label-smoothed cross-entropy; padding excluded.
// Sentence-level: sum over tokens / sentences. Token-level: / tokens.
LossResult forward_loss(const Model& model, const data::Batch& batch, const nn::ForwardContext& ctx);

// Exposed stages of the hybrid encoders, for structural checks.
// Transformer layers + final norm applied to an arbitrary [B,S,d] input,
// exactly as the cascaded encoder applies them to its normalized RNMT+ output.
Tensor cascaded_stack(const Model& model, const Tensor& input, std::span<const double> valid,
                      const nn::ForwardContext& ctx);
// LN(Affine(concat(LN(rnmt), transformer))) from raw column outputs.
Tensor merge_columns(const Model& model, const Tensor& rnmt_column, const Tensor& transformer_column);

}  // namespace s2s::arch
