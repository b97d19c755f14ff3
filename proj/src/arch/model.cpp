// SPDX-License-Identifier: Apache-2.0
#include <functional>

#include "internal.hpp"
#include "s2s/errors.hpp"

namespace s2s::arch {

using namespace detail;

EncoderOutput EncoderOutput::gather(std::span<const std::size_t> rows) const {
  EncoderOutput out;
  out.features = ops::gather_rows(features, rows);
  if (values.defined()) out.values = ops::gather_rows(values, rows);
  for (const auto& c : columns) out.columns.push_back(ops::gather_rows(c, rows));
  out.batch = rows.size();
  out.length = length;
  out.valid.reserve(rows.size() * length);
  for (std::size_t r : rows)
    out.valid.insert(out.valid.end(), valid.begin() + static_cast<std::ptrdiff_t>(r * length),
                     valid.begin() + static_cast<std::ptrdiff_t>((r + 1) * length));
  return out;
}

Model::Model(ModelConfig config, std::unique_ptr<ParamStore> params, std::unique_ptr<Encoder> encoder,
             std::unique_ptr<Decoder> decoder)
    : config_(std::move(config)),
      params_(std::move(params)),
      encoder_(std::move(encoder)),
      decoder_(std::move(decoder)) {}

Tensor Model::logits(const data::Batch& batch, const nn::ForwardContext& ctx) const {
  return decoder_->logits(encode(batch.source, ctx), batch.target_in, ctx);
}

Tensor Model::step(DecoderState& state, std::span<const int> tokens) const {
  return ops::log_softmax(decoder_->step(state, tokens));
}

namespace {

using EncoderFactory = std::function<std::unique_ptr<Encoder>(ParamStore&)>;

std::unique_ptr<Model> assemble(const ModelConfig& config, Rng& rng, const EncoderFactory& make_encoder) {
  config.validate();
  auto store = std::make_unique<ParamStore>();
  auto encoder = make_encoder(*store);
  const std::size_t memory = encoder->output_dim();
  std::unique_ptr<Decoder> decoder;
  switch (config.decoder.family) {
    case Family::rnmt_plus: decoder = std::make_unique<RnmtDecoder>(*store, config, memory, rng); break;
    case Family::transformer: decoder = std::make_unique<TransformerDecoder>(*store, config, memory, rng); break;
    case Family::convs2s: decoder = std::make_unique<ConvDecoder>(*store, config, memory, rng); break;
    default: fail(ErrorKind::ConfigInvalid, "unsupported decoder family");
  }
  return std::make_unique<Model>(config, std::move(store), std::move(encoder), std::move(decoder));
}

std::unique_ptr<Encoder> plain_encoder(ParamStore& store, const ModelConfig& config, Rng& rng) {
  switch (config.encoder.family) {
    case Family::rnmt_plus: return std::make_unique<RnmtEncoder>(store, "encoder", config, config.encoder, rng);
    case Family::transformer:
      return std::make_unique<TransformerEncoder>(store, "encoder", config, config.encoder, rng);
    case Family::convs2s: return std::make_unique<ConvEncoder>(store, "encoder", config, config.encoder, rng);
    default: fail(ErrorKind::ConfigInvalid, "encoder family needs pretrained columns");
  }
}

// Copies "encoder.<rest>" from a source model into "<prefix>.<rest>".
void load_encoder(ParamStore& store, const TensorMap& source, const std::string& prefix) {
  std::size_t loaded = 0;
  for (const auto& p : store.all()) {
    if (p.name.rfind(prefix + ".", 0) != 0) continue;
    const std::string from = "encoder." + p.name.substr(prefix.size() + 1);
    const auto it = source.find(from);
    if (it == source.end())
      fail(ErrorKind::CheckpointIncompatible, "pretrained encoder lacks '" + from + "' for '" + p.name + "'");
    if (it->second.size() != p.tensor.numel())
      fail(ErrorKind::CheckpointIncompatible, "pretrained '" + from + "' has " + std::to_string(it->second.size()) +
                                                  " values, '" + p.name + "' needs " +
                                                  std::to_string(p.tensor.numel()));
    Tensor t = p.tensor;
    std::copy(it->second.begin(), it->second.end(), t.data_mut().begin());
    ++loaded;
  }
  if (loaded == 0) fail(ErrorKind::CheckpointIncompatible, "no parameters under '" + prefix + "'");
}

void require_family(const ModelConfig& config, Family encoder, Family decoder, const char* builder) {
  if (config.encoder.family != encoder || config.decoder.family != decoder)
    fail(ErrorKind::ConfigInvalid, std::string(builder) + " called with " + to_string(config.encoder.family) + "/" +
                                       to_string(config.decoder.family) + " config");
}

}  // namespace

std::unique_ptr<Model> build_rnmt_plus(const ModelConfig& config, Rng& rng) {
  require_family(config, Family::rnmt_plus, Family::rnmt_plus, "build_rnmt_plus");
  return assemble(config, rng, [&](ParamStore& s) { return plain_encoder(s, config, rng); });
}

std::unique_ptr<Model> build_transformer(const ModelConfig& config, Rng& rng) {
  require_family(config, Family::transformer, Family::transformer, "build_transformer");
  return assemble(config, rng, [&](ParamStore& s) { return plain_encoder(s, config, rng); });
}

std::unique_ptr<Model> build_convs2s_mini(const ModelConfig& config, Rng& rng) {
  require_family(config, Family::convs2s, Family::convs2s, "build_convs2s_mini");
  return assemble(config, rng, [&](ParamStore& s) { return plain_encoder(s, config, rng); });
}

std::unique_ptr<Model> build_hybrid(Family encoder_family, Family decoder_family, const ModelConfig& config,
                                    Rng& rng) {
  const bool supported = (encoder_family == Family::rnmt_plus || encoder_family == Family::transformer) &&
                         (decoder_family == Family::rnmt_plus || decoder_family == Family::transformer);
  if (!supported)
    fail(ErrorKind::ConfigInvalid, std::string("no hybrid of ") + to_string(encoder_family) + " encoder and " +
                                       to_string(decoder_family) + " decoder");
  ModelConfig c = config;
  c.encoder.family = encoder_family;
  c.decoder.family = decoder_family;
  return assemble(c, rng, [&](ParamStore& s) { return plain_encoder(s, c, rng); });
}

std::unique_ptr<Model> build_cascaded_encoder(const ModelConfig& config, Rng& rng, const TensorMap* rnmt_encoder) {
  if (rnmt_encoder == nullptr)
    fail(ErrorKind::MissingPretrainedEncoder, "cascaded encoder needs a pretrained RNMT+ encoder");
  require_family(config, Family::cascaded, Family::rnmt_plus, "build_cascaded_encoder");
  auto model = assemble(config, rng, [&](ParamStore& s) { return std::make_unique<CascadedEncoder>(s, "encoder", config, rng); });
  load_encoder(model->params(), *rnmt_encoder, "encoder.rnmt");
  if (config.freeze_pretrained) model->params().freeze("encoder.rnmt.");
  return model;
}

std::unique_ptr<Model> build_multi_column_encoder(const ModelConfig& config, Rng& rng, const TensorMap* rnmt_encoder,
                                                  const TensorMap* transformer_encoder) {
  if (rnmt_encoder == nullptr || transformer_encoder == nullptr)
    fail(ErrorKind::MissingPretrainedEncoder, "multi-column encoder needs pretrained RNMT+ and Transformer encoders");
  require_family(config, Family::multi_column, Family::rnmt_plus, "build_multi_column_encoder");
  auto model =
      assemble(config, rng, [&](ParamStore& s) { return std::make_unique<MultiColumnEncoder>(s, "encoder", config, rng); });
  load_encoder(model->params(), *rnmt_encoder, "encoder.column0");
  load_encoder(model->params(), *transformer_encoder, "encoder.column1");
  if (config.freeze_pretrained) {
    model->params().freeze("encoder.column0.");
    model->params().freeze("encoder.column1.");
  }
  return model;
}

std::unique_ptr<Model> build_model(const ModelConfig& config, Rng& rng, const Pretrained& pretrained) {
  const Family e = config.encoder.family, d = config.decoder.family;
  if (e == Family::cascaded) return build_cascaded_encoder(config, rng, pretrained.rnmt_encoder);
  if (e == Family::multi_column)
    return build_multi_column_encoder(config, rng, pretrained.rnmt_encoder, pretrained.transformer_encoder);
  if (e == d) {
    if (e == Family::rnmt_plus) return build_rnmt_plus(config, rng);
    if (e == Family::transformer) return build_transformer(config, rng);
    return build_convs2s_mini(config, rng);
  }
  return build_hybrid(e, d, config, rng);
}

double LossResult::normalizer() const {
  return static_cast<double>(sentence_level ? sentences : tokens);
}

LossResult forward_loss(const Model& model, const data::Batch& batch, const nn::ForwardContext& ctx) {
  LossResult result;
  result.tokens = batch.target_tokens();
  result.sentences = batch.sentences();
  result.sentence_level = model.config().sentence_level_loss();
  if (result.tokens == 0) fail(ErrorKind::EmptyBatch, "batch has no target tokens");
  const Tensor logits = model.logits(batch, ctx);
  const std::size_t rows = logits.dim(0) * logits.dim(1);
  const Tensor flat = ops::reshape(logits, {rows, logits.dim(2)});
  const double scale = 1.0 / result.normalizer();
  std::vector<double> weights(rows);
  for (std::size_t i = 0; i < rows; ++i) weights[i] = batch.target_out.valid[i] * scale;
  result.loss = ops::label_smoothed_ce(flat, batch.target_out.ids, weights, model.config().label_smoothing);
  return result;
}

Tensor cascaded_stack(const Model& model, const Tensor& input, std::span<const double> valid,
                      const nn::ForwardContext& ctx) {
  const auto* enc = dynamic_cast<const CascadedEncoder*>(&model.encoder());
  if (enc == nullptr) fail(ErrorKind::ConfigInvalid, "model has no cascaded encoder");
  return enc->stack(input, valid, ctx);
}

Tensor merge_columns(const Model& model, const Tensor& rnmt_column, const Tensor& transformer_column) {
  const auto* enc = dynamic_cast<const MultiColumnEncoder*>(&model.encoder());
  if (enc == nullptr) fail(ErrorKind::ConfigInvalid, "model has no multi-column encoder");
  return enc->merge(rnmt_column, transformer_column);
}

}  // namespace s2s::arch
