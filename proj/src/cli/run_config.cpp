// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>
#include <set>

#include "s2s/cli.hpp"
#include "s2s/errors.hpp"

namespace s2s::cli {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void invalid(const std::string& message) { fail(ErrorKind::ConfigInvalid, message); }

// Reads keys off one JSON object and rejects whatever is left unread.
class Fields {
 public:
  Fields(const Json& json, std::string where) : json_(json), where_(std::move(where)) {
    if (!json_.is_object()) invalid(where_ + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    const Json* value = find(key);
    if (value == nullptr) return;
    try {
      out = value->get<T>();
    } catch (const nlohmann::json::exception&) {
      invalid(where_ + "." + key + " has the wrong type");
    }
  }

  const Json* child(const char* key) { return find(key); }

  void finish() const {
    for (const auto& item : json_.items())
      if (!seen_.count(item.key())) invalid("unknown key '" + where_ + "." + item.key() + "'");
  }

 private:
  const Json* find(const char* key) {
    seen_.insert(key);
    const auto it = json_.find(key);
    return it == json_.end() ? nullptr : &*it;
  }

  const Json& json_;
  std::string where_;
  std::set<std::string> seen_;
};

// Unsigned reads reject negative and fractional numbers.
bool non_negative_integer(const Json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

void get_count(Fields& f, const char* key, std::size_t& out, const std::string& where) {
  const Json* value = f.child(key);
  if (value == nullptr) return;
  if (!non_negative_integer(*value)) invalid(where + "." + key + " must be a non-negative integer");
  out = value->get<std::size_t>();
}

void get_u64(Fields& f, const char* key, std::uint64_t& out, const std::string& where) {
  const Json* value = f.child(key);
  if (value == nullptr) return;
  if (!non_negative_integer(*value)) invalid(where + "." + key + " must be a non-negative integer");
  out = value->get<std::uint64_t>();
}

arch::StackConfig parse_stack(const Json& json, const std::string& where, arch::StackConfig stack) {
  Fields f(json, where);
  std::string family = arch::to_string(stack.family);
  f.get("family", family);
  stack.family = arch::parse_family(family);
  get_count(f, "layers", stack.layers, where);
  get_count(f, "model_dim", stack.model_dim, where);
  get_count(f, "hidden_dim", stack.hidden_dim, where);
  get_count(f, "heads", stack.heads, where);
  if (const Json* blocks = f.child("conv_layers")) {
    if (!blocks->is_array()) invalid(where + ".conv_layers must be an array");
    stack.conv_layers.clear();
    for (std::size_t i = 0; i < blocks->size(); ++i) {
      const std::string at = where + ".conv_layers[" + std::to_string(i) + "]";
      Fields b((*blocks)[i], at);
      arch::ConvLayerSpec spec;
      get_count(b, "channels", spec.channels, at);
      get_count(b, "width", spec.width, at);
      b.finish();
      stack.conv_layers.push_back(spec);
    }
  }
  f.finish();
  return stack;
}

Json stack_json(const arch::StackConfig& s) {
  Json j = {{"family", arch::to_string(s.family)},
            {"layers", s.layers},
            {"model_dim", s.model_dim},
            {"hidden_dim", s.hidden_dim},
            {"heads", s.heads}};
  if (!s.conv_layers.empty()) {
    Json blocks = Json::array();
    for (const auto& c : s.conv_layers) blocks.push_back({{"channels", c.channels}, {"width", c.width}});
    j["conv_layers"] = blocks;
  }
  return j;
}

const char* to_string(arch::LossNormalization n) {
  switch (n) {
    case arch::LossNormalization::automatic: return "automatic";
    case arch::LossNormalization::sentence: return "sentence";
    case arch::LossNormalization::token: return "token";
  }
  return "?";
}

arch::LossNormalization parse_normalization(const std::string& name) {
  if (name == "automatic") return arch::LossNormalization::automatic;
  if (name == "sentence") return arch::LossNormalization::sentence;
  if (name == "token") return arch::LossNormalization::token;
  invalid("unknown loss_normalization '" + name + "'");
}

std::string resolve(const std::string& path, const std::string& base_dir) {
  if (path.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base_dir) / path).lexically_normal().string();
}

void parse_task(const Json& json, DataConfig& data) {
  const std::string where = "data.task";
  Fields f(json, where);
  std::string kind = data::to_string(data.task.kind);
  f.get("kind", kind);
  data.task.kind = data::parse_task_kind(kind);
  get_count(f, "count", data.task.count, where);
  get_count(f, "min_length", data.task.min_length, where);
  get_count(f, "max_length", data.task.max_length, where);
  get_count(f, "vocab_size", data.task.vocab_size, where);
  get_u64(f, "seed", data.task.seed, where);
  get_count(f, "multiplier", data.task.multiplier, where);
  get_count(f, "offset", data.task.offset, where);
  f.finish();
}

void parse_schedule(const Json& json, optim::LearningRate& lr, bool& replicas_given) {
  Fields f(json, "schedule");
  std::string kind = "constant";
  f.get("kind", kind);
  if (kind == "constant") {
    lr.kind = optim::ScheduleKind::constant;
    f.get("lr", lr.constant);
  } else if (kind == "rnmt") {
    lr.kind = optim::ScheduleKind::rnmt;
    f.get("base", lr.rnmt.base);
    replicas_given = f.child("replicas") != nullptr;
    f.get("replicas", lr.rnmt.replicas);
    f.get("warmup", lr.rnmt.warmup);
    f.get("decay_start", lr.rnmt.decay_start);
    f.get("decay_end", lr.rnmt.decay_end);
    f.get("floor", lr.rnmt.floor);
  } else if (kind == "transformer") {
    lr.kind = optim::ScheduleKind::transformer;
    f.get("r0", lr.transformer.r0);
    f.get("warmup", lr.transformer.warmup);
    lr.transformer.model_dim = 0.0;
    f.get("model_dim", lr.transformer.model_dim);
  } else {
    invalid("unknown schedule kind '" + kind + "'");
  }
  f.finish();
}

Json schedule_json(const optim::LearningRate& lr) {
  switch (lr.kind) {
    case optim::ScheduleKind::constant: return {{"kind", "constant"}, {"lr", lr.constant}};
    case optim::ScheduleKind::rnmt:
      return {{"kind", "rnmt"},         {"base", lr.rnmt.base},
              {"replicas", lr.rnmt.replicas}, {"warmup", lr.rnmt.warmup},
              {"decay_start", lr.rnmt.decay_start}, {"decay_end", lr.rnmt.decay_end},
              {"floor", lr.rnmt.floor}};
    case optim::ScheduleKind::transformer:
      return {{"kind", "transformer"},
              {"r0", lr.transformer.r0},
              {"warmup", lr.transformer.warmup},
              {"model_dim", lr.transformer.model_dim}};
  }
  return {};
}

}  // namespace

arch::ModelConfig parse_model_config(const Json& json) {
  arch::ModelConfig c;
  Fields f(json, "model");
  if (const Json* j = f.child("encoder")) c.encoder = parse_stack(*j, "model.encoder", c.encoder);
  if (const Json* j = f.child("decoder")) c.decoder = parse_stack(*j, "model.decoder", c.decoder);
  if (const Json* j = f.child("stacked")) c.stacked = parse_stack(*j, "model.stacked", c.stacked);
  get_count(f, "vocab_size", c.vocab_size, "model");
  get_count(f, "residual_start_layer", c.residual_start_layer, "model");
  if (const Json* j = f.child("dropout")) {
    Fields d(*j, "model.dropout");
    d.get("input", c.dropout.input);
    d.get("residual", c.dropout.residual);
    d.get("relu", c.dropout.relu);
    d.get("attention", c.dropout.attention);
    d.finish();
  }
  f.get("label_smoothing", c.label_smoothing);
  std::string norm = to_string(c.loss_normalization);
  f.get("loss_normalization", norm);
  c.loss_normalization = parse_normalization(norm);
  f.get("feed_context_to_softmax", c.feed_context_to_softmax);
  f.get("layer_norm", c.layer_norm);
  f.get("raw_output_gate", c.raw_output_gate);
  f.get("attention_output_projection", c.attention_output_projection);
  f.get("encoder_grad_scale", c.encoder_grad_scale);
  get_count(f, "max_positions", c.max_positions, "model");
  f.get("freeze_pretrained", c.freeze_pretrained);
  f.finish();
  c.validate();
  return c;
}

Json to_json(const arch::ModelConfig& c) {
  return {{"encoder", stack_json(c.encoder)},
          {"decoder", stack_json(c.decoder)},
          {"stacked", stack_json(c.stacked)},
          {"vocab_size", c.vocab_size},
          {"residual_start_layer", c.residual_start_layer},
          {"dropout",
           {{"input", c.dropout.input},
            {"residual", c.dropout.residual},
            {"relu", c.dropout.relu},
            {"attention", c.dropout.attention}}},
          {"label_smoothing", c.label_smoothing},
          {"loss_normalization", to_string(c.loss_normalization)},
          {"feed_context_to_softmax", c.feed_context_to_softmax},
          {"layer_norm", c.layer_norm},
          {"raw_output_gate", c.raw_output_gate},
          {"attention_output_projection", c.attention_output_projection},
          {"encoder_grad_scale", c.encoder_grad_scale},
          {"max_positions", c.max_positions},
          {"freeze_pretrained", c.freeze_pretrained}};
}

RunConfig parse_run_config(const Json& json, const std::string& base_dir) {
  RunConfig r;
  Fields f(json, "config");
  const Json* model = f.child("model");
  if (model == nullptr) invalid("config needs a 'model' section");
  r.model = parse_model_config(*model);
  r.data.task.vocab_size = r.model.vocab_size;

  if (const Json* j = f.child("data")) {
    Fields d(*j, "data");
    if (const Json* task = d.child("task")) parse_task(*task, r.data);
    get_count(d, "dev_count", r.data.dev_count, "data");
    get_u64(d, "dev_seed", r.data.dev_seed, "data");
    if (const Json* corpus = d.child("corpus")) {
      Fields c(*corpus, "data.corpus");
      CorpusPaths paths;
      c.get("train_source", paths.train_source);
      c.get("train_target", paths.train_target);
      c.get("dev_source", paths.dev_source);
      c.get("dev_target", paths.dev_target);
      c.finish();
      for (std::string* p : {&paths.train_source, &paths.train_target, &paths.dev_source, &paths.dev_target}) {
        if (p->empty()) invalid("data.corpus needs train_source, train_target, dev_source and dev_target");
        *p = resolve(*p, base_dir);
      }
      r.data.corpus = paths;
    }
    d.finish();
  }

  if (const Json* j = f.child("batching")) {
    Fields b(*j, "batching");
    std::string mode = "sentences";
    b.get("mode", mode);
    if (mode == "sentences")
      r.batching.mode = BatchingMode::sentences;
    else if (mode == "tokens")
      r.batching.mode = BatchingMode::tokens;
    else
      invalid("unknown batching mode '" + mode + "'");
    get_count(b, "size", r.batching.size, "batching");
    b.finish();
  }

  get_count(f, "replicas", r.replicas, "config");

  bool schedule_replicas = false;
  if (const Json* j = f.child("schedule")) parse_schedule(*j, r.trainer.schedule, schedule_replicas);
  if (r.trainer.schedule.kind == optim::ScheduleKind::rnmt && !schedule_replicas)
    r.trainer.schedule.rnmt.replicas = static_cast<double>(r.replicas);
  if (r.trainer.schedule.kind == optim::ScheduleKind::transformer && r.trainer.schedule.transformer.model_dim == 0.0)
    r.trainer.schedule.transformer.model_dim = static_cast<double>(r.model.decoder.model_dim);

  if (const Json* j = f.child("adam")) {
    Fields a(*j, "adam");
    a.get("beta1", r.trainer.adam.beta1);
    a.get("beta2", r.trainer.adam.beta2);
    a.get("epsilon", r.trainer.adam.epsilon);
    a.get("weight_decay", r.trainer.adam.weight_decay);
    a.finish();
  }
  if (const Json* j = f.child("clip")) {
    Fields c(*j, "clip");
    c.get("enabled", r.trainer.clip.enabled);
    c.get("decay", r.trainer.clip.decay);
    get_count(c, "warmup_steps", r.trainer.clip.warmup_steps, "clip");
    c.get("threshold", r.trainer.clip.threshold);
    c.finish();
  }
  if (const Json* j = f.child("training")) {
    Fields t(*j, "training");
    get_count(t, "steps", r.training.steps, "training");
    get_count(t, "eval_every", r.training.eval_every, "training");
    get_count(t, "eval_window", r.training.eval_window, "training");
    get_count(t, "eval_sentences", r.training.eval_sentences, "training");
    get_count(t, "max_decode_length", r.training.max_decode_length, "training");
    t.get("stop_accuracy", r.training.stop_accuracy);
    t.get("stop_bleu", r.training.stop_bleu);
    get_count(t, "checkpoint_every", r.training.checkpoint_every, "training");
    t.finish();
  }
  get_u64(f, "seed", r.seed, "config");
  if (const Json* j = f.child("paths")) {
    Fields p(*j, "paths");
    p.get("output_dir", r.paths.output_dir);
    p.get("log_dir", r.paths.log_dir);
    p.get("rnmt_encoder", r.paths.rnmt_encoder);
    p.get("transformer_encoder", r.paths.transformer_encoder);
    p.finish();
  }
  r.paths.output_dir = resolve(r.paths.output_dir, base_dir);
  r.paths.log_dir = resolve(r.paths.log_dir, base_dir);
  r.paths.rnmt_encoder = resolve(r.paths.rnmt_encoder, base_dir);
  r.paths.transformer_encoder = resolve(r.paths.transformer_encoder, base_dir);
  f.finish();
  r.validate();
  return r;
}

void RunConfig::validate() const {
  model.validate();
  trainer.schedule.validate();
  if (replicas == 0) invalid("replicas must be at least 1");
  if (batching.size == 0) invalid("batching.size must be positive");
  if (trainer.schedule.kind == optim::ScheduleKind::rnmt &&
      trainer.schedule.rnmt.replicas != static_cast<double>(replicas))
    invalid("rnmt schedule assumes " + std::to_string(trainer.schedule.rnmt.replicas) + " replicas but training uses " +
            std::to_string(replicas));
  const auto& a = trainer.adam;
  if (!(a.beta1 >= 0.0 && a.beta1 < 1.0) || !(a.beta2 >= 0.0 && a.beta2 < 1.0) || !(a.epsilon > 0.0) ||
      !(a.weight_decay >= 0.0))
    invalid("adam needs betas in [0, 1), epsilon > 0 and weight_decay >= 0");
  const auto& c = trainer.clip;
  if (!(c.decay > 0.0 && c.decay < 1.0) || !(c.threshold > 0.0)) invalid("clip needs decay in (0, 1), threshold > 0");
  if (training.eval_every == 0) invalid("training.eval_every must be positive");
  if (training.eval_window == 0) invalid("training.eval_window must be positive");
  if (training.eval_sentences == 0) invalid("training.eval_sentences must be positive");
  if (!data.corpus) {
    if (data.task.vocab_size != model.vocab_size)
      invalid("task vocab_size " + std::to_string(data.task.vocab_size) + " differs from model vocab_size " +
              std::to_string(model.vocab_size));
    if (data.task.min_length == 0 || data.task.min_length > data.task.max_length)
      invalid("task lengths need 1 <= min_length <= max_length");
    if (data.task.count == 0 || data.dev_count == 0) invalid("task and dev sets must be non-empty");
  }
  const bool needs_rnmt = model.encoder.family == arch::Family::cascaded ||
                          model.encoder.family == arch::Family::multi_column;
  if (needs_rnmt && paths.rnmt_encoder.empty())
    fail(ErrorKind::MissingPretrainedEncoder, "paths.rnmt_encoder is required for the " + model.family_name() +
                                                  " family");
  if (model.encoder.family == arch::Family::multi_column && paths.transformer_encoder.empty())
    fail(ErrorKind::MissingPretrainedEncoder, "paths.transformer_encoder is required for the multi_column family");
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open config '" + path + "'");
  Json json;
  try {
    json = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    invalid("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(json, fs::path(path).parent_path().string().empty()
                                    ? std::string(".")
                                    : fs::path(path).parent_path().string());
}

Json to_json(const RunConfig& r) {
  Json data = {{"task",
                {{"kind", data::to_string(r.data.task.kind)},
                 {"count", r.data.task.count},
                 {"min_length", r.data.task.min_length},
                 {"max_length", r.data.task.max_length},
                 {"vocab_size", r.data.task.vocab_size},
                 {"seed", r.data.task.seed},
                 {"multiplier", r.data.task.multiplier},
                 {"offset", r.data.task.offset}}},
               {"dev_count", r.data.dev_count},
               {"dev_seed", r.data.dev_seed}};
  if (r.data.corpus)
    data["corpus"] = {{"train_source", r.data.corpus->train_source},
                      {"train_target", r.data.corpus->train_target},
                      {"dev_source", r.data.corpus->dev_source},
                      {"dev_target", r.data.corpus->dev_target}};
  const auto& t = r.training;
  return {{"model", to_json(r.model)},
          {"data", data},
          {"batching",
           {{"mode", r.batching.mode == BatchingMode::sentences ? "sentences" : "tokens"}, {"size", r.batching.size}}},
          {"replicas", r.replicas},
          {"schedule", schedule_json(r.trainer.schedule)},
          {"adam",
           {{"beta1", r.trainer.adam.beta1},
            {"beta2", r.trainer.adam.beta2},
            {"epsilon", r.trainer.adam.epsilon},
            {"weight_decay", r.trainer.adam.weight_decay}}},
          {"clip",
           {{"enabled", r.trainer.clip.enabled},
            {"decay", r.trainer.clip.decay},
            {"warmup_steps", r.trainer.clip.warmup_steps},
            {"threshold", r.trainer.clip.threshold}}},
          {"training",
           {{"steps", t.steps},
            {"eval_every", t.eval_every},
            {"eval_window", t.eval_window},
            {"eval_sentences", t.eval_sentences},
            {"max_decode_length", t.max_decode_length},
            {"stop_accuracy", t.stop_accuracy},
            {"stop_bleu", t.stop_bleu},
            {"checkpoint_every", t.checkpoint_every}}},
          {"seed", r.seed},
          {"paths",
           {{"output_dir", r.paths.output_dir},
            {"log_dir", r.paths.log_dir},
            {"rnmt_encoder", r.paths.rnmt_encoder},
            {"transformer_encoder", r.paths.transformer_encoder}}}};
}

void check_paths(const RunConfig& config) {
  std::vector<std::string> required;
  if (config.data.corpus) {
    const auto& c = *config.data.corpus;
    required = {c.train_source, c.train_target, c.dev_source, c.dev_target};
  }
  if (!config.paths.rnmt_encoder.empty()) required.push_back(config.paths.rnmt_encoder);
  if (!config.paths.transformer_encoder.empty()) required.push_back(config.paths.transformer_encoder);
  for (const auto& p : required)
    if (!fs::is_regular_file(p)) fail(ErrorKind::IoError, "referenced file '" + p + "' does not exist");
}

RunConfig ablate(RunConfig config, const std::string& toggle) {
  if (toggle == "label_smoothing") {
    config.model.label_smoothing = 0.0;
  } else if (toggle == "multi_head") {
    config.model.encoder.heads = 1;
    config.model.decoder.heads = 1;
    config.model.stacked.heads = 1;
  } else if (toggle == "layer_norm") {
    config.model.layer_norm = false;
  } else if (toggle == "sync_training") {
    config.replicas = 1;
    auto& s = config.trainer.schedule;
    if (s.kind == optim::ScheduleKind::rnmt) s.rnmt.replicas = 1.0;
    if (s.kind == optim::ScheduleKind::transformer) s.transformer.warmup = 1.0;
  } else {
    fail(ErrorKind::UnknownToggle,
         "unknown toggle '" + toggle + "' (label_smoothing, multi_head, layer_norm, sync_training)");
  }
  config.validate();
  return config;
}

std::string ablation_note(const std::string& toggle) {
  if (toggle == "label_smoothing") return "label smoothing removed: uncertainty 0";
  if (toggle == "multi_head") return "multi-head attention removed: one head in every attention";
  if (toggle == "layer_norm") return "layer normalization removed: every norm is the identity";
  if (toggle == "sync_training")
    return "synchronous training removed: asynchronous training is out of scope, so this runs a single replica "
           "without learning-rate warmup";
  fail(ErrorKind::UnknownToggle, "unknown toggle '" + toggle + "'");
}

}  // namespace s2s::cli
