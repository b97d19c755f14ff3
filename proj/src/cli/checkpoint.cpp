// SPDX-License-Identifier: Apache-2.0
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "s2s/cli.hpp"
#include "s2s/errors.hpp"

namespace s2s::cli {

namespace {

[[noreturn]] void incompatible(const std::string& message) { fail(ErrorKind::CheckpointIncompatible, message); }

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes_.append(s);
  }
  void raw(const char* data, std::size_t n) { bytes_.append(data, n); }
  void floats(const std::vector<double>& values) {
    for (double v : values) f32(v);
  }
  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<double> floats(std::uint64_t n) {
    need(n * 4);
    std::vector<double> out(n);
    for (auto& v : out) v = f32();
    return out;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) incompatible("checkpoint is truncated");
  }
  std::string bytes_;
  std::size_t pos_ = 0;
};

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

Json train_state_json(const TrainState& s) {
  return {{"step", s.step},
          {"cursor", s.cursor},
          {"rng", s.rng},
          {"clip", {{"mean", s.clip.mean}, {"variance", s.clip.variance}, {"accepted", s.clip.accepted}}},
          {"aborted", s.aborted},
          {"eval_bleu", s.eval_bleu},
          {"eval_accuracy", s.eval_accuracy},
          {"interval_loss", s.interval_loss},
          {"interval_steps", s.interval_steps}};
}

TrainState parse_train_state(const Json& j) {
  TrainState s;
  try {
    s.step = j.at("step").get<std::size_t>();
    s.cursor = j.at("cursor").get<std::size_t>();
    s.rng = j.at("rng").get<std::string>();
    s.clip.mean = j.at("clip").at("mean").get<double>();
    s.clip.variance = j.at("clip").at("variance").get<double>();
    s.clip.accepted = j.at("clip").at("accepted").get<std::size_t>();
    s.aborted = j.at("aborted").get<std::size_t>();
    s.eval_bleu = j.at("eval_bleu").get<std::vector<double>>();
    s.eval_accuracy = j.at("eval_accuracy").get<std::vector<double>>();
    s.interval_loss = j.at("interval_loss").get<double>();
    s.interval_steps = j.at("interval_steps").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    incompatible(std::string("malformed training state: ") + e.what());
  }
  return s;
}

// Parameters of `prefix.*` renamed to the "encoder.*" names of a source model.
arch::TensorMap encoder_view(const arch::TensorMap& all, const std::string& prefix) {
  arch::TensorMap out;
  for (const auto& [name, values] : all)
    if (name.rfind(prefix + ".", 0) == 0) out["encoder." + name.substr(prefix.size() + 1)] = values;
  return out;
}

}  // namespace

arch::TensorMap Checkpoint::tensor_map() const {
  arch::TensorMap out;
  for (const auto& [name, values] : tensors) out[name] = values;
  return out;
}

void snap_to_f32(ParamStore& store) {
  for (const auto& p : store.all()) {
    Tensor t = p.tensor;
    for (double& v : t.data_mut()) v = to_f32(v);
  }
}

void snap_to_f32(std::map<std::string, optim::Moments>& moments) {
  for (auto& [name, m] : moments) {
    for (double& v : m.m) v = to_f32(v);
    for (double& v : m.v) v = to_f32(v);
  }
}

Checkpoint capture(const RunConfig& config, const data::Vocabulary& vocab, const arch::Model& model,
                   const optim::Trainer* trainer, const TrainState* state) {
  Checkpoint c;
  c.config = to_json(config);
  c.vocabulary = vocab.tokens();
  for (const auto& p : model.params().all()) {
    c.tensors.emplace_back(p.name, std::vector<double>(p.tensor.data().begin(), p.tensor.data().end()));
    c.shapes.emplace_back(p.tensor.shape().begin(), p.tensor.shape().end());
  }
  if (trainer != nullptr) {
    c.step = trainer->updates();
    c.optimizer = OptimizerState{trainer->adam().steps(), trainer->adam().moments()};
  }
  if (state != nullptr) {
    c.train = *state;
    c.step = state->step;
  }
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  Writer w;
  w.raw(kCheckpointMagic, 8);
  const Json header = {{"run", c.config}, {"vocabulary", c.vocabulary}};
  w.str(header.dump());
  w.u64(c.step);
  w.u32(static_cast<std::uint32_t>(c.tensors.size()));
  for (std::size_t i = 0; i < c.tensors.size(); ++i) {
    w.str(c.tensors[i].first);
    w.u32(static_cast<std::uint32_t>(c.shapes[i].size()));
    for (std::size_t d : c.shapes[i]) w.u64(d);
    w.floats(c.tensors[i].second);
  }
  w.u8(c.optimizer ? 1 : 0);
  if (c.optimizer) {
    w.u64(c.optimizer->updates);
    w.u32(static_cast<std::uint32_t>(c.optimizer->moments.size()));
    for (const auto& [name, m] : c.optimizer->moments) {
      w.str(name);
      w.u64(m.m.size());
      w.floats(m.m);
      w.floats(m.v);
    }
  }
  w.str(c.train ? train_state_json(*c.train).dump() : std::string("null"));

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::IoError, "cannot write checkpoint '" + path + "'");
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) fail(ErrorKind::IoError, "short write to '" + path + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) fail(ErrorKind::IoError, "cannot move checkpoint to '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open checkpoint '" + path + "'");
  Reader r(std::string(std::istreambuf_iterator<char>(in), {}));
  if (r.raw(8) != std::string(kCheckpointMagic, 8)) incompatible("'" + path + "' is not an S2SF0001 checkpoint");

  Checkpoint c;
  try {
    const Json header = Json::parse(r.str());
    c.config = header.at("run");
    c.vocabulary = header.at("vocabulary").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    incompatible(std::string("malformed checkpoint header: ") + e.what());
  }
  c.step = r.u64();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    std::vector<std::size_t> dims(rank);
    std::uint64_t numel = 1;
    for (auto& d : dims) {
      d = r.u64();
      numel *= d;
    }
    c.tensors.emplace_back(std::move(name), r.floats(numel));
    c.shapes.push_back(std::move(dims));
  }
  if (r.u8() != 0) {
    OptimizerState opt;
    opt.updates = r.u64();
    const std::uint32_t n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
      std::string name = r.str();
      const std::uint64_t size = r.u64();
      optim::Moments m;
      m.m = r.floats(size);
      m.v = r.floats(size);
      opt.moments.emplace(std::move(name), std::move(m));
    }
    c.optimizer = std::move(opt);
  }
  const std::string train = r.str();
  if (!r.done()) incompatible("trailing bytes after checkpoint payload");
  try {
    const Json state = Json::parse(train);
    if (!state.is_null()) c.train = parse_train_state(state);
  } catch (const nlohmann::json::parse_error& e) {
    incompatible(std::string("malformed training state: ") + e.what());
  }
  return c;
}

void load_parameters(arch::Model& model, const Checkpoint& c) {
  const auto& params = model.params().all();
  if (params.size() != c.tensors.size())
    incompatible("checkpoint has " + std::to_string(c.tensors.size()) + " tensors, model has " +
                 std::to_string(params.size()));
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < c.tensors.size(); ++i)
    if (!index.emplace(c.tensors[i].first, i).second) incompatible("duplicate tensor '" + c.tensors[i].first + "'");
  for (const auto& p : params) {
    const auto it = index.find(p.name);
    if (it == index.end()) incompatible("checkpoint lacks '" + p.name + "'");
    const auto& shape = c.shapes[it->second];
    if (!std::equal(shape.begin(), shape.end(), p.tensor.shape().begin(), p.tensor.shape().end()))
      incompatible("tensor '" + p.name + "' has a different shape in the checkpoint");
    Tensor t = p.tensor;
    const auto& values = c.tensors[it->second].second;
    std::copy(values.begin(), values.end(), t.data_mut().begin());
  }
}

std::unique_ptr<arch::Model> restore_model(const Checkpoint& c) {
  RunConfig config;
  try {
    config = parse_run_config(c.config);
  } catch (const Error& e) {
    incompatible(std::string("checkpoint config rejected: ") + e.what());
  }
  if (config.model.vocab_size != c.vocabulary.size())
    incompatible("checkpoint vocabulary has " + std::to_string(c.vocabulary.size()) + " entries, model expects " +
                 std::to_string(config.model.vocab_size));
  // Hybrid encoders take their pretrained columns from the checkpoint itself.
  const arch::TensorMap all = c.tensor_map();
  arch::TensorMap rnmt, transformer;
  arch::Pretrained pretrained;
  if (config.model.encoder.family == arch::Family::cascaded) {
    rnmt = encoder_view(all, "encoder.rnmt");
    pretrained.rnmt_encoder = &rnmt;
  } else if (config.model.encoder.family == arch::Family::multi_column) {
    rnmt = encoder_view(all, "encoder.column0");
    transformer = encoder_view(all, "encoder.column1");
    pretrained.rnmt_encoder = &rnmt;
    pretrained.transformer_encoder = &transformer;
  }
  Rng rng(config.seed);
  auto model = arch::build_model(config.model, rng, pretrained);
  load_parameters(*model, c);
  return model;
}

}  // namespace s2s::cli
