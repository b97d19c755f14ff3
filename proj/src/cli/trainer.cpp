// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "s2s/cli.hpp"
#include "s2s/errors.hpp"

namespace s2s::cli {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kDecodeChunk = 100;
constexpr std::uint64_t kDropoutStream = 0x9e3779b97f4a7c15ULL;

data::Vocabulary corpus_vocabulary(const CorpusPaths& paths) {
  std::vector<std::string> tokens;
  for (const auto& file : {paths.train_source, paths.train_target})
    for (const auto& line : data::read_lines(file))
      for (auto& t : decode::tokenize(line)) tokens.push_back(std::move(t));
  return data::Vocabulary(tokens);
}

std::vector<std::vector<std::size_t>> make_groups(const RunConfig& config, std::span<const data::Pair> pairs) {
  return config.batching.mode == BatchingMode::sentences ? data::batch_by_sentences(pairs, config.batching.size)
                                                         : data::batch_by_tokens(pairs, config.batching.size);
}

// Batch order for one pass over the data, reshuffled per epoch.
std::vector<std::vector<std::size_t>> epoch_plan(const std::vector<std::vector<std::size_t>>& groups,
                                                 std::uint64_t seed, std::size_t epoch) {
  auto plan = groups;
  Rng rng(seed + epoch);
  data::shuffle_groups(plan, rng);
  return plan;
}

std::string serialize(const Rng& rng) {
  std::ostringstream s;
  s << rng;
  return s.str();
}

Rng deserialize(const std::string& state) {
  Rng rng;
  std::istringstream s(state);
  s >> rng;
  if (!s) fail(ErrorKind::CheckpointIncompatible, "malformed random engine state");
  return rng;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot write '" + path + "'");
  for (const auto& l : lines) out << l << '\n';
}

struct DevScore {
  double bleu = 0.0;
  double accuracy = 0.0;
};

DevScore evaluate_dev(const arch::Model& model, const std::vector<data::Pair>& dev, std::size_t count,
                      std::size_t max_length) {
  const std::size_t n = std::min(count, dev.size());
  std::vector<std::vector<int>> hyps, refs;
  for (std::size_t start = 0; start < n; start += kDecodeChunk) {
    const std::size_t end = std::min(n, start + kDecodeChunk);
    std::vector<std::vector<int>> sources;
    for (std::size_t i = start; i < end; ++i) {
      sources.push_back(dev[i].source);
      refs.push_back(dev[i].target);
    }
    for (auto& h : decode::greedy_decode(model, data::pad_rows(sources), max_length)) hyps.push_back(std::move(h));
  }
  return {decode::bleu_ids(hyps, refs).score, token_accuracy(hyps, refs)};
}

}  // namespace

Json to_json(const EvalRecord& r) {
  return {{"step", r.step},       {"bleu", r.bleu}, {"token_accuracy", r.token_accuracy},
          {"loss", r.loss},       {"lr", r.lr},     {"aborted", r.aborted}};
}

Dataset load_dataset(const RunConfig& config) {
  Dataset d;
  if (config.data.corpus) {
    const auto& c = *config.data.corpus;
    d.vocab = corpus_vocabulary(c);
    d.train = data::load_corpus(c.train_source, c.train_target, d.vocab);
    d.dev = data::load_corpus(c.dev_source, c.dev_target, d.vocab);
  } else {
    d.vocab = data::Vocabulary::numbered(config.data.task.vocab_size);
    d.train = data::gen_task(config.data.task);
    // Held out: dev sources never occur in the training set.
    std::set<std::vector<int>> seen;
    for (const auto& p : d.train) seen.insert(p.source);
    data::TaskSpec spec = config.data.task;
    spec.seed = config.data.dev_seed;
    spec.count = 2 * config.data.dev_count;
    for (auto& p : data::gen_task(spec)) {
      if (d.dev.size() == config.data.dev_count) break;
      if (seen.insert(p.source).second) d.dev.push_back(std::move(p));
    }
  }
  if (d.train.empty()) fail(ErrorKind::EmptyCorpus, "no training pairs");
  if (d.dev.empty()) fail(ErrorKind::EmptyCorpus, "no dev pairs");
  return d;
}

double token_accuracy(const std::vector<std::vector<int>>& hypotheses,
                      const std::vector<std::vector<int>>& references) {
  if (hypotheses.size() != references.size())
    fail(ErrorKind::ShapeMismatch, std::to_string(hypotheses.size()) + " hypotheses for " +
                                       std::to_string(references.size()) + " references");
  std::size_t correct = 0, total = 0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const auto& h = hypotheses[i];
    const auto& r = references[i];
    for (std::size_t t = 0; t < std::min(h.size(), r.size()); ++t) correct += h[t] == r[t];
    total += std::max(h.size(), r.size());
  }
  if (total == 0) fail(ErrorKind::EmptyCorpus, "no reference tokens");
  return static_cast<double>(correct) / static_cast<double>(total);
}

std::unique_ptr<arch::Model> build_for_run(const RunConfig& config, Rng& rng) {
  arch::TensorMap rnmt, transformer;
  arch::Pretrained pretrained;
  if (!config.paths.rnmt_encoder.empty() && (config.model.encoder.family == arch::Family::cascaded ||
                                             config.model.encoder.family == arch::Family::multi_column)) {
    rnmt = load_checkpoint(config.paths.rnmt_encoder).tensor_map();
    pretrained.rnmt_encoder = &rnmt;
  }
  if (!config.paths.transformer_encoder.empty() && config.model.encoder.family == arch::Family::multi_column) {
    transformer = load_checkpoint(config.paths.transformer_encoder).tensor_map();
    pretrained.transformer_encoder = &transformer;
  }
  return arch::build_model(config.model, rng, pretrained);
}

std::string metrics_directory(const RunConfig& config) {
  if (const char* env = std::getenv("S2S_LOG_DIR"); env != nullptr && *env != '\0') return env;
  return config.paths.log_dir.empty() ? config.paths.output_dir : config.paths.log_dir;
}

TrainReport train(const RunConfig& input, const TrainOptions& options) {
  RunConfig config = input;
  const Dataset dataset = load_dataset(config);
  if (config.data.corpus) config.model.vocab_size = dataset.vocab.size();
  config.validate();
  check_paths(config);

  Rng init(config.seed);
  auto model = build_for_run(config, init);
  optim::Trainer trainer(*model, config.trainer);
  Rng rng(config.seed ^ kDropoutStream);
  TrainState state;

  if (!options.resume.empty()) {
    const Checkpoint ckpt = load_checkpoint(options.resume);
    if (ckpt.config.at("model") != to_json(config.model))
      fail(ErrorKind::CheckpointIncompatible, "checkpoint '" + options.resume + "' was trained with another model");
    if (!ckpt.optimizer || !ckpt.train)
      fail(ErrorKind::CheckpointIncompatible, "checkpoint '" + options.resume + "' has no training state");
    load_parameters(*model, ckpt);
    state = *ckpt.train;
    trainer.restore(ckpt.optimizer->updates, ckpt.optimizer->moments, state.clip, state.aborted);
    rng = deserialize(state.rng);
  }

  fs::create_directories(config.paths.output_dir);
  const std::string log_dir = metrics_directory(config);
  fs::create_directories(log_dir);
  TrainReport report;
  report.metrics_path = (fs::path(log_dir) / "metrics.jsonl").string();
  report.checkpoint_path = (fs::path(config.paths.output_dir) / "model.ckpt").string();
  std::ofstream log(report.metrics_path, options.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) fail(ErrorKind::IoError, "cannot open metrics log '" + report.metrics_path + "'");

  if (!config.data.corpus) {
    std::vector<std::string> src, ref;
    for (const auto& p : dataset.dev) {
      src.push_back(dataset.vocab.decode(p.source));
      ref.push_back(dataset.vocab.decode(p.target));
    }
    write_lines((fs::path(config.paths.output_dir) / "dev.src").string(), src);
    write_lines((fs::path(config.paths.output_dir) / "dev.ref").string(), ref);
  }

  std::size_t max_decode = config.training.max_decode_length;
  if (max_decode == 0) {
    for (const auto& p : dataset.dev) max_decode = std::max(max_decode, p.target.size());
    max_decode += 4;
  }

  const auto groups = make_groups(config, dataset.train);
  std::size_t plan_epoch = static_cast<std::size_t>(-1);
  std::vector<std::vector<std::size_t>> plan;
  auto next_batch = [&]() {
    const std::size_t epoch = state.cursor / groups.size();
    if (epoch != plan_epoch) {
      plan = epoch_plan(groups, config.seed, epoch);
      plan_epoch = epoch;
    }
    const auto& group = plan[state.cursor % groups.size()];
    ++state.cursor;
    return data::make_batch(dataset.train, group);
  };

  auto save = [&](const std::string& path) {
    snap_to_f32(model->params());
    auto moments = trainer.adam().moments();
    snap_to_f32(moments);
    trainer.restore(trainer.adam().steps(), moments, trainer.clip_stats(), trainer.aborted());
    state.clip = trainer.clip_stats();
    state.aborted = trainer.aborted();
    state.rng = serialize(rng);
    save_checkpoint(path, capture(config, dataset.vocab, *model, &trainer, &state));
  };

  try {
    while (state.step < config.training.steps) {
      std::vector<data::Batch> batches;
      for (std::size_t r = 0; r < config.replicas; ++r) batches.push_back(next_batch());
      const optim::StepOutcome outcome = trainer.step(batches, rng);
      ++state.step;
      state.interval_loss += outcome.loss;
      ++state.interval_steps;

      const bool last = state.step == config.training.steps;
      bool stop = false;
      if (state.step % config.training.eval_every == 0 || last) {
        const DevScore score = evaluate_dev(*model, dataset.dev, config.training.eval_sentences, max_decode);
        EvalRecord rec;
        rec.step = state.step;
        rec.bleu = score.bleu;
        rec.token_accuracy = score.accuracy;
        rec.loss = state.interval_loss / static_cast<double>(state.interval_steps);
        rec.lr = config.trainer.schedule.at(trainer.updates());
        rec.aborted = trainer.aborted();
        state.interval_loss = 0.0;
        state.interval_steps = 0;
        state.eval_bleu.push_back(rec.bleu);
        state.eval_accuracy.push_back(rec.token_accuracy);
        log << to_json(rec).dump() << '\n';
        log.flush();
        if (options.progress != nullptr) *options.progress << to_json(rec).dump() << '\n';
        report.evals.push_back(rec);
        stop = config.training.stop_accuracy > 0.0 && rec.token_accuracy >= config.training.stop_accuracy &&
               rec.bleu >= config.training.stop_bleu;
      }
      if (config.training.checkpoint_every != 0 && state.step % config.training.checkpoint_every == 0)
        save((fs::path(config.paths.output_dir) / ("step" + std::to_string(state.step) + ".ckpt")).string());
      if (stop) break;
    }
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::NonFiniteValue) {
      log << Json{{"step", state.step + 1}, {"halted", to_string(e.kind())}}.dump() << '\n';
      log.flush();
    }
    throw;
  }

  save(report.checkpoint_path);
  report.steps = state.step;
  report.updates = trainer.updates();
  if (state.eval_bleu.size() >= config.training.eval_window)
    report.bleu_window = decode::best_eval_window(state.eval_bleu, config.training.eval_window);
  return report;
}

}  // namespace s2s::cli
