// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2s/arch.hpp"
#include "s2s/data.hpp"
#include "s2s/decode.hpp"
#include "s2s/optim.hpp"

namespace s2s::cli {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Run configuration.

enum class BatchingMode { sentences, tokens };

struct BatchingConfig {
  BatchingMode mode = BatchingMode::sentences;
  std::size_t size = 64;  // sentences per batch, or padded tokens per side
};

struct CorpusPaths {
  std::string train_source, train_target;
  std::string dev_source, dev_target;
};

struct DataConfig {
  // Synthetic task; dev pairs come from the same generator with dev_seed.
  data::TaskSpec task;
  std::size_t dev_count = 500;
  std::uint64_t dev_seed = 2;
  // When set, the corpus replaces the synthetic task and the vocabulary is
  // built from the training files.
  std::optional<CorpusPaths> corpus;
};

struct TrainingConfig {
  std::size_t steps = 1000;
  std::size_t eval_every = 100;      // K
  std::size_t eval_window = 21;
  std::size_t eval_sentences = 500;  // dev prefix decoded at each evaluation
  std::size_t max_decode_length = 0; // 0: longest dev target + 4
  // Stop once an evaluation reaches both thresholds; 0 disables.
  double stop_accuracy = 0.0;
  double stop_bleu = 0.0;
  std::size_t checkpoint_every = 0;  // 0: only at the end
};

struct PathsConfig {
  std::string output_dir = "run";
  std::string log_dir;             // empty: output_dir (S2S_LOG_DIR overrides)
  std::string rnmt_encoder;        // checkpoint of an RNMT+ model
  std::string transformer_encoder; // checkpoint of a Transformer-encoder model
};

struct RunConfig {
  arch::ModelConfig model;
  DataConfig data;
  BatchingConfig batching;
  std::size_t replicas = 1;
  optim::TrainerConfig trainer;
  TrainingConfig training;
  std::uint64_t seed = 1;
  PathsConfig paths;

  void validate() const;
};

// Strict parsing: unknown keys and wrong types raise ConfigInvalid. Relative
// paths resolve against `base_dir`.
RunConfig parse_run_config(const Json& json, const std::string& base_dir = ".");
RunConfig load_run_config(const std::string& path);
Json to_json(const RunConfig& config);
Json to_json(const arch::ModelConfig& config);
arch::ModelConfig parse_model_config(const Json& json);

// Missing files referenced by the config raise IoError.
void check_paths(const RunConfig& config);

// Config identical except for the removed technique (UnknownToggle otherwise):
// label_smoothing | multi_head | layer_norm | sync_training.
RunConfig ablate(RunConfig config, const std::string& toggle);
// One line describing what the toggle changes.
std::string ablation_note(const std::string& toggle);

// ---------------------------------------------------------------------------
// Checkpoints.

struct TrainState {
  std::size_t step = 0;       // attempted steps, applied or aborted
  std::size_t cursor = 0;     // micro-batches consumed
  std::string rng;            // serialized engine
  optim::GradNormStats clip;
  std::size_t aborted = 0;
  std::vector<double> eval_bleu;
  std::vector<double> eval_accuracy;
  double interval_loss = 0.0;
  std::size_t interval_steps = 0;
};

struct OptimizerState {
  std::size_t updates = 0;
  std::map<std::string, optim::Moments> moments;
};

struct Checkpoint {
  Json config;  // RunConfig snapshot
  std::vector<std::string> vocabulary;
  std::uint64_t step = 0;
  // Every model parameter in store order.
  std::vector<std::pair<std::string, std::vector<double>>> tensors;
  std::vector<std::vector<std::size_t>> shapes;
  std::optional<OptimizerState> optimizer;
  std::optional<TrainState> train;

  arch::TensorMap tensor_map() const;
};

inline constexpr char kCheckpointMagic[] = "S2SF0001";

// Rounds every parameter (and moment) to the nearest f32 in place so the live
// state equals what a checkpoint stores.
void snap_to_f32(ParamStore& store);
void snap_to_f32(std::map<std::string, optim::Moments>& moments);

Checkpoint capture(const RunConfig& config, const data::Vocabulary& vocab, const arch::Model& model,
                   const optim::Trainer* trainer, const TrainState* state);
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

// Overwrites every parameter of `model` from the checkpoint; any missing,
// extra or mis-sized tensor raises CheckpointIncompatible.
void load_parameters(arch::Model& model, const Checkpoint& checkpoint);
// Rebuilds the model described by the checkpoint's config and loads it.
std::unique_ptr<arch::Model> restore_model(const Checkpoint& checkpoint);

// ---------------------------------------------------------------------------
// Training.

struct EvalRecord {
  std::size_t step = 0;
  double bleu = 0.0;
  double token_accuracy = 0.0;
  double loss = 0.0;  // mean training loss since the previous evaluation
  double lr = 0.0;
  std::size_t aborted = 0;
};

Json to_json(const EvalRecord& record);

struct TrainReport {
  std::vector<EvalRecord> evals;
  std::optional<decode::WindowResult> bleu_window;
  std::size_t steps = 0;
  std::size_t updates = 0;
  std::string checkpoint_path;
  std::string metrics_path;
};

struct TrainOptions {
  std::string resume;  // checkpoint to continue from
  std::ostream* progress = nullptr;
};

// Train pairs, dev pairs and vocabulary as the config describes them.
struct Dataset {
  data::Vocabulary vocab;
  std::vector<data::Pair> train;
  std::vector<data::Pair> dev;
};
Dataset load_dataset(const RunConfig& config);

// Position-wise token accuracy over reference lengths; a length mismatch
// counts the missing or surplus positions as errors.
double token_accuracy(const std::vector<std::vector<int>>& hypotheses,
                      const std::vector<std::vector<int>>& references);

std::unique_ptr<arch::Model> build_for_run(const RunConfig& config, Rng& rng);
std::string metrics_directory(const RunConfig& config);

TrainReport train(const RunConfig& config, const TrainOptions& options = {});

// ---------------------------------------------------------------------------
// Commands. Each returns a process exit status and reports errors on `err`.

int cmd_train(const std::string& config_path, const std::string& resume, std::ostream& out, std::ostream& err);
int cmd_eval(const std::string& checkpoint, const std::string& source, const std::string& reference,
             std::size_t beam, const std::string& hypotheses_path, std::ostream& out, std::ostream& err);
int cmd_count(const std::string& config_path, std::ostream& out, std::ostream& err);
int cmd_ablate(const std::string& config_path, const std::string& toggle, std::ostream& out, std::ostream& err);

}  // namespace s2s::cli
