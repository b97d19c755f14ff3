// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "s2s/arch.hpp"
#include "s2s/data.hpp"
#include "s2s/params.hpp"

namespace s2s::optim {

// ---------------------------------------------------------------------------
// Learning-rate schedules.

struct RnmtSchedule {
  double base = 1e-4;
  double replicas = 1;  // n
  double warmup = 500;  // p
  double decay_start = 600000;  // s
  double decay_end = 1200000;   // e
  double floor = 5e-5;
};

// base * min(1 + t(n-1)/(np), n, n(2n)^((s-nt)/(e-s))), held at >= floor
// from t = e/n on.
double lr_rnmt(double t, const RnmtSchedule& cfg);

struct TransformerSchedule {
  double r0 = 2.0;
  double warmup = 8000;  // p
  double model_dim = 512;
};

// r0 / sqrt(d) * min((t+1) / (p sqrt(p)), 1 / sqrt(t+1))
double lr_transformer(double t, const TransformerSchedule& cfg);

enum class ScheduleKind { constant, rnmt, transformer };

struct LearningRate {
  ScheduleKind kind = ScheduleKind::constant;
  double constant = 1e-3;
  RnmtSchedule rnmt;
  TransformerSchedule transformer;

  double at(std::size_t step) const;
  void validate() const;
};

// ---------------------------------------------------------------------------
// Adam.

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-6;
  double weight_decay = 0.0;  // L2: adds lambda * w to the gradient
};

struct Moments {
  std::vector<double> m;
  std::vector<double> v;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // One bias-corrected update of every trainable parameter from `grads`
  // (one buffer per entry of store.all(); frozen entries ignored).
  void step(ParamStore& store, std::span<const std::vector<double>> grads, double lr);

  std::size_t steps() const noexcept { return t_; }
  const std::map<std::string, Moments>& moments() const noexcept { return moments_; }
  const AdamConfig& config() const noexcept { return config_; }
  void restore(std::size_t t, std::map<std::string, Moments> moments);

 private:
  AdamConfig config_;
  std::size_t t_ = 0;
  std::map<std::string, Moments> moments_;
};

// ---------------------------------------------------------------------------
// Adaptive gradient clipping.

struct ClipConfig {
  bool enabled = true;
  double decay = 0.99;
  std::size_t warmup_steps = 100;
  double threshold = 4.0;
};

// Exponentially weighted mean and variance of log gradient norms.
struct GradNormStats {
  double mean = 0.0;
  double variance = 0.0;
  std::size_t accepted = 0;

  double stddev() const;
  void update(double log_norm, double decay);
};

enum class ClipDecision { accept, abort };

// Aborts non-finite norms always and, after warmup, norms whose log exceeds
// mean + threshold * stddev. Stats change only on acceptance.
ClipDecision adaptive_clip_check(double grad_norm, GradNormStats& stats, const ClipConfig& config);

// ---------------------------------------------------------------------------
// Synchronous replicas.

using Gradients = std::vector<std::vector<double>>;

struct ReplicaResult {
  Gradients grads;  // one buffer per store entry, empty for frozen ones
  double weight = 0.0;  // token or sentence count
  double loss = 0.0;
  std::size_t tokens = 0;
};

// Gradient of forward_loss on one micro-batch at the current parameters.
ReplicaResult replica_gradients(arch::Model& model, const data::Batch& batch, const nn::ForwardContext& ctx);

// sum_r weight_r * g_r / sum_r weight_r, accumulated in replica index order.
Gradients aggregate_gradients(std::span<const ReplicaResult> replicas);

double global_norm(const Gradients& grads);

void freeze(arch::Model& model, const std::string& selector);
void unfreeze(arch::Model& model, const std::string& selector);

// ---------------------------------------------------------------------------

struct TrainerConfig {
  AdamConfig adam;
  ClipConfig clip;
  LearningRate schedule;
};

struct StepOutcome {
  bool applied = false;
  double loss = 0.0;  // weighted mean over replicas
  double grad_norm = 0.0;
  double lr = 0.0;
  std::size_t tokens = 0;
};

// Owns the optimizer state for one model.
class Trainer {
 public:
  Trainer(arch::Model& model, TrainerConfig config);

  // One synchronous update over n micro-batches (one per replica).
  StepOutcome step(std::span<const data::Batch> micro_batches, Rng& rng);
  // Clipping check plus Adam update for precomputed gradients.
  StepOutcome apply(const Gradients& grads, double loss, std::size_t tokens);

  std::size_t updates() const noexcept { return adam_.steps(); }
  std::size_t aborted() const noexcept { return aborted_; }
  const Adam& adam() const noexcept { return adam_; }
  const GradNormStats& clip_stats() const noexcept { return stats_; }
  const TrainerConfig& config() const noexcept { return config_; }
  void restore(std::size_t t, std::map<std::string, Moments> moments, GradNormStats stats, std::size_t aborted);

 private:
  arch::Model& model_;
  TrainerConfig config_;
  Adam adam_;
  GradNormStats stats_;
  std::size_t aborted_ = 0;
};

}  // namespace s2s::optim
