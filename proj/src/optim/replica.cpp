// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "s2s/errors.hpp"
#include "s2s/optim.hpp"

namespace s2s::optim {

ReplicaResult replica_gradients(arch::Model& model, const data::Batch& batch, const nn::ForwardContext& ctx) {
  ParamStore& store = model.params();
  store.zero_grad();
  Tape tape;
  TapeScope scope(tape);
  const arch::LossResult loss = arch::forward_loss(model, batch, ctx);
  tape.backward(loss.loss);
  ReplicaResult r;
  r.weight = loss.normalizer();
  r.loss = loss.loss.item();
  r.tokens = loss.tokens;
  r.grads.resize(store.all().size());
  for (std::size_t i = 0; i < store.all().size(); ++i) {
    const Parameter& p = store.all()[i];
    if (p.frozen) continue;
    if (p.tensor.has_grad())
      r.grads[i].assign(p.tensor.grad().begin(), p.tensor.grad().end());
    else
      r.grads[i].assign(p.tensor.numel(), 0.0);
  }
  store.zero_grad();
  return r;
}

Gradients aggregate_gradients(std::span<const ReplicaResult> replicas) {
  if (replicas.empty()) fail(ErrorKind::EmptyBatch, "no replica gradients to aggregate");
  double total = 0.0;
  for (const auto& r : replicas) total += r.weight;
  if (!(total > 0.0)) fail(ErrorKind::EmptyBatch, "replica weights sum to zero");
  Gradients out(replicas.front().grads.size());
  for (const auto& r : replicas) {
    if (r.grads.size() != out.size()) fail(ErrorKind::ShapeMismatch, "replicas disagree on parameter count");
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (r.grads[i].empty()) continue;
      if (out[i].empty()) out[i].assign(r.grads[i].size(), 0.0);
      for (std::size_t j = 0; j < out[i].size(); ++j) out[i][j] += r.weight * r.grads[i][j];
    }
  }
  for (auto& g : out)
    for (double& v : g) v /= total;
  return out;
}

double global_norm(const Gradients& grads) {
  double sum = 0.0;
  for (const auto& g : grads)
    for (double v : g) sum += v * v;
  return std::sqrt(sum);
}

void freeze(arch::Model& model, const std::string& selector) { model.params().freeze(selector); }
void unfreeze(arch::Model& model, const std::string& selector) { model.params().unfreeze(selector); }

Trainer::Trainer(arch::Model& model, TrainerConfig config)
    : model_(model), config_(config), adam_(config.adam) {
  config_.schedule.validate();
}

StepOutcome Trainer::step(std::span<const data::Batch> micro_batches, Rng& rng) {
  if (micro_batches.empty()) fail(ErrorKind::EmptyBatch, "synchronous step needs at least one micro-batch");
  const nn::ForwardContext ctx{true, &rng};
  std::vector<ReplicaResult> replicas;
  replicas.reserve(micro_batches.size());
  for (const auto& b : micro_batches) replicas.push_back(replica_gradients(model_, b, ctx));
  double loss = 0.0, weight = 0.0;
  std::size_t tokens = 0;
  for (const auto& r : replicas) {
    loss += r.weight * r.loss;
    weight += r.weight;
    tokens += r.tokens;
  }
  return apply(aggregate_gradients(replicas), loss / weight, tokens);
}

StepOutcome Trainer::apply(const Gradients& grads, double loss, std::size_t tokens) {
  StepOutcome out;
  out.loss = loss;
  out.tokens = tokens;
  out.grad_norm = global_norm(grads);
  out.lr = config_.schedule.at(adam_.steps());
  if (adaptive_clip_check(out.grad_norm, stats_, config_.clip) == ClipDecision::abort) {
    ++aborted_;
    return out;
  }
  adam_.step(model_.params(), grads, out.lr);
  out.applied = true;
  return out;
}

void Trainer::restore(std::size_t t, std::map<std::string, Moments> moments, GradNormStats stats,
                      std::size_t aborted) {
  adam_.restore(t, std::move(moments));
  stats_ = stats;
  aborted_ = aborted;
}

}  // namespace s2s::optim
