// SPDX-License-Identifier: Apache-2.0
#include <limits>

#include "helpers.hpp"
#include "s2s/optim.hpp"
#include "tiny_models.hpp"

using namespace s2s;
using namespace s2s::optim;
using test::error_kind;
using test::values;

namespace {

std::vector<data::Pair> toy_pairs(std::size_t count, std::uint64_t seed) {
  data::TaskSpec spec;
  spec.count = count;
  spec.vocab_size = 12;
  spec.seed = seed;
  spec.min_length = 2;
  spec.max_length = 8;
  return data::gen_task(spec);
}

std::vector<std::vector<double>> snapshot(const ParamStore& store) {
  std::vector<std::vector<double>> out;
  for (const auto& p : store.all()) out.push_back(values(p.tensor));
  return out;
}

}  // namespace

TEST_CASE("rnmt schedule warms up, holds, decays and floors") {
  RnmtSchedule c;
  c.replicas = 8;
  CHECK(lr_rnmt(0, c) == doctest::Approx(1e-4).epsilon(1e-15));
  CHECK(lr_rnmt(4000, c) == doctest::Approx(8e-4).epsilon(1e-15));  // t = n p
  CHECK(lr_rnmt(60000, c) == doctest::Approx(8e-4).epsilon(1e-15));
  CHECK(lr_rnmt(75000, c) == doctest::Approx(8e-4).epsilon(1e-15));  // decay starts at t = s / n
  CHECK(lr_rnmt(75000 + 75000, c) == doctest::Approx(8e-4 / 16.0).epsilon(1e-12));
  CHECK(lr_rnmt(1e7, c) == doctest::Approx(5e-5).epsilon(1e-15));
  RnmtSchedule single;
  CHECK(lr_rnmt(0, single) == doctest::Approx(1e-4));
  CHECK(lr_rnmt(1.2e6, single) == doctest::Approx(5e-5));
  c.decay_end = c.decay_start;
  CHECK(error_kind([&] { lr_rnmt(1, c); }) == ErrorKind::ConfigInvalid);
}

TEST_CASE("transformer schedule peaks where t + 1 equals the warmup") {
  TransformerSchedule c;
  const double peak = 2.0 / std::sqrt(512.0 * 8000.0);
  CHECK(lr_transformer(7999, c) == doctest::Approx(peak).epsilon(1e-14));
  CHECK(lr_transformer(7998, c) < peak);
  CHECK(lr_transformer(8000, c) < peak);
  CHECK(lr_transformer(0, c) == doctest::Approx(2.0 / std::sqrt(512.0) / std::pow(8000.0, 1.5)));
  LearningRate lr;
  lr.kind = ScheduleKind::transformer;
  CHECK(lr.at(7999) == lr_transformer(7999, c));
  lr.kind = ScheduleKind::constant;
  lr.constant = 0.0;
  CHECK(error_kind([&] { lr.validate(); }) == ErrorKind::ConfigInvalid);
}

TEST_CASE("one Adam step on a hand example") {
  ParamStore store;
  store.add("w", Tensor::from_data({2}, {1.0, -2.0}));
  Adam adam;
  const std::vector<std::vector<double>> g{{0.5, -0.25}};
  adam.step(store, g, 0.1);
  // m_hat = g and v_hat = g^2 after one step, so the move is lr * g / (|g| + eps).
  const auto w = values(store.get("w"));
  CHECK(w[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-6)).epsilon(1e-14));
  CHECK(w[1] == doctest::Approx(-2.0 + 0.1 * 0.25 / (0.25 + 1e-6)).epsilon(1e-14));
  CHECK(adam.steps() == 1);
  CHECK(adam.moments().at("w").m[0] == doctest::Approx(0.05));
  CHECK(adam.moments().at("w").v[0] == doctest::Approx(0.00025));
}

TEST_CASE("weight decay adds lambda w to the gradient") {
  ParamStore a, b;
  a.add("w", Tensor::from_data({1}, {2.0}));
  b.add("w", Tensor::from_data({1}, {2.0}));
  Adam decayed({0.9, 0.999, 1e-6, 0.1}), plain;
  const std::vector<std::vector<double>> g{{0.3}}, g_plus{{0.3 + 0.1 * 2.0}};
  decayed.step(a, g, 0.01);
  plain.step(b, g_plus, 0.01);
  CHECK(a.get("w").item() == b.get("w").item());
}

TEST_CASE("frozen parameters keep their values and get no moments") {
  ParamStore store;
  store.add("enc.w", Tensor::from_data({1}, {1.0}));
  store.add("dec.w", Tensor::from_data({1}, {1.0}));
  CHECK(store.freeze("enc.") == 1);
  CHECK(store.trainable_element_count() == 1);
  Adam adam;
  const std::vector<std::vector<double>> g{{1.0}, {1.0}};
  adam.step(store, g, 0.1);
  CHECK(store.get("enc.w").item() == 1.0);
  CHECK(store.get("dec.w").item() < 1.0);
  CHECK(adam.moments().count("enc.w") == 0);
  CHECK(error_kind([&] { store.freeze("nothing"); }) == ErrorKind::UnknownSelector);
  CHECK(store.unfreeze("*") == 2);
}

TEST_CASE("gradient norm statistics follow the exponentially weighted update") {
  GradNormStats s;
  s.update(0.0, 0.5);
  CHECK(s.mean == 0.0);
  s.update(1.0, 0.5);
  CHECK(s.mean == 0.5);
  CHECK(s.variance == 0.25);
  CHECK(s.accepted == 2);
}

TEST_CASE("adaptive clipping aborts outliers and non-finite norms") {
  ClipConfig cfg;
  cfg.warmup_steps = 20;
  GradNormStats stats;
  Rng rng(1);
  std::normal_distribution<double> noise(0.0, 0.1);
  for (int i = 0; i < 50; ++i) REQUIRE(adaptive_clip_check(std::exp(noise(rng)), stats, cfg) == ClipDecision::accept);
  const GradNormStats before = stats;
  CHECK(adaptive_clip_check(std::exp(stats.mean + 5.0 * stats.stddev()), stats, cfg) == ClipDecision::abort);
  CHECK(stats.mean == before.mean);
  CHECK(stats.variance == before.variance);
  CHECK(stats.accepted == before.accepted);
  CHECK(adaptive_clip_check(std::numeric_limits<double>::quiet_NaN(), stats, cfg) == ClipDecision::abort);
  CHECK(adaptive_clip_check(std::numeric_limits<double>::infinity(), stats, cfg) == ClipDecision::abort);
  CHECK(adaptive_clip_check(std::exp(stats.mean + 3.0 * stats.stddev()), stats, cfg) == ClipDecision::accept);
  CHECK(stats.accepted == before.accepted + 1);

  GradNormStats early;
  CHECK(adaptive_clip_check(1.0, early, cfg) == ClipDecision::accept);
  CHECK(adaptive_clip_check(1e6, early, cfg) == ClipDecision::accept);  // still warming up
  cfg.enabled = false;
  CHECK(adaptive_clip_check(1e300, stats, cfg) == ClipDecision::accept);
  CHECK(adaptive_clip_check(std::numeric_limits<double>::quiet_NaN(), stats, cfg) == ClipDecision::abort);
}

TEST_CASE("replica aggregation equals the gradient of the concatenated batch") {
  for (auto family : {arch::Family::rnmt_plus, arch::Family::transformer}) {
    CAPTURE(arch::to_string(family));
    const auto model = test::tiny_model(test::tiny_config(family, family));
    const auto pairs = toy_pairs(12, 5);
    std::vector<ReplicaResult> replicas;
    std::vector<std::size_t> all;
    for (std::size_t r = 0; r < 4; ++r) {
      const std::vector<std::size_t> idx{3 * r, 3 * r + 1, 3 * r + 2};
      all.insert(all.end(), idx.begin(), idx.end());
      replicas.push_back(replica_gradients(*model, data::make_batch(pairs, idx), {}));
    }
    const Gradients merged = aggregate_gradients(replicas);
    const Gradients whole = replica_gradients(*model, data::make_batch(pairs, all), {}).grads;
    double worst = 0.0;
    for (std::size_t i = 0; i < whole.size(); ++i) worst = std::max(worst, test::max_abs_diff(merged[i], whole[i]));
    CHECK(worst <= 1e-12);
  }
  CHECK(error_kind([] { aggregate_gradients({}); }) == ErrorKind::EmptyBatch);
}

TEST_CASE("an aborted step leaves parameters and optimizer state untouched") {
  const auto model = test::tiny_model(test::tiny_config(arch::Family::rnmt_plus, arch::Family::rnmt_plus));
  TrainerConfig cfg;
  cfg.clip.warmup_steps = 0;
  Trainer trainer(*model, cfg);
  const auto pairs = toy_pairs(4, 6);
  const std::vector<std::size_t> idx{0, 1, 2, 3};
  const std::vector<data::Batch> batches{data::make_batch(pairs, idx)};
  Rng rng(1);
  REQUIRE(trainer.step(batches, rng).applied);
  const auto params = snapshot(model->params());
  const auto moments = trainer.adam().moments();
  trainer.restore(trainer.updates(), moments, GradNormStats{-50.0, 0.0, 10}, 0);
  const StepOutcome out = trainer.step(batches, rng);
  CHECK_FALSE(out.applied);
  CHECK(trainer.aborted() == 1);
  CHECK(trainer.updates() == 1);
  CHECK(snapshot(model->params()) == params);
  const auto& after = trainer.adam().moments();
  REQUIRE(after.size() == moments.size());
  for (const auto& [name, mo] : moments) {
    CHECK(after.at(name).m == mo.m);
    CHECK(after.at(name).v == mo.v);
  }
  CHECK(trainer.clip_stats().accepted == 10);
}
