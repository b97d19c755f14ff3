// SPDX-License-Identifier: Apache-2.0
// Acceptance checks. Prints one PASS/FAIL line per criterion; exits non-zero
// if any fails. Pass criterion numbers as arguments to run a subset.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../unit/prefix_scorer.hpp"
#include "s2s/arch.hpp"
#include "s2s/cli.hpp"
#include "s2s/decode.hpp"
#include "s2s/errors.hpp"
#include "s2s/gradcheck.hpp"
#include "s2s/kernels.hpp"
#include "s2s/nn.hpp"
#include "s2s/optim.hpp"

using namespace s2s;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string sci(double v) { return fmt("%.2e", v); }

fs::path work_dir() {
  const char* env = std::getenv("S2S_ACCEPTANCE_DIR");
  const fs::path dir = env != nullptr && *env != '\0' ? fs::path(env) : fs::current_path() / "acceptance_runs";
  fs::create_directories(dir);
  return dir;
}

fs::path source_dir() { return fs::path(S2S_SOURCE_DIR); }

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = u(rng);
  return Tensor::from_data(std::move(shape), std::move(v), true);
}

Tensor probe_loss(const Tensor& y, Rng& rng) {
  Tensor w = random_tensor(y.shape(), rng);
  w.set_requires_grad(false);
  return ops::sum(ops::mul(y, w));
}

std::vector<Tensor> leaves_of(const ParamStore& store, std::initializer_list<Tensor> extra = {}) {
  std::vector<Tensor> out;
  for (const auto& p : store.all()) out.push_back(p.tensor);
  out.insert(out.end(), extra);
  return out;
}

void jitter(ParamStore& store, Rng& rng) {
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (const auto& p : store.all()) {
    Tensor t = p.tensor;
    for (double& v : t.data_mut()) v += u(rng);
  }
}

arch::StackConfig stack(arch::Family family, std::size_t dim) {
  arch::StackConfig s;
  s.family = family;
  s.layers = 2;
  s.model_dim = dim;
  s.hidden_dim = 2 * dim;
  s.heads = 2;
  return s;
}

arch::ModelConfig small_config(arch::Family encoder, arch::Family decoder, std::size_t dim = 16) {
  arch::ModelConfig c;
  c.encoder = stack(encoder, dim);
  c.decoder = stack(decoder, dim);
  c.stacked = stack(arch::Family::transformer, dim);
  c.vocab_size = 12;
  c.max_positions = 32;
  c.residual_start_layer = 2;
  return c;
}

arch::TensorMap tensor_map(const arch::Model& m) {
  arch::TensorMap map;
  for (const auto& p : m.params().all()) map[p.name] = {p.tensor.data().begin(), p.tensor.data().end()};
  return map;
}

std::vector<data::Pair> toy_pairs(std::size_t count, std::uint64_t seed) {
  data::TaskSpec spec;
  spec.count = count;
  spec.vocab_size = 12;
  spec.seed = seed;
  spec.min_length = 2;
  spec.max_length = 8;
  return data::gen_task(spec);
}

data::Batch batch_of(const std::vector<data::Pair>& pairs, std::size_t start, std::size_t count) {
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), start);
  return data::make_batch(pairs, idx);
}

std::vector<std::vector<double>> snapshot(const ParamStore& store) {
  std::vector<std::vector<double>> out;
  for (const auto& p : store.all()) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto start = std::chrono::steady_clock::now();
  constexpr double step = 1e-5;
  std::map<std::string, double> worst;
  for (std::uint64_t point = 0; point < 5; ++point) {
    Rng rng(1000 + point);
    {
      ParamStore store;
      nn::LstmCell cell(store, "cell", 3, 4, {}, rng);
      jitter(store, rng);
      const Tensor x = random_tensor({2, 3}, rng), h = random_tensor({2, 4}, rng), c = random_tensor({2, 4}, rng);
      Rng probe(point);
      worst["lstm cell"] = std::max(
          worst["lstm cell"], grad_check(
                                  [&] {
                                    Rng r = probe;
                                    const auto [h1, c1] = cell.step(x, h, c);
                                    return ops::add(probe_loss(h1, r), probe_loss(c1, r));
                                  },
                                  leaves_of(store, {x, h, c}), step));
    }
    {
      ParamStore store;
      nn::BiLstmLayer bi(store, "bi", 3, 4, {}, rng);
      jitter(store, rng);
      const Tensor x = random_tensor({2, 3, 3}, rng);
      const std::vector<double> valid{1, 1, 1, 1, 1, 0};
      worst["bidirectional layer"] = std::max(worst["bidirectional layer"], grad_check(
                                                                                [&] {
                                                                                  Rng r(point);
                                                                                  return probe_loss(bi.forward(x, valid), r);
                                                                                },
                                                                                leaves_of(store, {x}), step));
    }
    {
      ParamStore store;
      nn::AdditiveAttention att(store, "att", 4, 6, 6, 8, 2, true, 5, 0.5, rng);
      jitter(store, rng);
      const Tensor q = random_tensor({2, 2, 4}, rng), mem = random_tensor({2, 3, 6}, rng);
      const std::vector<double> valid{1, 1, 1, 1, 1, 0};
      worst["additive attention"] = std::max(
          worst["additive attention"], grad_check(
                                           [&] {
                                             Rng r(point);
                                             return probe_loss(
                                                 att.attend(q, att.project_keys(mem), mem, valid, 0.0, {}).context, r);
                                           },
                                           leaves_of(store, {q, mem}), step));
    }
    {
      ParamStore store;
      nn::DotAttention att(store, "dot", 8, 6, 2, true, rng);
      const Tensor q = random_tensor({2, 3, 8}, rng), mem = random_tensor({2, 4, 6}, rng);
      const std::vector<double> valid{1, 1, 1, 1, 1, 1, 0, 0};
      worst["dot-product attention"] = std::max(
          worst["dot-product attention"], grad_check(
                                              [&] {
                                                Rng r(point);
                                                return probe_loss(att.attend(q, mem, valid, false, 0.0, {}).context, r);
                                              },
                                              leaves_of(store, {q, mem}), step));
    }
    {
      ParamStore store;
      nn::LayerNorm norm(store, "norm", 8);
      nn::DotAttention att(store, "self", 8, 8, 2, true, rng);
      jitter(store, rng);
      const Tensor x = random_tensor({2, 3, 8}, rng);
      const auto self = [&](const Tensor& t) { return att.attend(t, t, {}, true, 0.0, {}).context; };
      worst["transformer sublayer"] = std::max(
          worst["transformer sublayer"], grad_check(
                                             [&] {
                                               Rng r(point);
                                               return probe_loss(nn::transformer_sublayer(x, self, norm, 0.0, {}), r);
                                             },
                                             leaves_of(store, {x}), step));
    }
    {
      ParamStore store;
      nn::FeedForward ffn(store, "ffn", 6, 10, 0.6, rng);
      jitter(store, rng);
      const Tensor x = random_tensor({2, 3, 6}, rng);
      worst["feed-forward"] = std::max(worst["feed-forward"], grad_check(
                                                                  [&] {
                                                                    Rng r(point);
                                                                    return probe_loss(ffn(x, 0.0, {}), r);
                                                                  },
                                                                  leaves_of(store, {x}), step));
    }
    {
      ParamStore store;
      nn::ConvGlu conv(store, "conv", 3, 4, 3, point % 2 == 0, rng);
      const Tensor x = random_tensor({2, 5, 3}, rng);
      worst["conv1d+glu"] = std::max(worst["conv1d+glu"], grad_check(
                                                              [&] {
                                                                Rng r(point);
                                                                return probe_loss(conv(x), r);
                                                              },
                                                              leaves_of(store, {x}), step));
    }
    {
      const Tensor v = random_tensor({4, 3}, rng), g = random_tensor({1}, rng, 0.5, 2.0);
      worst["weight-norm"] = std::max(worst["weight-norm"], grad_check(
                                                                [&] {
                                                                  Rng r(point);
                                                                  return probe_loss(nn::weight_norm_reparam(v, g), r);
                                                                },
                                                                {v, g}, step));
    }
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  double overall = 0.0;
  std::string detail;
  for (const auto& [name, err] : worst) {
    overall = std::max(overall, err);
    detail += name + " " + sci(err) + ", ";
  }
  detail += "5 points each, " + fmt("%.1f s", seconds);
  return {overall <= 1e-4 && seconds < 60.0, detail};
}

// ---------------------------------------------------------------------------

double rnmt_reference(double t, double n, double p, double s, double e) {
  if (n * t >= e) return 5e-5;
  const double a = 1.0 + t * (n - 1.0) / (n * p);
  const double b = n;
  const double c = n * std::pow(2.0 * n, (s - n * t) / (e - s));
  return 1e-4 * std::min(a, std::min(b, c));
}

double transformer_reference(double t, double r0, double p, double d) {
  const double warm = (t + 1.0) / (p * std::sqrt(p));
  const double decay = 1.0 / std::sqrt(t + 1.0);
  return r0 * std::pow(d, -0.5) * (warm < decay ? warm : decay);
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

Outcome schedule_fidelity() {
  double worst_rnmt = 0.0, worst_trans = 0.0;
  for (double n : {1.0, 8.0, 32.0}) {
    optim::RnmtSchedule c;
    c.replicas = n;
    const double horizon = 1.5 * c.decay_end / n;
    for (int i = 0; i < 1000; ++i) {
      const double t = std::floor(horizon * i / 999.0);
      worst_rnmt = std::max(worst_rnmt, rel(optim::lr_rnmt(t, c), rnmt_reference(t, n, 500, 600000, 1200000)));
    }
  }
  struct T {
    double r0, p, d;
  };
  bool peak_ok = true;
  for (const T& cfg : {T{2.0, 8000, 512}, T{1.0, 4000, 1024}, T{3.0, 40000, 1024}}) {
    optim::TransformerSchedule c;
    c.r0 = cfg.r0;
    c.warmup = cfg.p;
    c.model_dim = cfg.d;
    for (int i = 0; i < 1000; ++i) {
      const double t = std::floor(4.0 * cfg.p * i / 999.0);
      worst_trans = std::max(worst_trans, rel(optim::lr_transformer(t, c), transformer_reference(t, cfg.r0, cfg.p, cfg.d)));
    }
    double best = -1.0, arg = -1.0;
    for (double t = 0; t < 2.0 * cfg.p; t += 1.0) {
      const double v = optim::lr_transformer(t, c);
      if (v > best) {
        best = v;
        arg = t;
      }
    }
    peak_ok = peak_ok && arg + 1.0 == cfg.p;
  }
  optim::RnmtSchedule c;
  const bool start_ok = optim::lr_rnmt(0, c) == 1e-4;
  bool floor_ok = true;
  for (double t : {1.2e6, 1.3e6, 2e6, 1e7}) floor_ok = floor_ok && optim::lr_rnmt(t, c) == 5e-5;
  c.replicas = 16;
  for (double t : {75000.0, 80000.0, 1e6}) floor_ok = floor_ok && optim::lr_rnmt(t, c) == 5e-5;
  const bool pass = worst_rnmt <= 1e-12 && worst_trans <= 1e-12 && peak_ok && start_ok && floor_ok;
  return {pass, "max rel err rnmt " + sci(worst_rnmt) + ", transformer " + sci(worst_trans) + ", peak at t+1=p " +
                    (peak_ok ? "yes" : "no") + ", lr(0)=1e-4 " + (start_ok ? "yes" : "no") + ", post-decay 5e-5 " +
                    (floor_ok ? "yes" : "no")};
}

// ---------------------------------------------------------------------------

arch::ModelConfig load_preset(const std::string& name) {
  std::ifstream in(source_dir() / "configs" / "presets" / (name + ".json"));
  if (!in) fail(ErrorKind::IoError, "missing preset " + name);
  return cli::parse_model_config(cli::Json::parse(in).at("model"));
}

Outcome parameter_counts() {
  struct Row {
    const char* preset;
    double paper;
    double tolerance;
  };
  const Row rows[] = {{"transformer_base", 93.3e6, 0.05},
                      {"transformer_big", 375.4e6, 0.05},
                      {"rnmt_plus", 378.9e6, 0.05},
                      {"convs2s", 263.4e6, 0.10}};
  const auto start = std::chrono::steady_clock::now();
  bool pass = true;
  std::string detail;
  for (const Row& r : rows) {
    const double count = static_cast<double>(decode::count_params(load_preset(r.preset)));
    const double dev = (count - r.paper) / r.paper;
    pass = pass && std::abs(dev) <= r.tolerance;
    detail += std::string(r.preset) + " " + fmt("%.1fM", count / 1e6) + " (" + fmt("%+.1f%%", 100.0 * dev) + "), ";
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  pass = pass && seconds < 1.0;
  std::string conventions = decode::counting_conventions();
  std::replace(conventions.begin(), conventions.end(), '\n', ' ');
  return {pass, detail + "conventions: " + conventions};
}

Outcome flop_ordering() {
  const double base = static_cast<double>(decode::count_flops(load_preset("transformer_base"), 50, 50));
  const double conv = static_cast<double>(decode::count_flops(load_preset("convs2s"), 50, 50));
  const double rnmt = static_cast<double>(decode::count_flops(load_preset("rnmt_plus"), 50, 50));
  const double big = static_cast<double>(decode::count_flops(load_preset("transformer_big"), 50, 50));
  return {base < conv && conv < rnmt && rnmt < big,
          "Base " + fmt("%.2fG", base / 1e9) + " < ConvS2S " + fmt("%.2fG", conv / 1e9) + " < RNMT+ " +
              fmt("%.2fG", rnmt / 1e9) + " < Big " + fmt("%.2fG", big / 1e9)};
}

// ---------------------------------------------------------------------------

Outcome toy_convergence() {
  const fs::path runs = work_dir() / "toy";
  const fs::path configs = source_dir() / "configs" / "toy";
  const auto start = std::chrono::steady_clock::now();
  const char* order[] = {"rnmt_plus", "transformer", "hybrid", "cascaded", "multi_column"};
  bool pass = true;
  std::string detail;
  for (const char* name : order) {
    cli::RunConfig config = cli::load_run_config((configs / (std::string(name) + ".json")).string());
    config.paths.output_dir = (runs / name).string();
    config.paths.log_dir.clear();
    if (!config.paths.rnmt_encoder.empty()) config.paths.rnmt_encoder = (runs / "rnmt_plus" / "model.ckpt").string();
    if (!config.paths.transformer_encoder.empty())
      config.paths.transformer_encoder = (runs / "hybrid" / "model.ckpt").string();
    const auto t0 = std::chrono::steady_clock::now();
    const cli::TrainReport report = cli::train(config);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const cli::EvalRecord& last = report.evals.back();
    const bool ok = last.token_accuracy >= 0.99 && last.bleu >= 95.0 && report.steps <= 3000;
    pass = pass && ok;
    detail += std::string(name) + " acc " + fmt("%.4f", last.token_accuracy) + " BLEU " + fmt("%.2f", last.bleu) +
              " @" + std::to_string(report.steps) + " steps " + fmt("%.0fs", seconds) + "; ";
    std::cout << "  toy " << name << ": " << detail.substr(detail.rfind(name)) << std::endl;
  }
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60.0;
  pass = pass && minutes < 15.0;
  return {pass, detail + "total " + fmt("%.1f min", minutes)};
}

// ---------------------------------------------------------------------------

Outcome replica_equivalence() {
  std::string detail;
  bool pass = true;
  for (auto family : {arch::Family::transformer, arch::Family::rnmt_plus}) {
    const arch::ModelConfig c = small_config(family, family);
    Rng ra(9), rb(9);
    auto a = arch::build_model(c, ra);
    auto b = arch::build_model(c, rb);
    optim::TrainerConfig tc;
    tc.schedule.constant = 1e-2;
    optim::Trainer ta(*a, tc), tb(*b, tc);
    const auto pairs = toy_pairs(16, 4);
    const std::vector<data::Batch> micro{batch_of(pairs, 0, 4), batch_of(pairs, 4, 4), batch_of(pairs, 8, 4),
                                         batch_of(pairs, 12, 4)};
    const std::vector<data::Batch> whole{batch_of(pairs, 0, 16)};
    const auto before = snapshot(a->params());
    double worst = 0.0;
    for (int step = 0; step < 3; ++step) {
      Rng r1(1), r2(1);
      const auto oa = ta.step(micro, r1);
      const auto ob = tb.step(whole, r2);
      if (!oa.applied || !ob.applied) pass = false;
    }
    const auto sa = snapshot(a->params()), sb = snapshot(b->params());
    double moved = 0.0;
    for (std::size_t i = 0; i < sa.size(); ++i)
      for (std::size_t j = 0; j < sa[i].size(); ++j) {
        worst = std::max(worst, std::abs((sa[i][j] - before[i][j]) - (sb[i][j] - before[i][j])));
        moved = std::max(moved, std::abs(sa[i][j] - before[i][j]));
      }
    pass = pass && worst <= 1e-12 && moved > 0.0;
    detail += std::string(arch::to_string(family)) +
              (family == arch::Family::transformer ? " (token-weighted)" : " (sentence-weighted)") +
              " max update diff " + sci(worst) + " over 3 steps; ";
  }
  return {pass, detail + "n=4 replicas vs concatenated batch"};
}

// ---------------------------------------------------------------------------

struct OptimizerSnapshot {
  std::vector<std::vector<double>> params;
  std::map<std::string, optim::Moments> moments;
  optim::GradNormStats stats;
  std::size_t updates;

  bool operator==(const OptimizerSnapshot& o) const {
    if (params != o.params || updates != o.updates) return false;
    if (stats.mean != o.stats.mean || stats.variance != o.stats.variance || stats.accepted != o.stats.accepted)
      return false;
    if (moments.size() != o.moments.size()) return false;
    for (const auto& [k, m] : moments) {
      const auto it = o.moments.find(k);
      if (it == o.moments.end() || it->second.m != m.m || it->second.v != m.v) return false;
    }
    return true;
  }
};

OptimizerSnapshot capture(const arch::Model& m, const optim::Trainer& t) {
  return {snapshot(m.params()), t.adam().moments(), t.clip_stats(), t.updates()};
}

optim::Gradients scaled_to(const optim::Gradients& g, double norm) {
  const double factor = norm / optim::global_norm(g);
  optim::Gradients out = g;
  for (auto& buf : out)
    for (double& v : buf) v *= factor;
  return out;
}

Outcome adaptive_clipping() {
  const arch::ModelConfig c = small_config(arch::Family::rnmt_plus, arch::Family::rnmt_plus);
  Rng rng(3);
  auto model = arch::build_model(c, rng);
  optim::TrainerConfig tc;
  tc.clip.warmup_steps = 20;
  optim::Trainer trainer(*model, tc);
  const auto pairs = toy_pairs(400, 8);
  for (std::size_t s = 0; s < 40; ++s) {
    const std::vector<data::Batch> b{batch_of(pairs, (s * 8) % 392, 8)};
    trainer.step(b, rng);
  }
  const optim::GradNormStats stats = trainer.clip_stats();
  if (stats.accepted < tc.clip.warmup_steps) return {false, "warmup never completed"};
  const auto grads = optim::replica_gradients(*model, batch_of(pairs, 0, 8), {}).grads;
  const double mu = stats.mean, sigma = stats.stddev();

  const OptimizerSnapshot before = capture(*model, trainer);
  const auto spike = trainer.apply(scaled_to(grads, std::exp(mu + 5.0 * sigma)), 0.0, 0);
  const bool spike_aborted = !spike.applied && capture(*model, trainer) == before;

  optim::Gradients nan = grads;
  nan.back().front() = std::numeric_limits<double>::quiet_NaN();
  const auto nan_step = trainer.apply(nan, 0.0, 0);
  const bool nan_aborted = !nan_step.applied && capture(*model, trainer) == before;

  const auto moderate = trainer.apply(scaled_to(grads, std::exp(mu + 3.0 * sigma)), 0.0, 0);
  const bool moderate_ok = moderate.applied && trainer.updates() == before.updates + 1;

  // NaN during warmup is rejected too.
  Rng rng2(4);
  auto fresh = arch::build_model(c, rng2);
  optim::Trainer early(*fresh, tc);
  const OptimizerSnapshot early_before = capture(*fresh, early);
  const bool early_nan = !early.apply(nan, 0.0, 0).applied && capture(*fresh, early) == early_before;

  const bool pass = spike_aborted && nan_aborted && moderate_ok && early_nan;
  return {pass, "mu " + fmt("%.3f", mu) + " sigma " + fmt("%.3f", sigma) + "; e^(mu+5sigma) aborted, state identical " +
                    (spike_aborted ? "yes" : "no") + "; NaN aborted " + (nan_aborted && early_nan ? "yes" : "no") +
                    " (also in warmup); e^(mu+3sigma) accepted " + (moderate_ok ? "yes" : "no")};
}

// ---------------------------------------------------------------------------

// Three-step toy model: greedy commits to token 4 first, the best sentence
// starts with 5.
class TableScorer final : public decode::Scorer {
 public:
  std::size_t vocab_size() const override { return 6; }
  std::vector<double> step(std::span<const int> tokens) override {
    std::vector<double> out;
    for (std::size_t r = 0; r < tokens.size(); ++r) {
      rows_[r].push_back(tokens[r]);
      const auto d = distribution(rows_[r]);
      out.insert(out.end(), d.begin(), d.end());
    }
    return out;
  }
  void reorder(std::span<const std::size_t> rows) override {
    std::vector<std::vector<int>> next;
    for (std::size_t r : rows) next.push_back(rows_[r]);
    rows_ = std::move(next);
  }
  static std::vector<double> distribution(const std::vector<int>& fed) {
    // Probabilities over {pad, bos, eos, unk, 4, 5}.
    std::vector<double> p;
    const std::vector<int> after(fed.begin() + 1, fed.end());
    if (after.empty())
      p = {0.0, 0.0, 0.1, 0.0, 0.5, 0.4};
    else if (after == std::vector<int>{4})
      p = {0.0, 0.0, 0.3, 0.0, 0.35, 0.35};
    else if (after == std::vector<int>{5})
      p = {0.0, 0.0, 0.1, 0.0, 0.0, 0.9};
    else if (after == std::vector<int>{5, 5})
      p = {0.0, 0.0, 0.95, 0.0, 0.05, 0.0};
    else
      p = {0.0, 0.0, 0.5, 0.0, 0.25, 0.25};
    std::vector<double> logp;
    for (double v : p) logp.push_back(v > 0.0 ? std::log(v) : -1e4);
    return logp;
  }

 private:
  std::vector<std::vector<int>> rows_{1};
};

decode::Hypothesis exhaustive_table(std::size_t max_length) {
  decode::Hypothesis best;
  best.score = -1e300;
  std::function<void(std::vector<int>&, double)> walk = [&](std::vector<int>& fed, double score) {
    const auto logp = TableScorer::distribution(fed);
    for (int v = 0; v < 6; ++v) {
      std::vector<int> tokens(fed.begin() + 1, fed.end());
      tokens.push_back(v);
      const double s = score + logp[static_cast<std::size_t>(v)];
      if (v == data::kEos || tokens.size() >= max_length) {
        if (s > best.score) best = {tokens, s, true};
      } else {
        fed.push_back(v);
        walk(fed, s);
        fed.pop_back();
      }
    }
  };
  std::vector<int> fed{data::kBos};
  walk(fed, 0.0);
  return best;
}

Outcome decoding_and_bleu() {
  bool greedy_ok = true;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    test::PrefixScorer a(9, seed), b(9, seed);
    decode::BeamOptions o;
    o.beam = 1;
    o.max_length = 12;
    const auto beam = decode::beam_search(a, o);
    const auto greedy = decode::greedy_search(b, 12);
    greedy_ok = greedy_ok && beam.tokens == greedy.tokens && beam.score == greedy.score;
  }
  Rng rng(5);
  auto model = arch::build_model(small_config(arch::Family::transformer, arch::Family::rnmt_plus), rng);
  for (const std::vector<int>& src : {std::vector<int>{4, 5, 6, 7}, std::vector<int>{9, 8}}) {
    decode::BeamOptions o;
    o.beam = 1;
    o.max_length = 10;
    decode::ModelScorer ms(*model, src);
    const auto beam = decode::beam_search(*model, src, o);
    const auto greedy = decode::greedy_search(ms, 10);
    greedy_ok = greedy_ok && beam.tokens == greedy.tokens && beam.score == greedy.score;
  }

  TableScorer table;
  decode::BeamOptions o4;
  o4.beam = 4;
  o4.max_length = 3;
  const auto beam4 = decode::beam_search(table, o4);
  const auto best = exhaustive_table(3);
  TableScorer table_greedy;
  const auto greedy = decode::greedy_search(table_greedy, 3);
  const bool beam_ok = beam4.tokens == best.tokens && std::abs(beam4.score - best.score) < 1e-12 &&
                       greedy.tokens != best.tokens;

  const double hand = decode::bleu_lines({"a b c d"}, {"a b c d e"}).score;
  const std::vector<std::string> corpus{"the cat sat on the mat", "a b c d e f g"};
  const double identical = decode::bleu_lines(corpus, corpus).score;
  const bool bleu_ok = std::abs(hand - 77.88) <= 0.01 && std::abs(identical - 100.0) < 1e-9;
  return {greedy_ok && beam_ok && bleu_ok,
          std::string("beam=1 == greedy ") + (greedy_ok ? "yes" : "no") + "; beam=4 on 3-step toy model == exhaustive " +
              (beam_ok ? "yes" : "no") + " (greedy differs); BLEU hand example " + fmt("%.2f", hand) +
              ", identical corpora " + fmt("%.2f", identical)};
}

// ---------------------------------------------------------------------------

Outcome evaluation_window() {
  Rng rng(21);
  std::uniform_int_distribution<std::size_t> len(21, 200);
  std::uniform_real_distribution<double> u(0.0, 40.0);
  std::size_t agree = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s(len(rng));
    for (double& v : s) v = std::round(u(rng) * 4.0) / 4.0;  // quantized so ties happen
    const auto r = decode::best_eval_window(s, 21);
    double best_sum = -1.0;
    std::size_t best_start = 0;
    for (std::size_t i = 0; i + 21 <= s.size(); ++i) {
      double sum = 0.0;
      for (std::size_t j = i; j < i + 21; ++j) sum += s[j];
      if (sum > best_sum) {
        best_sum = sum;
        best_start = i;
      }
    }
    const double mean = best_sum / 21.0;
    double var = 0.0;
    for (std::size_t j = best_start; j < best_start + 21; ++j) var += (s[j] - mean) * (s[j] - mean);
    const double sd = std::sqrt(var / 21.0);
    if (r.start == best_start && std::abs(r.mean - mean) < 1e-12 && std::abs(r.stddev - sd) < 1e-12) ++agree;
  }
  return {agree == 100, std::to_string(agree) + "/100 random series (length 21-200, window 21) match brute force"};
}

// ---------------------------------------------------------------------------

Outcome hybrid_contracts() {
  // Cascaded: frozen RNMT+ column over 100 training steps.
  arch::ModelConfig cc = small_config(arch::Family::cascaded, arch::Family::rnmt_plus);
  arch::ModelConfig rc = cc;
  rc.encoder.family = arch::Family::rnmt_plus;
  Rng rng(7);
  const arch::TensorMap rnmt = tensor_map(*arch::build_model(rc, rng));
  auto cascaded = arch::build_model(cc, rng, {&rnmt, nullptr});
  optim::Trainer trainer(*cascaded, {});
  const auto pairs = toy_pairs(800, 13);
  const auto trainable_before = snapshot(cascaded->params());
  for (std::size_t s = 0; s < 100; ++s) {
    const std::vector<data::Batch> b{batch_of(pairs, s * 8, 8)};
    trainer.step(b, rng);
  }
  bool frozen_ok = true, others_moved = false, no_positions = true;
  std::size_t frozen = 0;
  const auto& params = cascaded->params().all();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (p.name.find("position") != std::string::npos && p.name.rfind("encoder.", 0) == 0) no_positions = false;
    const std::vector<double> now(p.tensor.data().begin(), p.tensor.data().end());
    if (p.name.rfind("encoder.rnmt.", 0) == 0) {
      ++frozen;
      frozen_ok = frozen_ok && p.frozen && now == rnmt.at("encoder." + p.name.substr(13));
    } else if (now != trainable_before[i]) {
      others_moved = true;
    }
  }
  // Without positional encodings the stacked layers commute with a
  // permutation of the positions.
  Rng prng(8);
  const std::size_t S = 6, d = cc.encoder.model_dim;
  Tensor x = random_tensor({1, S, d}, prng);
  const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  std::vector<double> permuted(S * d);
  for (std::size_t i = 0; i < S; ++i)
    std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(perm[i] * d), d, permuted.begin() + static_cast<std::ptrdiff_t>(i * d));
  const std::vector<double> valid(S, 1.0);
  const auto y = arch::cascaded_stack(*cascaded, x, valid, {});
  const auto yp = arch::cascaded_stack(*cascaded, Tensor::from_data({1, S, d}, permuted), valid, {});
  double equivariance = 0.0;
  for (std::size_t i = 0; i < S; ++i)
    for (std::size_t j = 0; j < d; ++j)
      equivariance = std::max(equivariance, std::abs(yp.data()[i * d + j] - y.data()[perm[i] * d + j]));
  no_positions = no_positions && equivariance < 1e-12;

  // Multi-column: LN(Affine(concat(LN(rnmt), transformer))) by hand.
  arch::ModelConfig mc = small_config(arch::Family::multi_column, arch::Family::rnmt_plus);
  mc.decoder.model_dim = 20;
  arch::ModelConfig tc = mc;
  tc.encoder = mc.stacked;
  tc.decoder = mc.stacked;
  const arch::TensorMap rnmt_map = tensor_map(*arch::build_model(rc, rng));
  const arch::TensorMap trans_map = tensor_map(*arch::build_model(tc, rng));
  auto multi = arch::build_model(mc, rng, {&rnmt_map, &trans_map});
  // Perturb the merger so gains and biases are not the identity.
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (const auto& p : multi->params().all())
    if (p.name.rfind("encoder.merge", 0) == 0 || p.name.rfind("encoder.column0_norm", 0) == 0) {
      Tensor t = p.tensor;
      for (double& v : t.data_mut()) v += u(rng);
    }
  const data::Batch batch = batch_of(pairs, 0, 3);
  const arch::EncoderOutput enc = multi->encode(batch.source, {});
  const Tensor& a = enc.columns.at(0);
  const Tensor& b = enc.columns.at(1);
  const std::size_t d0 = a.dim(2), d1 = b.dim(2), out = mc.decoder.model_dim;
  const auto get = [&](const std::string& n) {
    const Tensor t = multi->params().get(n);
    return std::vector<double>(t.data().begin(), t.data().end());
  };
  const auto g0 = get("encoder.column0_norm.gain"), b0 = get("encoder.column0_norm.bias");
  const auto w = get("encoder.merge.weight"), wb = get("encoder.merge.bias");
  const auto g1 = get("encoder.merge_norm.gain"), b1 = get("encoder.merge_norm.bias");
  const auto layer_norm = [](std::vector<double> v, const std::vector<double>& g, const std::vector<double>& bias) {
    double mean = 0.0, var = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (v[i] - mean) / std::sqrt(var + nn::kLayerNormEps) * g[i] + bias[i];
    return v;
  };
  double merge_err = 0.0;
  const std::size_t rows = a.dim(0) * a.dim(1);
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<double> left(a.data().begin() + static_cast<std::ptrdiff_t>(r * d0), a.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * d0));
    std::vector<double> cat = layer_norm(left, g0, b0);
    cat.insert(cat.end(), b.data().begin() + static_cast<std::ptrdiff_t>(r * d1), b.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * d1));
    std::vector<double> proj(wb);
    for (std::size_t i = 0; i < cat.size(); ++i)
      for (std::size_t j = 0; j < out; ++j) proj[j] += cat[i] * w[i * out + j];
    const auto expect = layer_norm(proj, g1, b1);
    for (std::size_t j = 0; j < out; ++j) merge_err = std::max(merge_err, std::abs(expect[j] - enc.features.data()[r * out + j]));
  }
  const bool dims_ok = enc.features.dim(2) == out && w.size() == (d0 + d1) * out;
  const bool pass = frozen_ok && frozen > 0 && others_moved && no_positions && dims_ok && merge_err < 1e-12;
  return {pass, "cascaded: " + std::to_string(frozen) + " frozen tensors bit-identical after 100 steps " +
                    (frozen_ok ? "yes" : "no") + ", stacked layers position-free (permutation error " +
                    sci(equivariance) + "); multi-column: concat " + std::to_string(d0) + "+" + std::to_string(d1) +
                    " -> " + std::to_string(enc.features.dim(2)) + " (decoder " + std::to_string(out) +
                    "), LN->concat->affine->LN max error " + sci(merge_err)};
}

// ---------------------------------------------------------------------------

Outcome determinism() {
  const fs::path root = work_dir() / "determinism";
  cli::Json j = cli::Json::parse(R"({
    "model": {
      "encoder": {"family": "transformer", "layers": 2, "model_dim": 32, "hidden_dim": 64, "heads": 4},
      "decoder": {"family": "rnmt_plus", "layers": 2, "model_dim": 32, "heads": 4},
      "vocab_size": 16,
      "dropout": {"input": 0.1, "residual": 0.1, "relu": 0.1, "attention": 0.1}
    },
    "data": {"task": {"kind": "toy_translation", "count": 600, "vocab_size": 16, "seed": 4}, "dev_count": 50},
    "batching": {"mode": "tokens", "size": 160},
    "replicas": 2,
    "schedule": {"kind": "rnmt", "warmup": 20},
    "training": {"steps": 60, "eval_every": 20, "eval_sentences": 50},
    "seed": 17
  })");
  std::vector<std::string> logs;
  for (const char* run : {"first", "second"}) {
    j["paths"] = {{"output_dir", (root / run).string()}};
    fs::remove_all(root / run);
    cli::train(cli::parse_run_config(j));
    logs.push_back(slurp(root / run / "metrics.jsonl"));
  }
  // The header records each run's output directory; compare the weights.
  const auto weights = [](const fs::path& p) {
    std::map<std::string, std::vector<double>> out;
    for (const auto& [name, v] : cli::load_checkpoint(p.string()).tensors) out[name] = v;
    return out;
  };
  const bool same_ckpt = weights(root / "first" / "model.ckpt") == weights(root / "second" / "model.ckpt");
  std::size_t lines = static_cast<std::size_t>(std::count(logs[0].begin(), logs[0].end(), '\n'));
  return {logs[0] == logs[1] && !logs[0].empty() && same_ckpt,
          std::to_string(lines) + " metric lines, logs identical " + (logs[0] == logs[1] ? "yes" : "no") +
              ", checkpoints identical " + (same_ckpt ? "yes" : "no") + " (dropout on, 2 replicas)"};
}

}  // namespace

int main(int argc, char** argv) {
  kernels::tune_allocator();
  struct Criterion {
    const char* name;
    Outcome (*run)();
  };
  const Criterion criteria[] = {{"gradient correctness", gradient_correctness},
                                {"schedule fidelity", schedule_fidelity},
                                {"parameter counts", parameter_counts},
                                {"FLOP ordering", flop_ordering},
                                {"toy-task convergence", toy_convergence},
                                {"sync-replica equivalence", replica_equivalence},
                                {"adaptive clipping", adaptive_clipping},
                                {"decoding and BLEU", decoding_and_bleu},
                                {"evaluation window", evaluation_window},
                                {"hybrid structure", hybrid_contracts},
                                {"determinism", determinism}};
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  std::cout << "kernels: " << kernels::name(kernels::active_isa()) << std::endl;
  int failures = 0;
  for (int i = 0; i < 11; ++i) {
    if (!selected.empty() && selected.count(i + 1) == 0) continue;
    Outcome o;
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].name << ": " << o.detail
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
