// SPDX-License-Identifier: Apache-2.0
#include <algorithm>

#include "s2s/decode.hpp"
#include "s2s/errors.hpp"

namespace s2s::decode {

ModelScorer::ModelScorer(const arch::Model& model, std::span<const int> source) : model_(model) {
  if (source.empty()) fail(ErrorKind::EmptySource, "cannot decode an empty source sentence");
  NoGradGuard no_grad;
  const data::TokenMatrix src = data::pad_rows({{source.begin(), source.end()}});
  state_ = model_.start(model_.encode(src, nn::ForwardContext{}));
}

std::size_t ModelScorer::vocab_size() const { return model_.config().vocab_size; }

std::vector<double> ModelScorer::step(std::span<const int> tokens) {
  NoGradGuard no_grad;
  const Tensor logp = model_.step(*state_, tokens);
  return {logp.data().begin(), logp.data().end()};
}

void ModelScorer::reorder(std::span<const std::size_t> rows) {
  NoGradGuard no_grad;
  state_->reorder(rows);
}

namespace {

struct Candidate {
  double score;
  std::size_t parent;
  int token;
};

double ranking_score(const Hypothesis& h, bool normalize) {
  return normalize ? h.score / static_cast<double>(h.tokens.size()) : h.score;
}

bool better_finished(const Hypothesis& a, const Hypothesis& b, bool normalize) {
  const double sa = ranking_score(a, normalize), sb = ranking_score(b, normalize);
  if (sa != sb) return sa > sb;
  if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
  return a.tokens < b.tokens;
}

}  // namespace

Hypothesis beam_search(Scorer& scorer, const BeamOptions& options) {
  if (options.beam == 0) fail(ErrorKind::ConfigInvalid, "beam size must be positive");
  if (options.max_length == 0) fail(ErrorKind::ConfigInvalid, "max_length must be positive");
  const std::size_t vocab = scorer.vocab_size();
  std::vector<Hypothesis> live(1), finished;
  std::vector<int> feed{data::kBos};
  std::vector<Candidate> candidates;
  while (!live.empty()) {
    const std::vector<double> logp = scorer.step(feed);
    candidates.clear();
    for (std::size_t r = 0; r < live.size(); ++r)
      for (std::size_t v = 0; v < vocab; ++v)
        candidates.push_back({live[r].score + logp[r * vocab + v], r, static_cast<int>(v)});
    const std::size_t keep = std::min(options.beam, candidates.size());
    // Every live hypothesis has the same length, so ties fall to the token
    // id and then to the parent's rank.
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.token != b.token) return a.token < b.token;
                        return a.parent < b.parent;
                      });
    std::vector<Hypothesis> next;
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < keep; ++i) {
      const Candidate& c = candidates[i];
      Hypothesis h{live[c.parent].tokens, c.score, false};
      h.tokens.push_back(c.token);
      if (c.token == data::kEos || h.tokens.size() >= options.max_length) {
        h.finished = true;
        finished.push_back(std::move(h));
      } else {
        rows.push_back(c.parent);
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
    if (live.empty()) break;
    if (!options.length_normalize && !finished.empty()) {
      double best_finished = finished.front().score, best_live = live.front().score;
      for (const auto& h : finished) best_finished = std::max(best_finished, h.score);
      for (const auto& h : live) best_live = std::max(best_live, h.score);
      // Scores only decrease as tokens are appended.
      if (best_finished >= best_live) break;
    }
    scorer.reorder(rows);
    feed.clear();
    for (const auto& h : live) feed.push_back(h.tokens.back());
  }
  return *std::min_element(finished.begin(), finished.end(), [&](const Hypothesis& a, const Hypothesis& b) {
    return better_finished(a, b, options.length_normalize);
  });
}

Hypothesis greedy_search(Scorer& scorer, std::size_t max_length) {
  if (max_length == 0) fail(ErrorKind::ConfigInvalid, "max_length must be positive");
  const std::size_t vocab = scorer.vocab_size();
  Hypothesis h;
  int token = data::kBos;
  while (true) {
    const std::vector<double> logp = scorer.step(std::span<const int>(&token, 1));
    token = static_cast<int>(std::max_element(logp.begin(), logp.begin() + static_cast<std::ptrdiff_t>(vocab)) -
                             logp.begin());
    h.score += logp[static_cast<std::size_t>(token)];
    h.tokens.push_back(token);
    if (token == data::kEos || h.tokens.size() >= max_length) break;
  }
  h.finished = true;
  return h;
}

Hypothesis beam_search(const arch::Model& model, std::span<const int> source, const BeamOptions& options) {
  ModelScorer scorer(model, source);
  return beam_search(scorer, options);
}

std::vector<std::vector<int>> greedy_decode(const arch::Model& model, const data::TokenMatrix& source,
                                            std::size_t max_length) {
  if (source.rows == 0) fail(ErrorKind::EmptyCorpus, "nothing to decode");
  for (std::size_t len : source.lengths)
    if (len == 0) fail(ErrorKind::EmptySource, "cannot decode an empty source sentence");
  NoGradGuard no_grad;
  const std::size_t rows = source.rows, vocab = model.config().vocab_size;
  auto state = model.start(model.encode(source, nn::ForwardContext{}));
  std::vector<std::vector<int>> out(rows);
  std::vector<int> feed(rows, data::kBos);
  std::vector<bool> done(rows, false);
  for (std::size_t t = 0; t < max_length; ++t) {
    const Tensor logp = model.step(*state, feed);
    const auto values = logp.data();
    bool all_done = true;
    for (std::size_t r = 0; r < rows; ++r) {
      if (done[r]) {
        feed[r] = data::kEos;
        continue;
      }
      const auto row = values.subspan(r * vocab, vocab);
      const int token = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
      feed[r] = token;
      if (token == data::kEos)
        done[r] = true;
      else
        out[r].push_back(token);
      all_done = all_done && done[r];
    }
    if (all_done) break;
  }
  return out;
}

}  // namespace s2s::decode
