// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "s2s/arch.hpp"
#include "s2s/data.hpp"

namespace s2s::decode {

// ---------------------------------------------------------------------------
// Search.

// Next-token log-probabilities for a set of decoding rows.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::size_t vocab_size() const = 0;
  // Feeds one token per row; returns rows x V log-probabilities.
  virtual std::vector<double> step(std::span<const int> tokens) = 0;
  // Row i becomes old row rows[i].
  virtual void reorder(std::span<const std::size_t> rows) = 0;
};

// Decodes one encoded source sentence with a model.
class ModelScorer final : public Scorer {
 public:
  ModelScorer(const arch::Model& model, std::span<const int> source);
  std::size_t vocab_size() const override;
  std::vector<double> step(std::span<const int> tokens) override;
  void reorder(std::span<const std::size_t> rows) override;

 private:
  const arch::Model& model_;
  std::unique_ptr<arch::DecoderState> state_;
};

struct Hypothesis {
  std::vector<int> tokens;  // includes the final eos when finished by one
  double score = 0.0;       // summed log-probability
  bool finished = false;
};

struct BeamOptions {
  std::size_t beam = 4;
  std::size_t max_length = 50;
  // Rank finished hypotheses by score / length instead of raw score.
  bool length_normalize = false;
};

// Starts from a single scorer row fed with bos. Candidates are ranked by
// score, then lower token id, then shorter length. A hypothesis is finished
// when it emits eos or reaches max_length.
Hypothesis beam_search(Scorer& scorer, const BeamOptions& options);
// Argmax at every step, ties to the lower token id.
Hypothesis greedy_search(Scorer& scorer, std::size_t max_length);

// Model conveniences; EmptySource on an empty sentence.
Hypothesis beam_search(const arch::Model& model, std::span<const int> source, const BeamOptions& options);
// Greedy decoding of all rows of `source` at once; output rows exclude eos.
std::vector<std::vector<int>> greedy_decode(const arch::Model& model, const data::TokenMatrix& source,
                                            std::size_t max_length);

// ---------------------------------------------------------------------------
// BLEU.

struct BleuOptions {
  std::size_t max_n = 4;
  // Add one to matches and totals for n >= 2.
  bool smooth = false;
};

struct BleuResult {
  double score = 0.0;  // 0..100
  double brevity_penalty = 0.0;
  std::vector<double> precisions;
  std::size_t hypothesis_length = 0;
  std::size_t reference_length = 0;
};

using Sentence = std::vector<std::string>;

Sentence tokenize(const std::string& line);
// Corpus-level BLEU with one reference per hypothesis.
BleuResult bleu(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references,
                const BleuOptions& options = {});
BleuResult bleu_lines(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references,
                      const BleuOptions& options = {});
BleuResult bleu_ids(const std::vector<std::vector<int>>& hypotheses, const std::vector<std::vector<int>>& references,
                    const BleuOptions& options = {});

// ---------------------------------------------------------------------------
// Evaluation window.

struct WindowResult {
  double mean = 0.0;
  double stddev = 0.0;  // population
  std::size_t start = 0;
};

// Contiguous window with the highest mean; the earliest wins ties.
WindowResult best_eval_window(std::span<const double> series, std::size_t window = 21);

// ---------------------------------------------------------------------------
// Parameter and FLOP accounting.

// Element count of every parameter the builder would allocate.
std::size_t count_params(const arch::ModelConfig& config);
// Forward-pass FLOPs (2 per multiply-add) for one sentence pair.
std::size_t count_flops(const arch::ModelConfig& config, std::size_t source_length = 50,
                        std::size_t target_length = 50);
// Human-readable statement of what the two counts include.
std::string counting_conventions();

}  // namespace s2s::decode
