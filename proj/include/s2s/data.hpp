// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "s2s/tensor.hpp"

namespace s2s::data {

inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr std::size_t kReserved = 4;

// Token <-> id bijection with ids 0..3 fixed to pad, bos, eos, unk.
class Vocabulary {
 public:
  Vocabulary();
  // Reserved tokens followed by `tokens` in order; duplicates are ignored.
  explicit Vocabulary(const std::vector<std::string>& tokens);
  // Reserved tokens plus "w4" .. "w{size-1}".
  static Vocabulary numbered(std::size_t size);

  std::size_t size() const noexcept { return tokens_.size(); }
  int id(const std::string& token) const;  // unk when absent
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::vector<int> encode(const std::string& line) const;
  // Stops at the first eos; skips pad and bos.
  std::string decode(std::span<const int> ids) const;

 private:
  void insert(const std::string& token);
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct Pair {
  std::vector<int> source;
  std::vector<int> target;  // without eos
};

enum class TaskKind { copy, reverse, toy_translation };

TaskKind parse_task_kind(const std::string& name);
const char* to_string(TaskKind kind);

struct TaskSpec {
  TaskKind kind = TaskKind::toy_translation;
  std::size_t count = 1000;
  std::size_t min_length = 4;
  std::size_t max_length = 12;
  std::size_t vocab_size = 16;
  std::uint64_t seed = 1;
  // toy_translation substitution: 4 + ((i - 4) * multiplier + offset) mod (V - 4)
  std::size_t multiplier = 5;
  std::size_t offset = 3;
};

int substitute(int token, const TaskSpec& spec);
// Sequences with tokens drawn uniformly from the non-reserved ids.
std::vector<Pair> gen_task(const TaskSpec& spec);

// Row-major padded id matrix with per-row lengths and 0/1 validity flags.
struct TokenMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<int> ids;
  std::vector<double> valid;
  std::vector<std::size_t> lengths;

  int at(std::size_t r, std::size_t c) const { return ids[r * cols + c]; }
  std::size_t tokens() const;
};

TokenMatrix pad_rows(const std::vector<std::vector<int>>& rows);

// target_in = bos + target, target_out = target + eos.
struct Batch {
  TokenMatrix source;
  TokenMatrix target_in;
  TokenMatrix target_out;
  std::vector<std::size_t> pair_index;

  std::size_t sentences() const noexcept { return source.rows; }
  std::size_t target_tokens() const { return target_out.tokens(); }
};

Batch make_batch(std::span<const Pair> pairs, std::span<const std::size_t> indices);

// Both schemes sort pairs by length (stable, ties by index) before grouping
// and return groups of indices into `pairs`.
std::vector<std::vector<std::size_t>> batch_by_sentences(std::span<const Pair> pairs, std::size_t batch_size);
// Greedy fill: rows * longest source and rows * longest target both stay
// within the budget. Lengths exclude the eos appended at batching time.
std::vector<std::vector<std::size_t>> batch_by_tokens(std::span<const Pair> pairs, std::size_t token_budget);

// Deterministic Fisher-Yates over batch order.
void shuffle_groups(std::vector<std::vector<std::size_t>>& groups, Rng& rng);

std::vector<std::string> read_lines(const std::string& path);
// Parallel corpus of whitespace-tokenized lines; unknown tokens map to unk.
std::vector<Pair> load_corpus(const std::string& source_path, const std::string& target_path,
                              const Vocabulary& vocab);

}  // namespace s2s::data
