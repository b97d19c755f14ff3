// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <fstream>
#include <numeric>

#include "s2s/data.hpp"
#include "s2s/errors.hpp"

namespace s2s::data {

std::size_t TokenMatrix::tokens() const { return std::accumulate(lengths.begin(), lengths.end(), std::size_t{0}); }

TokenMatrix pad_rows(const std::vector<std::vector<int>>& rows) {
  TokenMatrix m;
  m.rows = rows.size();
  for (const auto& r : rows) m.cols = std::max(m.cols, r.size());
  m.ids.assign(m.rows * m.cols, kPad);
  m.valid.assign(m.rows * m.cols, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    m.lengths.push_back(rows[r].size());
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      m.ids[r * m.cols + c] = rows[r][c];
      m.valid[r * m.cols + c] = 1.0;
    }
  }
  return m;
}

Batch make_batch(std::span<const Pair> pairs, std::span<const std::size_t> indices) {
  if (indices.empty()) fail(ErrorKind::EmptyBatch, "batch has no sentence pairs");
  std::vector<std::vector<int>> src, tin, tout;
  for (std::size_t i : indices) {
    const Pair& p = pairs[i];
    if (p.source.empty()) fail(ErrorKind::EmptySequence, "pair " + std::to_string(i) + " has an empty source");
    src.push_back(p.source);
    tin.push_back({kBos});
    tin.back().insert(tin.back().end(), p.target.begin(), p.target.end());
    tout.push_back(p.target);
    tout.back().push_back(kEos);
  }
  Batch b{pad_rows(src), pad_rows(tin), pad_rows(tout), {indices.begin(), indices.end()}};
  return b;
}

namespace {

std::vector<std::size_t> length_order(std::span<const Pair> pairs) {
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::max(pairs[a].source.size(), pairs[a].target.size()) <
           std::max(pairs[b].source.size(), pairs[b].target.size());
  });
  return order;
}

}  // namespace

std::vector<std::vector<std::size_t>> batch_by_sentences(std::span<const Pair> pairs, std::size_t batch_size) {
  if (batch_size == 0) fail(ErrorKind::ConfigInvalid, "batch size must be positive");
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i : length_order(pairs)) {
    if (groups.empty() || groups.back().size() == batch_size) groups.emplace_back();
    groups.back().push_back(i);
  }
  return groups;
}

std::vector<std::vector<std::size_t>> batch_by_tokens(std::span<const Pair> pairs, std::size_t token_budget) {
  std::vector<std::vector<std::size_t>> groups;
  std::size_t max_src = 0, max_tgt = 0;
  for (std::size_t i : length_order(pairs)) {
    const std::size_t s = pairs[i].source.size(), t = pairs[i].target.size();
    if (s > token_budget || t > token_budget)
      fail(ErrorKind::SentenceExceedsBudget, "pair " + std::to_string(i) + " has " + std::to_string(std::max(s, t)) +
                                                 " tokens, budget " + std::to_string(token_budget));
    const std::size_t rows = groups.empty() ? 0 : groups.back().size();
    const std::size_t ns = std::max(max_src, s), nt = std::max(max_tgt, t);
    if (groups.empty() || (rows + 1) * ns > token_budget || (rows + 1) * nt > token_budget) {
      groups.emplace_back();
      max_src = s;
      max_tgt = t;
    } else {
      max_src = ns;
      max_tgt = nt;
    }
    groups.back().push_back(i);
  }
  return groups;
}

void shuffle_groups(std::vector<std::vector<std::size_t>>& groups, Rng& rng) {
  for (std::size_t i = groups.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(groups[i - 1], groups[j]);
  }
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open '" + path + "'");
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::vector<Pair> load_corpus(const std::string& source_path, const std::string& target_path,
                              const Vocabulary& vocab) {
  const auto src = read_lines(source_path);
  const auto tgt = read_lines(target_path);
  if (src.size() != tgt.size())
    fail(ErrorKind::IoError, "corpus sides differ: " + std::to_string(src.size()) + " vs " +
                                 std::to_string(tgt.size()) + " lines");
  std::vector<Pair> pairs(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) pairs[i] = {vocab.encode(src[i]), vocab.encode(tgt[i])};
  return pairs;
}

}  // namespace s2s::data
