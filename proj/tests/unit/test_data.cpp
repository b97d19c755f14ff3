// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <fstream>
#include <set>

#include "helpers.hpp"
#include "s2s/data.hpp"

using namespace s2s;
using namespace s2s::data;
using test::error_kind;

namespace {

std::vector<Pair> pairs_of_lengths(const std::vector<std::size_t>& lengths) {
  std::vector<Pair> pairs;
  for (std::size_t n : lengths) pairs.push_back({std::vector<int>(n, 5), std::vector<int>(n, 6)});
  return pairs;
}

std::vector<std::size_t> group_sizes(const std::vector<std::vector<std::size_t>>& groups) {
  std::vector<std::size_t> sizes;
  for (const auto& g : groups) sizes.push_back(g.size());
  return sizes;
}

}  // namespace

TEST_CASE("sentence batching splits ten pairs into 4, 4, 2") {
  const auto pairs = pairs_of_lengths({3, 1, 4, 1, 5, 9, 2, 6, 5, 3});
  const auto groups = batch_by_sentences(pairs, 4);
  CHECK(group_sizes(groups) == std::vector<std::size_t>{4, 4, 2});
  // Sorted by length, ties broken by index.
  CHECK(groups[0] == std::vector<std::size_t>{1, 3, 6, 0});
  CHECK(error_kind([&] { batch_by_sentences(pairs, 0); }) == ErrorKind::ConfigInvalid);
}

TEST_CASE("token batching keeps rows times longest sentence within the budget") {
  const auto pairs = pairs_of_lengths({5, 5, 5});
  CHECK(batch_by_tokens(pairs, 10) == std::vector<std::vector<std::size_t>>{{0, 1}, {2}});
  const auto mixed = pairs_of_lengths({2, 3, 2, 7, 4, 1});
  for (const auto& g : batch_by_tokens(mixed, 9)) {
    std::size_t longest = 0;
    for (std::size_t i : g) longest = std::max(longest, mixed[i].source.size());
    CHECK(g.size() * longest <= 9);
  }
  CHECK(error_kind([&] { batch_by_tokens(pairs, 4); }) == ErrorKind::SentenceExceedsBudget);
}

TEST_CASE("every pair lands in exactly one batch and shuffling is seeded") {
  TaskSpec spec;
  spec.count = 97;
  const auto pairs = gen_task(spec);
  auto groups = batch_by_sentences(pairs, 8);
  auto copy = groups;
  Rng a(5), b(5);
  shuffle_groups(groups, a);
  shuffle_groups(copy, b);
  CHECK(groups == copy);
  std::set<std::size_t> seen;
  for (const auto& g : groups) seen.insert(g.begin(), g.end());
  CHECK(seen.size() == 97);
}

TEST_CASE("batches pad with zero validity and shift the target") {
  const std::vector<Pair> pairs{{{4, 5, 6}, {7, 8}}, {{9}, {10, 11, 12}}};
  const std::vector<std::size_t> idx{0, 1};
  const Batch b = make_batch(pairs, idx);
  CHECK(b.source.cols == 3);
  CHECK(b.source.valid == std::vector<double>{1, 1, 1, 1, 0, 0});
  CHECK(b.source.at(1, 1) == kPad);
  CHECK(b.target_in.ids == std::vector<int>{kBos, 7, 8, 0, kBos, 10, 11, 12});
  CHECK(b.target_out.ids == std::vector<int>{7, 8, kEos, 0, 10, 11, 12, kEos});
  CHECK(b.target_tokens() == 7);
  CHECK(error_kind([&] { make_batch(pairs, std::vector<std::size_t>{}); }) == ErrorKind::EmptyBatch);
  const std::vector<Pair> empty{{{}, {4}}};
  CHECK(error_kind([&] { make_batch(empty, std::vector<std::size_t>{0}); }) == ErrorKind::EmptySequence);
}

TEST_CASE("vocabulary reserves pad, bos, eos and unk") {
  const Vocabulary v({"the", "cat", "the"});
  CHECK(v.size() == 6);
  CHECK(v.id("cat") == 5);
  CHECK(v.id("dog") == kUnk);
  const auto ids = v.encode("the  cat dog");
  CHECK(ids == std::vector<int>{4, 5, kUnk});
  const std::vector<int> with_eos{kBos, 4, 5, kEos, 4};
  CHECK(v.decode(with_eos) == "the cat");
  CHECK(Vocabulary::numbered(8).token(7) == "w7");
}

TEST_CASE("task generators produce the declared transforms") {
  TaskSpec spec;
  spec.count = 50;
  spec.vocab_size = 20;
  for (auto kind : {TaskKind::copy, TaskKind::reverse, TaskKind::toy_translation}) {
    spec.kind = kind;
    for (const Pair& p : gen_task(spec)) {
      REQUIRE(p.source.size() == p.target.size());
      CHECK(p.source.size() >= spec.min_length);
      CHECK(p.source.size() <= spec.max_length);
      const std::size_t n = p.source.size();
      for (std::size_t i = 0; i < n; ++i) {
        const int s = kind == TaskKind::copy ? p.source[i] : p.source[n - 1 - i];
        CHECK(p.target[i] == (kind == TaskKind::toy_translation ? substitute(s, spec) : s));
      }
    }
  }
  CHECK(gen_task(spec).front().source == gen_task(spec).front().source);
  CHECK(parse_task_kind(to_string(TaskKind::reverse)) == TaskKind::reverse);
  spec.multiplier = 4;
  CHECK(error_kind([&] { gen_task(spec); }) == ErrorKind::ConfigInvalid);
}

TEST_CASE("corpus loading maps lines through the vocabulary") {
  const std::string src = "/tmp/s2s_test_corpus.src", tgt = "/tmp/s2s_test_corpus.tgt";
  std::ofstream(src) << "a b\nc\n";
  std::ofstream(tgt) << "x\ny z\n";
  const Vocabulary v({"a", "b", "c", "x", "y", "z"});
  const auto pairs = load_corpus(src, tgt, v);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[1].target == std::vector<int>{8, 9});
  std::ofstream(tgt) << "x\n";
  CHECK(error_kind([&] { load_corpus(src, tgt, v); }) == ErrorKind::IoError);
  CHECK(error_kind([&] { read_lines("/nonexistent/file"); }) == ErrorKind::IoError);
  std::remove(src.c_str());
  std::remove(tgt.c_str());
}
