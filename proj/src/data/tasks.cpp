// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <numeric>

#include "s2s/data.hpp"
#include "s2s/errors.hpp"

namespace s2s::data {

TaskKind parse_task_kind(const std::string& name) {
  if (name == "copy") return TaskKind::copy;
  if (name == "reverse") return TaskKind::reverse;
  if (name == "toy_translation") return TaskKind::toy_translation;
  fail(ErrorKind::ConfigInvalid, "unknown task kind '" + name + "'");
}

const char* to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::copy: return "copy";
    case TaskKind::reverse: return "reverse";
    case TaskKind::toy_translation: return "toy_translation";
  }
  return "?";
}

int substitute(int token, const TaskSpec& spec) {
  const std::size_t span = spec.vocab_size - kReserved;
  const std::size_t i = static_cast<std::size_t>(token) - kReserved;
  return static_cast<int>(kReserved + (i * spec.multiplier + spec.offset) % span);
}

std::vector<Pair> gen_task(const TaskSpec& spec) {
  if (spec.vocab_size <= kReserved + 1)
    fail(ErrorKind::ConfigInvalid, "task vocabulary " + std::to_string(spec.vocab_size) + " is too small");
  if (spec.min_length == 0 || spec.min_length > spec.max_length)
    fail(ErrorKind::ConfigInvalid, "task length range is empty");
  if (spec.kind == TaskKind::toy_translation && std::gcd(spec.multiplier, spec.vocab_size - kReserved) != 1)
    fail(ErrorKind::ConfigInvalid, "substitution multiplier " + std::to_string(spec.multiplier) +
                                       " is not invertible modulo " + std::to_string(spec.vocab_size - kReserved));
  Rng rng(spec.seed);
  std::uniform_int_distribution<std::size_t> length(spec.min_length, spec.max_length);
  std::uniform_int_distribution<int> token(static_cast<int>(kReserved), static_cast<int>(spec.vocab_size) - 1);
  std::vector<Pair> pairs(spec.count);
  for (auto& p : pairs) {
    p.source.resize(length(rng));
    for (int& t : p.source) t = token(rng);
    p.target = p.source;
    if (spec.kind != TaskKind::copy) std::reverse(p.target.begin(), p.target.end());
    if (spec.kind == TaskKind::toy_translation)
      for (int& t : p.target) t = substitute(t, spec);
  }
  return pairs;
}

}  // namespace s2s::data
