// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <map>
#include <sstream>

#include "s2s/decode.hpp"
#include "s2s/errors.hpp"

namespace s2s::decode {

Sentence tokenize(const std::string& line) {
  std::istringstream in(line);
  Sentence words;
  for (std::string w; in >> w;) words.push_back(w);
  return words;
}

namespace {

std::map<Sentence, std::size_t> ngram_counts(const Sentence& s, std::size_t n) {
  std::map<Sentence, std::size_t> counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i)
    ++counts[Sentence(s.begin() + static_cast<std::ptrdiff_t>(i), s.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

}  // namespace

BleuResult bleu(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references,
                const BleuOptions& options) {
  if (hypotheses.empty() || references.empty()) fail(ErrorKind::EmptyCorpus, "BLEU needs at least one sentence");
  if (hypotheses.size() != references.size())
    fail(ErrorKind::ShapeMismatch, std::to_string(hypotheses.size()) + " hypotheses for " +
                                       std::to_string(references.size()) + " references");
  if (options.max_n == 0) fail(ErrorKind::ConfigInvalid, "max_n must be positive");
  std::vector<double> matches(options.max_n, 0.0), totals(options.max_n, 0.0);
  BleuResult result;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    result.hypothesis_length += hypotheses[i].size();
    result.reference_length += references[i].size();
    for (std::size_t n = 1; n <= options.max_n; ++n) {
      const auto hyp = ngram_counts(hypotheses[i], n);
      const auto ref = ngram_counts(references[i], n);
      for (const auto& [gram, count] : hyp) {
        const auto it = ref.find(gram);
        matches[n - 1] += static_cast<double>(std::min(count, it == ref.end() ? std::size_t{0} : it->second));
        totals[n - 1] += static_cast<double>(count);
      }
    }
  }
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 0; n < options.max_n; ++n) {
    double m = matches[n], t = totals[n];
    if (options.smooth && n > 0) {
      m += 1.0;
      t += 1.0;
    }
    const double p = t > 0.0 ? m / t : 0.0;
    result.precisions.push_back(p);
    if (p <= 0.0)
      zero = true;
    else
      log_sum += std::log(p);
  }
  const double c = static_cast<double>(result.hypothesis_length), r = static_cast<double>(result.reference_length);
  result.brevity_penalty = c <= 0.0 ? 0.0 : (c > r ? 1.0 : std::exp(1.0 - r / c));
  result.score = zero ? 0.0 : 100.0 * result.brevity_penalty * std::exp(log_sum / static_cast<double>(options.max_n));
  return result;
}

BleuResult bleu_lines(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references,
                      const BleuOptions& options) {
  std::vector<Sentence> h, r;
  for (const auto& line : hypotheses) h.push_back(tokenize(line));
  for (const auto& line : references) r.push_back(tokenize(line));
  return bleu(h, r, options);
}

BleuResult bleu_ids(const std::vector<std::vector<int>>& hypotheses, const std::vector<std::vector<int>>& references,
                    const BleuOptions& options) {
  auto words = [](const std::vector<int>& ids) {
    Sentence s;
    for (int id : ids) s.push_back(std::to_string(id));
    return s;
  };
  std::vector<Sentence> h, r;
  for (const auto& ids : hypotheses) h.push_back(words(ids));
  for (const auto& ids : references) r.push_back(words(ids));
  return bleu(h, r, options);
}

}  // namespace s2s::decode
