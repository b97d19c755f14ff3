// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "s2s/decode.hpp"
#include "s2s/errors.hpp"

namespace s2s::decode {

WindowResult best_eval_window(std::span<const double> series, std::size_t window) {
  if (window == 0) fail(ErrorKind::ConfigInvalid, "window must be positive");
  if (series.size() < window)
    fail(ErrorKind::SeriesTooShort, "series of " + std::to_string(series.size()) + " evaluations, window " +
                                        std::to_string(window));
  const double w = static_cast<double>(window);
  WindowResult best;
  double best_sum = 0.0;
  for (std::size_t start = 0; start + window <= series.size(); ++start) {
    double sum = 0.0;
    for (std::size_t i = start; i < start + window; ++i) sum += series[i];
    if (start == 0 || sum > best_sum) {
      best_sum = sum;
      best.start = start;
    }
  }
  best.mean = best_sum / w;
  double sq = 0.0;
  for (std::size_t i = best.start; i < best.start + window; ++i) sq += (series[i] - best.mean) * (series[i] - best.mean);
  best.stddev = std::sqrt(sq / w);
  return best;
}

}  // namespace s2s::decode
