// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "s2s/optim.hpp"

namespace s2s::optim {

double GradNormStats::stddev() const { return std::sqrt(variance); }

void GradNormStats::update(double log_norm, double decay) {
  if (accepted == 0) {
    mean = log_norm;
    variance = 0.0;
  } else {
    const double diff = log_norm - mean;
    const double increment = (1.0 - decay) * diff;
    mean += increment;
    variance = decay * (variance + diff * increment);
  }
  ++accepted;
}

ClipDecision adaptive_clip_check(double grad_norm, GradNormStats& stats, const ClipConfig& config) {
  if (!std::isfinite(grad_norm)) return ClipDecision::abort;
  const double log_norm = std::log(grad_norm);
  if (config.enabled && stats.accepted >= std::max<std::size_t>(config.warmup_steps, 1) &&
      log_norm > stats.mean + config.threshold * stats.stddev())
    return ClipDecision::abort;
  stats.update(log_norm, config.decay);
  return ClipDecision::accept;
}

}  // namespace s2s::optim
