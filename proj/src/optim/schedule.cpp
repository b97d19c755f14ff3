// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "s2s/errors.hpp"
#include "s2s/optim.hpp"

namespace s2s::optim {

namespace {

void check_rnmt(const RnmtSchedule& c) {
  if (!(c.replicas >= 1.0) || !(c.warmup > 0.0) || !(c.decay_start > 0.0) || !(c.decay_end > c.decay_start) ||
      !(c.base > 0.0) || !(c.floor >= 0.0))
    fail(ErrorKind::ConfigInvalid, "rnmt schedule needs n >= 1, p > 0, 0 < s < e, base > 0, floor >= 0");
}

void check_transformer(const TransformerSchedule& c) {
  if (!(c.r0 > 0.0) || !(c.warmup > 0.0) || !(c.model_dim > 0.0))
    fail(ErrorKind::ConfigInvalid, "transformer schedule needs r0 > 0, p > 0, d_model > 0");
}

}  // namespace

double lr_rnmt(double t, const RnmtSchedule& c) {
  check_rnmt(c);
  if (!(t >= 0.0)) fail(ErrorKind::ConfigInvalid, "schedule step must be non-negative");
  const double n = c.replicas, p = c.warmup, s = c.decay_start, e = c.decay_end;
  const double warm = 1.0 + t * (n - 1.0) / (n * p);
  const double decay = n * std::pow(2.0 * n, (s - n * t) / (e - s));
  const double lr = c.base * std::min({warm, n, decay});
  return n * t >= e ? std::max(lr, c.floor) : lr;
}

double lr_transformer(double t, const TransformerSchedule& c) {
  check_transformer(c);
  if (!(t >= 0.0)) fail(ErrorKind::ConfigInvalid, "schedule step must be non-negative");
  const double p = c.warmup;
  return c.r0 / std::sqrt(c.model_dim) * std::min((t + 1.0) / (p * std::sqrt(p)), 1.0 / std::sqrt(t + 1.0));
}

double LearningRate::at(std::size_t step) const {
  const double t = static_cast<double>(step);
  switch (kind) {
    case ScheduleKind::constant: return constant;
    case ScheduleKind::rnmt: return lr_rnmt(t, rnmt);
    case ScheduleKind::transformer: return lr_transformer(t, transformer);
  }
  return constant;
}

void LearningRate::validate() const {
  switch (kind) {
    case ScheduleKind::constant:
      if (!(constant > 0.0)) fail(ErrorKind::ConfigInvalid, "constant learning rate must be positive");
      break;
    case ScheduleKind::rnmt: check_rnmt(rnmt); break;
    case ScheduleKind::transformer: check_transformer(transformer); break;
  }
}

}  // namespace s2s::optim
