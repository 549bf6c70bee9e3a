/* Copyright 2026 The fopkit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "fopkit/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "fopkit/error.hpp"

namespace fopkit {

SchedulerKind parse_scheduler_kind(std::string_view name) {
  if (name == "constant") return SchedulerKind::kConstant;
  if (name == "cosine") return SchedulerKind::kCosine;
  if (name == "plateau") return SchedulerKind::kPlateau;
  throw Error(ErrorKind::kInvalidParam, "unknown scheduler '" + std::string(name) + "'");
}

const char* to_string(SchedulerKind kind) {
  switch (kind) {
    case SchedulerKind::kConstant: return "constant";
    case SchedulerKind::kCosine: return "cosine";
    case SchedulerKind::kPlateau: return "plateau";
  }
  return "constant";
}

void SchedulerSpec::validate() const {
  if (!(cosine_floor > 0.0) || !(cosine_factor > 0.0) || max_epoch == 0) {
    throw Error(ErrorKind::kInvalidParam, "cosine parameters must be positive");
  }
  if (patience == 0 || !(plateau_threshold > 0.0)) {
    throw Error(ErrorKind::kInvalidParam, "plateau patience and threshold must be positive");
  }
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) {
    throw Error(ErrorKind::kInvalidParam, "plateau factor must lie in (0, 1)");
  }
}

double cosine_lr(std::size_t epoch, double alpha0, const SchedulerSpec& spec) {
  const double t = static_cast<double>(std::min(epoch, spec.max_epoch));
  const double angle = 2.0 * spec.cosine_factor * std::numbers::pi * t / static_cast<double>(spec.max_epoch);
  return spec.cosine_floor + 0.5 * (alpha0 - spec.cosine_floor) * (1.0 + std::cos(angle));
}

bool PlateauTracker::observe(double metric, const SchedulerSpec& spec) {
  // Relative improvement must be strictly larger than the threshold.
  if (metric < best_ * (1.0 - spec.plateau_threshold) || best_ == std::numeric_limits<double>::infinity()) {
    best_ = metric;
    bad_epochs_ = 0;
    return false;
  }
  ++bad_epochs_;
  if (bad_epochs_ >= spec.patience) {
    bad_epochs_ = 0;
    return true;
  }
  return false;
}

double plateau_lr(std::span<const double> history, const SchedulerSpec& spec, double current) {
  PlateauTracker tracker;
  bool decay = false;
  for (double m : history) decay = tracker.observe(m, spec);
  return decay ? current * spec.plateau_factor : current;
}

LrScheduler::LrScheduler(SchedulerSpec spec, double base_lr)
    : spec_(spec), base_lr_(base_lr), current_(base_lr) {
  spec_.validate();
  if (spec_.kind == SchedulerKind::kCosine) current_ = cosine_lr(0, base_lr_, spec_);
}

double LrScheduler::end_epoch(std::size_t epoch, double metric) {
  switch (spec_.kind) {
    case SchedulerKind::kConstant: break;
    case SchedulerKind::kCosine: current_ = cosine_lr(epoch + 1, base_lr_, spec_); break;
    case SchedulerKind::kPlateau:
      if (plateau_.observe(metric, spec_)) current_ *= spec_.plateau_factor;
      break;
  }
  return current_;
}

}  // namespace fopkit
