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

#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string_view>

namespace fopkit {

enum class SchedulerKind { kConstant, kCosine, kPlateau };

SchedulerKind parse_scheduler_kind(std::string_view name);
const char* to_string(SchedulerKind kind);

struct SchedulerSpec {
  SchedulerKind kind = SchedulerKind::kConstant;
  // Cosine: alpha_t = floor + 0.5 (alpha0 - floor)(1 + cos(2 factor pi t / max_epoch)).
  double cosine_floor = 0.001;
  double cosine_factor = 0.47;
  std::size_t max_epoch = 100;
  // Plateau: multiply by plateau_factor once the monitored loss has gone
  // `patience` epochs without a relative improvement larger than threshold.
  std::size_t patience = 5;
  double plateau_factor = 0.1;
  double plateau_threshold = 1e-4;

  void validate() const;
};

double cosine_lr(std::size_t epoch, double alpha0, const SchedulerSpec& spec);

/// Reduce-on-plateau bookkeeping for a minimized metric.
class PlateauTracker {
 public:
  // Returns true when this observation triggers a decay.
  bool observe(double metric, const SchedulerSpec& spec);

  double best() const noexcept { return best_; }
  std::size_t bad_epochs() const noexcept { return bad_epochs_; }
  void restore(double best, std::size_t bad_epochs) {
    best_ = best;
    bad_epochs_ = bad_epochs;
  }

 private:
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs_ = 0;
};

/// Replays `history` and returns current * factor if its last entry triggers a
/// decay, otherwise current.
double plateau_lr(std::span<const double> history, const SchedulerSpec& spec, double current);

/// Per-epoch learning rate driver for all three schedule kinds.
class LrScheduler {
 public:
  LrScheduler() = default;
  LrScheduler(SchedulerSpec spec, double base_lr);

  double current() const noexcept { return current_; }
  // Called once `epoch` has finished with its monitored loss; returns the
  // rate for epoch + 1.
  double end_epoch(std::size_t epoch, double metric);

  const SchedulerSpec& spec() const noexcept { return spec_; }
  double base_lr() const noexcept { return base_lr_; }
  const PlateauTracker& plateau() const noexcept { return plateau_; }
  void restore(double current, double best, std::size_t bad_epochs) {
    current_ = current;
    plateau_.restore(best, bad_epochs);
  }

 private:
  SchedulerSpec spec_;
  double base_lr_ = 0.0;
  double current_ = 0.0;
  PlateauTracker plateau_;
};

}  // namespace fopkit
