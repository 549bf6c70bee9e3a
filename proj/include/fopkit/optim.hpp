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
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "fopkit/fisher.hpp"
#include "fopkit/fop.hpp"
#include "fopkit/nn.hpp"
#include "fopkit/schedule.hpp"

namespace fopkit {

enum class OptimizerKind { kSgd, kAdamw, kKfac, kFop };

OptimizerKind parse_optimizer_kind(std::string_view name);
const char* to_string(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgd;
  double lr = 0.1;  // base learning rate eta0
  double damping = 1e-3;
  double momentum = 0.0;
  double weight_decay = 0.0;
  // Heavy-ball momentum on the preconditioned KFAC/FOP direction.
  bool precond_momentum = false;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double ema_decay = 0.95;
  CurvatureSchedule curvature;
  FopOptions fop;
  SchedulerSpec scheduler;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Mutable optimizer state for one model. `lr` is the scheduled rate used by
/// the next step; `step` counts completed steps.
struct OptimizerState {
  std::size_t step = 0;
  double lr = 0.0;
  std::vector<Matrix> velocity;
  std::vector<Matrix> adam_m;
  std::vector<Matrix> adam_v;
  std::size_t adam_t = 0;
  std::vector<KroneckerFisherBlock> blocks;

  static OptimizerState create(const Model& model, const OptimizerConfig& cfg);
};

struct StepReport {
  double loss = 0.0;  // mean loss of the batch before the update
  std::size_t correct = 0;
  std::size_t batch_size = 0;
  std::vector<FopStepPlan> plans;  // FOP only, in layer order
};

// v <- m v + g;  theta <- theta - lr v - lr wd theta
void sgd_step(Model& model, const BatchTape& tape, const OptimizerConfig& cfg, OptimizerState& state);

// Bias-corrected Adam moments with decoupled weight decay.
void adamw_step(Model& model, const BatchTape& tape, const OptimizerConfig& cfg, OptimizerState& state);

// Accumulates factors every cov_interval steps and refreshes inverses every
// inv_interval steps (counted by state.step), then applies lr * M^{-1} g.
void kfac_step(Model& model, const BatchTape& tape, const OptimizerConfig& cfg, OptimizerState& state);

/// FOP on explicit sub-batches. Factor statistics come from the union of both.
StepReport fop_step(Model& model, const SubBatch& first, const SubBatch& second, const OptimizerConfig& cfg,
                    OptimizerState& state);

/// Seed used to split the batch of a given step.
std::uint64_t split_seed(std::uint64_t seed, std::size_t step);

/// FOP on one batch split by split_batch(split_seed(cfg.seed, state.step)).
StepReport fop_step(Model& model, const Matrix& x, std::span<const int> labels, const OptimizerConfig& cfg,
                    OptimizerState& state);

/// Runs one step of cfg.kind on a batch.
StepReport optimizer_step(Model& model, const Matrix& x, std::span<const int> labels, const OptimizerConfig& cfg,
                          OptimizerState& state);

/// Curvature bookkeeping shared by KFAC, FOP and the distributed simulator.
void update_curvature(std::vector<KroneckerFisherBlock>& blocks, std::span<const FactorStatistics> stats,
                      const OptimizerConfig& cfg, std::size_t step);

/// Applies second-order updates with optional preconditioned momentum and
/// decoupled weight decay.
void apply_second_order_updates(Model& model, std::vector<Matrix> updates, const OptimizerConfig& cfg,
                                OptimizerState& state);

}  // namespace fopkit
