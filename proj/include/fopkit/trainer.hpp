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
#include <functional>
#include <optional>
#include <vector>

#include "fopkit/checkpoint.hpp"
#include "fopkit/config.hpp"
#include "fopkit/data.hpp"
#include "fopkit/metrics.hpp"

namespace fopkit {

struct TrainData {
  Dataset train;
  std::optional<Dataset> eval;
};

/// Builds or loads the datasets described by cfg.data. Synthetic data uses
/// data.seed (or the run seed). A blobs eval set is held out from the same
/// draw; a spirals eval set uses that seed + 1.
TrainData load_data(const RunConfig& cfg);

struct EpochSummary {
  std::size_t epoch = 0;
  double mean_loss = 0.0;      // mean of the epoch's batch losses
  double train_accuracy = 0.0; // full training set, after the epoch
  double lr = 0.0;             // rate used during the epoch
};

struct TrainHooks {
  std::function<void(const MetricsRecord&)> on_record;
  // Called with final = true once training ends.
  std::function<void(const Checkpoint&, bool final)> on_checkpoint;
  // Stop as soon as an epoch ends with train accuracy >= this value.
  std::optional<double> stop_accuracy;
};

struct TrainResult {
  Model model;
  OptimizerState state;
  std::vector<EpochSummary> epochs;
  // 1-based epoch count at which stop_accuracy was first reached.
  std::optional<std::size_t> epochs_to_target;
};

/// Fresh model for a config and dataset.
Model initial_model(const RunConfig& cfg, const Dataset& train);

/// Row order of one epoch: identity for full-batch runs, otherwise a seeded
/// permutation. Batches take consecutive runs of batch_size rows; a single
/// leftover row joins the last batch.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    std::size_t epoch);

/// Runs cfg.epochs epochs (from resume->epoch when resuming). Deterministic
/// in (cfg, data); throws kNonFiniteUpdate on numerical failure.
TrainResult train(const RunConfig& cfg, const TrainData& data, const TrainHooks& hooks = {},
                  const Checkpoint* resume = nullptr);

}  // namespace fopkit
