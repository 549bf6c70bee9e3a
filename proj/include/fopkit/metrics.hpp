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
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fopkit/fop.hpp"

namespace fopkit {

struct LayerMetrics {
  std::size_t layer = 0;
  double beta = 0.0;
  double eta_star = 0.0;
  double s_proj = 0.0;
  double perp_ratio = 0.0;
};

struct KlMetrics {
  std::size_t layer = 0;
  std::optional<double> base;
  std::optional<double> cross;
  std::optional<double> orth;
  std::optional<double> total;
  std::optional<double> bound_rhs;
};

/// One line of the metrics stream. Non-finite numbers are written as null.
struct MetricsRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double wall_time = 0.0;  // seconds since the run (or resume) started
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> eval_loss;
  std::optional<double> eval_accuracy;
  double lr = 0.0;
  std::vector<LayerMetrics> layers;
  std::optional<std::vector<KlMetrics>> kl;  // key omitted when disabled
};

LayerMetrics layer_metrics(const FopStepPlan& plan);

/// KL terms of a plan under the dense Kronecker Fisher of its block. Terms
/// are null when the block is too large or the Fisher is singular.
KlMetrics kl_metrics(const FopStepPlan& plan, const KroneckerFisherBlock& block, double eta0);

/// Single-line JSON object, no trailing newline.
std::string to_json_line(const MetricsRecord& record);

/// Drops the wall_time key from a metrics line, for reproducibility checks.
std::string strip_wall_time(const std::string& json_line);

/// Flattens a JSONL metrics stream into CSV with one row per record. Layer
/// fields become columns layer<i>_<field>.
void metrics_to_csv(std::span<const std::string> json_lines, std::ostream& out);

}  // namespace fopkit
