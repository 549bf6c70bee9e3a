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
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fopkit/data.hpp"
#include "fopkit/nn.hpp"
#include "fopkit/optim.hpp"

namespace fopkit {

enum class DataKind { kSpirals, kBlobs, kIdx };

struct DataSpec {
  DataKind kind = DataKind::kSpirals;
  std::size_t classes = 2;
  std::size_t per_class = 100;
  std::size_t dim = 2;  // blobs only
  double noise = 0.0;   // spirals
  double turns = kSpiralTurns;  // spirals
  double spread = 0.3;  // blobs
  std::optional<std::uint64_t> seed;  // defaults to the run seed
  std::size_t eval_per_class = 0;     // synthetic held-out set, 0 = none
  std::string images;
  std::string labels;
  std::string eval_images;
  std::string eval_labels;
};

struct ModelSpec {
  std::vector<std::size_t> hidden;
  Activation activation = Activation::kRelu;
};

struct OutputSpec {
  std::string metrics;
  std::string checkpoint;
  std::size_t checkpoint_every = 0;  // epochs, 0 = only at the end when a path is set
  std::size_t log_every = 1;         // steps
  bool kl_diagnostics = false;
};

struct SimulateSpec {
  std::size_t steps = 20;
  std::size_t workers = 2;
  std::string log;
  std::string report;
  double tolerance = 1e-10;
};

/// Everything a training or simulation run needs.
///
/// Text grammar (one statement per line):
///   # comment              ; comment
///   [section]              one of data, model, optimizer, scheduler, output, simulate
///   key = value            keys before any section belong to the run itself
/// Lists are comma separated. Unknown sections or keys, duplicates and bad
/// values are errors that carry the offending line number.
struct RunConfig {
  DataSpec data;
  ModelSpec model;
  OptimizerConfig optimizer;
  std::size_t batch_size = 0;  // 0 = full batch
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  OutputSpec output;
  SimulateSpec simulate;
  std::string source = "<config>";

  // Layer widths input, hidden..., classes for a dataset.
  std::vector<std::size_t> widths(std::size_t input_dim, std::size_t classes) const;
  void set_seed(std::uint64_t seed);
};

/// Throws Error(kConfig) with message "<source>:<line>: <reason>".
RunConfig parse_config(std::string_view text, std::string source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

}  // namespace fopkit
