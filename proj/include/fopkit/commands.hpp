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
#include <ostream>
#include <string>

#include "fopkit/error.hpp"

namespace fopkit {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerifyFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

/// 2 for input, configuration and file errors; 3 for numerical failures.
int exit_code_for(ErrorKind kind);

struct TrainArgs {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> metrics;  // overrides output.metrics
  std::optional<std::filesystem::path> resume;
  std::optional<std::size_t> epochs;
};

struct VerifyArgs {
  std::string suite = "all";
  std::optional<std::uint64_t> seed;
  std::size_t instances = 0;
};

struct SimulateArgs {
  std::filesystem::path config;
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out_dir;  // message_log.csv and equivalence.json
};

// Every command reports failures as a single line "<error_kind>: <reason>"
// on err and returns the matching exit code.
int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);
int cmd_verify(const VerifyArgs& args, std::ostream& out, std::ostream& err);
int cmd_simulate(const SimulateArgs& args, std::ostream& out, std::ostream& err);
int cmd_inspect(const std::filesystem::path& checkpoint, std::ostream& out, std::ostream& err);
int cmd_export_csv(const std::filesystem::path& metrics, const std::optional<std::filesystem::path>& csv,
                   std::ostream& out, std::ostream& err);

}  // namespace fopkit
