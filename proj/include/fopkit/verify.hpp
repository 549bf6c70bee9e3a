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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fopkit/fisher.hpp"
#include "fopkit/linalg.hpp"
#include "fopkit/rng.hpp"

namespace fopkit {

struct PropertyResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SuiteReport {
  std::string suite;
  std::vector<PropertyResult> properties;
  std::vector<std::string> notes;  // informational lines (fits, counts)
  double seconds = 0.0;

  bool passed() const;
};

struct VerifyOptions {
  std::uint64_t seed = 20260101;
  // Overrides the per-suite instance count when nonzero.
  std::size_t instances = 0;
};

/// lemma1, beta, eta, reduction, klbound, lemma2, gradcheck, distributed,
/// convergence.
const std::vector<std::string>& suite_names();

/// Runs one suite, or every suite for "all". Throws kInvalidParam for an
/// unknown name.
std::vector<SuiteReport> run_suites(std::string_view name, const VerifyOptions& options = {});
SuiteReport run_suite(std::string_view name, const VerifyOptions& options = {});

// Instance generators shared by the suites.

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng);
/// B B^T / n + 0.1 I with standard normal B.
Matrix random_spd(std::size_t n, Rng& rng);
/// Block with random SPD factors of the given sizes and a refreshed inverse.
KroneckerFisherBlock random_block(std::size_t a_dim, std::size_t g_dim, double damping, Rng& rng);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace fopkit
