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

#include <stdexcept>
#include <string>

namespace fopkit {

enum class ErrorKind {
  kDimensionMismatch,
  kNotSymmetric,
  kFactorizationFailed,
  kConvergenceFailure,
  kStaleInverseCache,
  kDegenerateDenominator,
  kNonFiniteUpdate,
  kTooLargeForDenseDiagnostics,
  kInvalidLabel,
  kBatchTooSmall,
  kInvalidParam,
  kBadMagic,
  kCountMismatch,
  kTruncatedFile,
  kEmptyShard,
  kConfig,
  kIo,
  kCorruptCheckpoint,
  kUnsupportedVersion,
};

// Stable, machine-parsable name of an error kind (e.g. "dimension_mismatch").
const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace fopkit
