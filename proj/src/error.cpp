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

#include "fopkit/error.hpp"

namespace fopkit {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimensionMismatch: return "dimension_mismatch";
    case ErrorKind::kNotSymmetric: return "not_symmetric";
    case ErrorKind::kFactorizationFailed: return "factorization_failed";
    case ErrorKind::kConvergenceFailure: return "convergence_failure";
    case ErrorKind::kStaleInverseCache: return "stale_inverse_cache";
    case ErrorKind::kDegenerateDenominator: return "degenerate_denominator";
    case ErrorKind::kNonFiniteUpdate: return "non_finite_update";
    case ErrorKind::kTooLargeForDenseDiagnostics: return "too_large_for_dense_diagnostics";
    case ErrorKind::kInvalidLabel: return "invalid_label";
    case ErrorKind::kBatchTooSmall: return "batch_too_small";
    case ErrorKind::kInvalidParam: return "invalid_param";
    case ErrorKind::kBadMagic: return "bad_magic";
    case ErrorKind::kCountMismatch: return "count_mismatch";
    case ErrorKind::kTruncatedFile: return "truncated_file";
    case ErrorKind::kEmptyShard: return "empty_shard";
    case ErrorKind::kConfig: return "config_error";
    case ErrorKind::kIo: return "io_error";
    case ErrorKind::kCorruptCheckpoint: return "corrupt_checkpoint";
    case ErrorKind::kUnsupportedVersion: return "unsupported_version";
  }
  return "unknown";
}

}  // namespace fopkit
