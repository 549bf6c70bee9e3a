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
#include <span>

#include "fopkit/linalg.hpp"

namespace fopkit {

/// Step cadence of curvature work. Factors are accumulated on steps that are
/// multiples of cov_interval and inverses refreshed on multiples of
/// inv_interval (which must itself be a multiple of cov_interval).
struct CurvatureSchedule {
  std::size_t cov_interval = 1;
  std::size_t inv_interval = 1;

  void validate() const;
  bool accumulates_at(std::size_t step) const { return step % cov_interval == 0; }
  bool refreshes_at(std::size_t step) const { return step % inv_interval == 0; }
};

/// Second-moment statistics of one layer over a batch: a = X^T X / n over the
/// bias-augmented inputs, g = D^T D / n over per-sample pre-activation grads.
struct FactorStatistics {
  Matrix a;
  Matrix g;
  std::size_t count = 0;
};

FactorStatistics batch_statistics(const Matrix& layer_inputs, const Matrix& output_grads);

/// Size-weighted mean of several statistics. Equals batch_statistics over the
/// concatenated batch up to rounding.
FactorStatistics merge_statistics(std::span<const FactorStatistics> parts);

/// Kronecker-factored Fisher block F = A (x) G for one dense layer whose
/// weight matrix is out x (in+1).
///
/// Products treat a parameter-shaped matrix V as vec(V) with column stacking,
/// so F vec(V) = vec(G V A). The damped inverse uses factor-split damping:
/// M^{-1} ~ (A + sqrt(lambda) I)^{-1} (x) (G + sqrt(lambda) I)^{-1}.
///
/// The inverse is computed from a snapshot of the factors taken at
/// refresh_inverse(); later accumulations do not touch it until the next
/// refresh, which is how a curvature schedule with inv_interval > cov_interval
/// behaves.
class KroneckerFisherBlock {
 public:
  KroneckerFisherBlock() = default;
  KroneckerFisherBlock(std::size_t layer_id, std::size_t input_dim, std::size_t output_dim,
                       double ema_decay = 0.95);

  std::size_t layer_id() const noexcept { return layer_id_; }
  // Includes the bias coordinate.
  std::size_t input_dim() const noexcept { return a_.rows(); }
  std::size_t output_dim() const noexcept { return g_.rows(); }
  double ema_decay() const noexcept { return ema_decay_; }
  void set_ema_decay(double decay);

  const Matrix& a() const noexcept { return a_; }
  const Matrix& g() const noexcept { return g_; }
  bool has_statistics() const noexcept { return has_statistics_; }
  std::uint64_t factor_version() const noexcept { return factor_version_; }
  std::optional<std::size_t> last_factor_step() const noexcept { return last_factor_step_; }

  // Replaces both factors (they must be symmetric) and drops the inverse.
  void set_factors(Matrix a, Matrix g);

  // The first accumulation initializes the factors with the batch statistics;
  // later ones apply A <- decay A + (1 - decay) a (same for G).
  void accumulate(const FactorStatistics& stats, std::optional<std::size_t> step = std::nullopt);
  void accumulate(const Matrix& layer_inputs, const Matrix& output_grads,
                  std::optional<std::size_t> step = std::nullopt);

  void refresh_inverse(double damping, std::optional<std::size_t> step = std::nullopt);

  bool has_inverse() const noexcept { return inverse_.has_value(); }
  // True when the inverse was computed from the current factor version.
  bool inverse_is_current() const noexcept {
    return inverse_.has_value() && inverse_->factor_version == factor_version_;
  }
  double damping() const noexcept { return inverse_ ? inverse_->damping : 0.0; }
  // Factor version the inverse was computed from.
  std::uint64_t inverse_factor_version() const noexcept { return inverse_ ? inverse_->factor_version : 0; }
  std::optional<std::size_t> last_inverse_step() const noexcept { return last_inverse_step_; }
  // Factorizations of the damped factors behind fisher_inv_vec.
  const SpdFactorization& damped_a() const;
  const SpdFactorization& damped_g() const;
  // Undamped factors the current inverse was computed from.
  const Matrix& inverse_source_a() const;
  const Matrix& inverse_source_g() const;

  // G V A with the current (undamped) factors.
  Matrix fisher_vec(const Matrix& v) const;
  // (G_s + sqrt(lambda) I) V (A_s + sqrt(lambda) I) with the inverse's snapshot.
  Matrix damped_fisher_vec(const Matrix& v) const;
  // (G_s + sqrt(lambda) I)^{-1} V (A_s + sqrt(lambda) I)^{-1}. Throws
  // kStaleInverseCache if no inverse has been computed.
  Matrix fisher_inv_vec(const Matrix& v) const;

  // vec(U)^T F vec(V) = trace(U^T G V A).
  double fisher_inner(const Matrix& u, const Matrix& v) const;
  // vec(U)^T M^{-1} vec(V) with the damped inverse.
  double fisher_inv_inner(const Matrix& u, const Matrix& v) const;

  // Restores a serialized inverse snapshot. Factorizations are recomputed,
  // which is deterministic, so the restored block is bit-identical.
  void restore_inverse(Matrix source_a, Matrix source_g, double damping,
                       std::uint64_t factor_version);
  void restore_state(std::size_t layer_id, double ema_decay, Matrix a, Matrix g,
                     bool has_statistics, std::uint64_t factor_version,
                     std::optional<std::size_t> last_factor_step,
                     std::optional<std::size_t> last_inverse_step);

 private:
  struct Inverse {
    Matrix source_a;
    Matrix source_g;
    double damping = 0.0;
    std::uint64_t factor_version = 0;
    SpdFactorization a_fact;
    SpdFactorization g_fact;
  };

  void check_param_shape(const Matrix& v, const char* op) const;
  const Inverse& require_inverse(const char* op) const;
  static Inverse build_inverse(Matrix source_a, Matrix source_g, double damping,
                               std::uint64_t factor_version);

  std::size_t layer_id_ = 0;
  double ema_decay_ = 0.95;
  Matrix a_;
  Matrix g_;
  bool has_statistics_ = false;
  std::uint64_t factor_version_ = 0;
  std::optional<std::size_t> last_factor_step_;
  std::optional<std::size_t> last_inverse_step_;
  std::optional<Inverse> inverse_;
};

/// Column-stacking vectorization, the ordering used by kronecker_dense.
std::vector<double> vec(const Matrix& v);
Matrix unvec(std::span<const double> x, std::size_t rows, std::size_t cols);

/// Explicit A (x) G; entry block (i, j) is a_ij * G.
Matrix kronecker_dense(const Matrix& a, const Matrix& g);

}  // namespace fopkit
