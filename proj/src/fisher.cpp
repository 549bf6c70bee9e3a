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

#include "fopkit/fisher.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fopkit/error.hpp"

namespace fopkit {
namespace {

// Symmetric X^T X / n computed on the upper triangle and mirrored, so the
// result is exactly symmetric.
Matrix covariance(const Matrix& x) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  Matrix c(d, d);
  for (std::size_t k = 0; k < n; ++k) {
    auto row = x.row(k);
    for (std::size_t i = 0; i < d; ++i) {
      const double xi = row[i];
      if (xi == 0.0) continue;
      auto c_row = c.row(i);
      for (std::size_t j = i; j < d; ++j) c_row[j] += xi * row[j];
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      c(i, j) *= inv_n;
      c(j, i) = c(i, j);
    }
  }
  return c;
}

double max_diag(const Matrix& m) {
  double v = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) v = std::max(v, std::abs(m(i, i)));
  return v;
}

}  // namespace

void CurvatureSchedule::validate() const {
  if (cov_interval == 0 || inv_interval == 0) {
    throw Error(ErrorKind::kInvalidParam, "curvature intervals must be positive");
  }
  if (inv_interval % cov_interval != 0) {
    throw Error(ErrorKind::kInvalidParam, "inverse interval must be a multiple of the factor interval");
  }
}

FactorStatistics batch_statistics(const Matrix& layer_inputs, const Matrix& output_grads) {
  if (layer_inputs.rows() == 0 || layer_inputs.rows() != output_grads.rows()) {
    throw Error(ErrorKind::kDimensionMismatch, "batch_statistics: inputs and gradients need the same nonzero batch");
  }
  return {covariance(layer_inputs), covariance(output_grads), layer_inputs.rows()};
}

FactorStatistics merge_statistics(std::span<const FactorStatistics> parts) {
  if (parts.empty()) throw Error(ErrorKind::kInvalidParam, "merge_statistics: nothing to merge");
  FactorStatistics out;
  out.a = Matrix(parts[0].a.rows(), parts[0].a.cols());
  out.g = Matrix(parts[0].g.rows(), parts[0].g.cols());
  for (const auto& p : parts) out.count += p.count;
  if (out.count == 0) throw Error(ErrorKind::kInvalidParam, "merge_statistics: empty statistics");
  const double total = static_cast<double>(out.count);
  for (const auto& p : parts) {
    const double w = static_cast<double>(p.count) / total;
    out.a += p.a * w;
    out.g += p.g * w;
  }
  return out;
}

KroneckerFisherBlock::KroneckerFisherBlock(std::size_t layer_id, std::size_t input_dim,
                                           std::size_t output_dim, double ema_decay)
    : layer_id_(layer_id), a_(Matrix::identity(input_dim)), g_(Matrix::identity(output_dim)) {
  if (input_dim == 0 || output_dim == 0) {
    throw Error(ErrorKind::kInvalidParam, "KroneckerFisherBlock: empty factor");
  }
  set_ema_decay(ema_decay);
}

void KroneckerFisherBlock::set_ema_decay(double decay) {
  if (!(decay >= 0.0 && decay <= 1.0)) {
    throw Error(ErrorKind::kInvalidParam, "KroneckerFisherBlock: ema decay must lie in [0, 1]");
  }
  ema_decay_ = decay;
}

void KroneckerFisherBlock::set_factors(Matrix a, Matrix g) {
  if (!a.square() || !g.square()) throw Error(ErrorKind::kDimensionMismatch, "set_factors: factors must be square");
  if (!is_symmetric(a) || !is_symmetric(g)) throw Error(ErrorKind::kNotSymmetric, "set_factors: factors must be symmetric");
  a_ = std::move(a);
  g_ = std::move(g);
  has_statistics_ = true;
  ++factor_version_;
  inverse_.reset();
}

void KroneckerFisherBlock::accumulate(const FactorStatistics& stats, std::optional<std::size_t> step) {
  if (!stats.a.same_shape(a_) || !stats.g.same_shape(g_)) {
    throw Error(ErrorKind::kDimensionMismatch,
                "accumulate: statistics do not match block " + std::to_string(layer_id_));
  }
  if (!has_statistics_) {
    a_ = stats.a;
    g_ = stats.g;
    has_statistics_ = true;
  } else {
    const double keep = ema_decay_;
    const double take = 1.0 - ema_decay_;
    auto update = [&](Matrix& f, const Matrix& s) {
      auto fd = f.data();
      auto sd = s.data();
      for (std::size_t i = 0; i < fd.size(); ++i) fd[i] = keep * fd[i] + take * sd[i];
    };
    update(a_, stats.a);
    update(g_, stats.g);
  }
  ++factor_version_;
  last_factor_step_ = step;
}

void KroneckerFisherBlock::accumulate(const Matrix& layer_inputs, const Matrix& output_grads,
                                      std::optional<std::size_t> step) {
  if (layer_inputs.cols() != input_dim() || output_grads.cols() != output_dim()) {
    throw Error(ErrorKind::kDimensionMismatch,
                "accumulate: batch columns do not match block " + std::to_string(layer_id_));
  }
  accumulate(batch_statistics(layer_inputs, output_grads), step);
}

KroneckerFisherBlock::Inverse KroneckerFisherBlock::build_inverse(Matrix source_a, Matrix source_g,
                                                                  double damping,
                                                                  std::uint64_t factor_version) {
  if (!(damping > 0.0) || !std::isfinite(damping)) {
    throw Error(ErrorKind::kInvalidParam, "refresh_inverse: damping must be positive");
  }
  const double shift = std::sqrt(damping);
  Inverse inv;
  inv.a_fact = spd_factorize(add_diagonal(source_a, shift), 1e-12 * std::max(1.0, max_diag(source_a)));
  inv.g_fact = spd_factorize(add_diagonal(source_g, shift), 1e-12 * std::max(1.0, max_diag(source_g)));
  inv.source_a = std::move(source_a);
  inv.source_g = std::move(source_g);
  inv.damping = damping;
  inv.factor_version = factor_version;
  return inv;
}

void KroneckerFisherBlock::refresh_inverse(double damping, std::optional<std::size_t> step) {
  inverse_ = build_inverse(a_, g_, damping, factor_version_);
  last_inverse_step_ = step;
}

void KroneckerFisherBlock::restore_inverse(Matrix source_a, Matrix source_g, double damping,
                                           std::uint64_t factor_version) {
  if (!source_a.same_shape(a_) || !source_g.same_shape(g_)) {
    throw Error(ErrorKind::kDimensionMismatch, "restore_inverse: snapshot shape mismatch");
  }
  inverse_ = build_inverse(std::move(source_a), std::move(source_g), damping, factor_version);
}

void KroneckerFisherBlock::restore_state(std::size_t layer_id, double ema_decay, Matrix a, Matrix g,
                                         bool has_statistics, std::uint64_t factor_version,
                                         std::optional<std::size_t> last_factor_step,
                                         std::optional<std::size_t> last_inverse_step) {
  if (!a.square() || !g.square()) throw Error(ErrorKind::kDimensionMismatch, "restore_state: factors must be square");
  layer_id_ = layer_id;
  set_ema_decay(ema_decay);
  a_ = std::move(a);
  g_ = std::move(g);
  has_statistics_ = has_statistics;
  factor_version_ = factor_version;
  last_factor_step_ = last_factor_step;
  last_inverse_step_ = last_inverse_step;
  inverse_.reset();
}

const KroneckerFisherBlock::Inverse& KroneckerFisherBlock::require_inverse(const char* op) const {
  if (!inverse_) {
    throw Error(ErrorKind::kStaleInverseCache,
                std::string(op) + ": block " + std::to_string(layer_id_) + " has no inverse; call refresh_inverse");
  }
  return *inverse_;
}

const SpdFactorization& KroneckerFisherBlock::damped_a() const { return require_inverse("damped_a").a_fact; }
const SpdFactorization& KroneckerFisherBlock::damped_g() const { return require_inverse("damped_g").g_fact; }
const Matrix& KroneckerFisherBlock::inverse_source_a() const { return require_inverse("inverse_source_a").source_a; }
const Matrix& KroneckerFisherBlock::inverse_source_g() const { return require_inverse("inverse_source_g").source_g; }

void KroneckerFisherBlock::check_param_shape(const Matrix& v, const char* op) const {
  if (v.rows() != output_dim() || v.cols() != input_dim()) {
    throw Error(ErrorKind::kDimensionMismatch,
                std::string(op) + ": expected " + std::to_string(output_dim()) + "x" +
                    std::to_string(input_dim()) + ", got " + std::to_string(v.rows()) + "x" +
                    std::to_string(v.cols()));
  }
}

Matrix KroneckerFisherBlock::fisher_vec(const Matrix& v) const {
  check_param_shape(v, "fisher_vec");
  return matmul(matmul(g_, v), a_);
}

Matrix KroneckerFisherBlock::damped_fisher_vec(const Matrix& v) const {
  check_param_shape(v, "damped_fisher_vec");
  const auto& inv = require_inverse("damped_fisher_vec");
  const double shift = std::sqrt(inv.damping);
  return matmul(matmul(add_diagonal(inv.source_g, shift + inv.g_fact.jitter), v),
                add_diagonal(inv.source_a, shift + inv.a_fact.jitter));
}

Matrix KroneckerFisherBlock::fisher_inv_vec(const Matrix& v) const {
  check_param_shape(v, "fisher_inv_vec");
  const auto& inv = require_inverse("fisher_inv_vec");
  return spd_solve_right(inv.a_fact, spd_solve(inv.g_fact, v));
}

double KroneckerFisherBlock::fisher_inner(const Matrix& u, const Matrix& v) const {
  check_param_shape(u, "fisher_inner");
  return frobenius_inner(u, fisher_vec(v));
}

double KroneckerFisherBlock::fisher_inv_inner(const Matrix& u, const Matrix& v) const {
  check_param_shape(u, "fisher_inv_inner");
  return frobenius_inner(u, fisher_inv_vec(v));
}

std::vector<double> vec(const Matrix& v) {
  std::vector<double> out;
  out.reserve(v.size());
  for (std::size_t c = 0; c < v.cols(); ++c)
    for (std::size_t r = 0; r < v.rows(); ++r) out.push_back(v(r, c));
  return out;
}

Matrix unvec(std::span<const double> x, std::size_t rows, std::size_t cols) {
  if (x.size() != rows * cols) throw Error(ErrorKind::kDimensionMismatch, "unvec: size mismatch");
  Matrix out(rows, cols);
  std::size_t k = 0;
  for (std::size_t c = 0; c < cols; ++c)
    for (std::size_t r = 0; r < rows; ++r) out(r, c) = x[k++];
  return out;
}

Matrix kronecker_dense(const Matrix& a, const Matrix& g) {
  const std::size_t p = g.rows();
  const std::size_t q = g.cols();
  Matrix out(a.rows() * p, a.cols() * q);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      for (std::size_t r = 0; r < p; ++r)
        for (std::size_t c = 0; c < q; ++c) out(i * p + r, j * q + c) = a(i, j) * g(r, c);
  return out;
}

}  // namespace fopkit
