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

#include "fopkit/fop.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fopkit/error.hpp"

namespace fopkit {
namespace {

void require_finite(double x, const char* what, std::size_t layer) {
  if (!std::isfinite(x)) {
    throw Error(ErrorKind::kNonFiniteUpdate,
                std::string("fop_layer_step: non-finite ") + what + " in layer " + std::to_string(layer));
  }
}

void require_finite(const Matrix& m, const char* what, std::size_t layer) {
  if (!all_finite(m)) {
    throw Error(ErrorKind::kNonFiniteUpdate,
                std::string("fop_layer_step: non-finite ") + what + " in layer " + std::to_string(layer));
  }
}

// ||F^{-1/2} x|| for F = A (x) G, i.e. sqrt(trace(X^T G^{-1} X A^{-1})).
// Infinite when either factor is singular.
double inverse_sqrt_norm(const KroneckerFisherBlock& block, const Matrix& x) {
  try {
    const SpdFactorization a = spd_factorize(block.a(), 0.0);
    const SpdFactorization g = spd_factorize(block.g(), 0.0);
    const double q = frobenius_inner(x, spd_solve_right(a, spd_solve(g, x)));
    return std::sqrt(std::max(q, 0.0));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kFactorizationFailed) return std::numeric_limits<double>::infinity();
    throw;
  }
}

}  // namespace

GradientPair make_gradient_pair(Matrix g1, Matrix g2, std::size_t layer_id) {
  if (!g1.same_shape(g2)) {
    throw Error(ErrorKind::kDimensionMismatch, "make_gradient_pair: gradient shapes differ");
  }
  GradientPair pair;
  pair.layer_id = layer_id;
  pair.avg = Matrix(g1.rows(), g1.cols());
  pair.diff = Matrix(g1.rows(), g1.cols());
  for (std::size_t i = 0; i < g1.size(); ++i) {
    const double a = g1.data()[i];
    const double b = g2.data()[i];
    pair.avg.data()[i] = 0.5 * (a + b);
    pair.diff.data()[i] = a - b;
  }
  pair.g1 = std::move(g1);
  pair.g2 = std::move(g2);
  return pair;
}

double default_projection_epsilon(const GradientPair& pair, const KroneckerFisherBlock& block) {
  return 1e-12 * (1.0 + block.fisher_inner(pair.avg, pair.avg));
}

double projection_scalar(const GradientPair& pair, const KroneckerFisherBlock& block, double eps) {
  if (!(eps >= 0.0)) throw Error(ErrorKind::kInvalidParam, "projection_scalar: epsilon must be >= 0");
  const Matrix f_avg = block.fisher_vec(pair.avg);
  const double denom = frobenius_inner(pair.avg, f_avg) + eps;
  if (denom == 0.0) {
    throw Error(ErrorKind::kDegenerateDenominator, "projection_scalar: g_avg^T F g_avg + eps is zero");
  }
  return frobenius_inner(pair.diff, f_avg) / denom;
}

Matrix orthogonal_component(const GradientPair& pair, double s) { return axpy(pair.diff, -s, pair.avg); }

OrthogonalityResidual lemma1_residual(const GradientPair& pair, const KroneckerFisherBlock& block,
                                      double eps) {
  OrthogonalityResidual out;
  const Matrix f_avg = block.fisher_vec(pair.avg);
  const double avg_f_avg = frobenius_inner(pair.avg, f_avg);
  const double diff_f_avg = frobenius_inner(pair.diff, f_avg);
  double s = 0.0;
  if (avg_f_avg + eps != 0.0) s = diff_f_avg / (avg_f_avg + eps);
  const Matrix g_perp = orthogonal_component(pair, s);
  out.residual = frobenius_inner(g_perp, f_avg);
  out.closed_form = avg_f_avg + eps == 0.0 ? 0.0 : diff_f_avg * eps / (avg_f_avg + eps);
  if (eps == 0.0) {
    out.bound = 0.0;
  } else {
    const double sqrt_norm_diff = std::sqrt(std::max(block.fisher_inner(pair.diff, pair.diff), 0.0));
    out.bound = eps * sqrt_norm_diff * inverse_sqrt_norm(block, pair.avg);
  }
  // Rounding slack proportional to the magnitude of the summed products.
  double scale = 0.0;
  for (std::size_t i = 0; i < f_avg.size(); ++i) {
    scale += std::abs(pair.diff.data()[i] * f_avg.data()[i]) +
             std::abs(s * pair.avg.data()[i] * f_avg.data()[i]);
  }
  out.within_bound = std::abs(out.residual) <= out.bound + 1e-12 * (1.0 + scale);
  return out;
}

double beta_star(const GradientPair& pair, const Matrix& g_perp, const KroneckerFisherBlock& block,
                 double guard) {
  const Matrix m_perp = block.fisher_inv_vec(g_perp);
  const double e = frobenius_inner(g_perp, m_perp);
  if (!(e > guard)) return 0.0;
  return frobenius_inner(pair.avg, m_perp) / e;
}

double surrogate_objective(const GradientPair& pair, const Matrix& g_perp,
                           const KroneckerFisherBlock& block, double beta) {
  const Matrix c = combined_gradient(pair, g_perp, beta);
  const Matrix m_c = block.fisher_inv_vec(c);
  return -2.0 * frobenius_inner(pair.avg, m_c) + 0.5 * frobenius_inner(c, m_c);
}

Matrix combined_gradient(const GradientPair& pair, const Matrix& g_perp, double beta) {
  return axpy(pair.avg, beta, g_perp);
}

double eta_star_raw(const GradientPair& pair, const Matrix& g_comb, const KroneckerFisherBlock& block,
                    TotalGradient total, double guard) {
  const Matrix m_comb = block.fisher_inv_vec(g_comb);
  const double denom = frobenius_inner(g_comb, m_comb);
  if (!(denom > guard)) return 1.0;
  double num = frobenius_inner(pair.avg, m_comb);
  if (total == TotalGradient::kSum) num *= 2.0;
  return num / denom;
}

double eta_star(const GradientPair& pair, const Matrix& g_comb, const KroneckerFisherBlock& block,
                EtaClamp clamp, TotalGradient total, double guard) {
  return std::clamp(eta_star_raw(pair, g_comb, block, total, guard), clamp.lo, clamp.hi);
}

FopStepPlan fop_layer_step(const GradientPair& pair, const KroneckerFisherBlock& block, double eta0,
                           const FopOptions& options) {
  if (!(eta0 > 0.0)) throw Error(ErrorKind::kInvalidParam, "fop_layer_step: eta0 must be positive");
  if (!block.has_inverse()) {
    throw Error(ErrorKind::kStaleInverseCache, "fop_layer_step: block has no inverse");
  }
  const std::size_t layer = pair.layer_id;
  FopStepPlan plan;
  plan.layer_id = layer;

  plan.epsilon = options.epsilon ? *options.epsilon : default_projection_epsilon(pair, block);
  require_finite(plan.epsilon, "epsilon", layer);
  try {
    plan.s_proj = projection_scalar(pair, block, plan.epsilon);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kDegenerateDenominator) throw;
    plan.s_proj = 0.0;
  }
  require_finite(plan.s_proj, "projection scalar", layer);
  plan.g_perp = orthogonal_component(pair, plan.s_proj);
  require_finite(plan.g_perp, "orthogonal component", layer);

  switch (options.beta_mode) {
    case BetaMode::kAdaptive: plan.beta = beta_star(pair, plan.g_perp, block, options.guard); break;
    case BetaMode::kFixed: plan.beta = options.beta_value; break;
    case BetaMode::kZero: plan.beta = 0.0; break;
  }
  require_finite(plan.beta, "beta", layer);
  plan.g_combined = combined_gradient(pair, plan.g_perp, plan.beta);
  require_finite(plan.g_combined, "combined gradient", layer);

  if (options.eta_mode == EtaMode::kAdaptive) {
    plan.eta_star_raw = eta_star_raw(pair, plan.g_combined, block, options.total, options.guard);
    plan.eta_star = std::clamp(plan.eta_star_raw, options.eta_clamp.lo, options.eta_clamp.hi);
  } else {
    plan.eta_star_raw = options.eta_value;
    plan.eta_star = options.eta_value;
  }
  require_finite(plan.eta_star_raw, "eta*", layer);

  // Same arithmetic as kfac_layer_step when eta* == 1.
  plan.update = kfac_layer_step(plan.g_combined, block, eta0 * plan.eta_star);
  require_finite(plan.update, "update", layer);

  const double avg_norm = frobenius_norm(pair.avg);
  plan.perp_ratio = avg_norm > 0.0 ? frobenius_norm(plan.g_perp) / avg_norm : 0.0;
  return plan;
}

Matrix kfac_layer_step(const Matrix& g, const KroneckerFisherBlock& block, double eta0) {
  Matrix d = block.fisher_inv_vec(g);
  d *= eta0;
  if (!all_finite(d)) throw Error(ErrorKind::kNonFiniteUpdate, "kfac_layer_step: non-finite update");
  return d;
}

KlDiagnostics kl_diagnostics(std::span<const double> g, std::span<const double> g_perp,
                             const Matrix& dense_fisher, double damping, double beta, double eta) {
  const std::size_t n = dense_fisher.rows();
  if (n > kMaxDenseFisherDim) {
    throw Error(ErrorKind::kTooLargeForDenseDiagnostics,
                "kl_diagnostics: dense Fisher of dimension " + std::to_string(n) + " exceeds " +
                    std::to_string(kMaxDenseFisherDim));
  }
  if (!dense_fisher.square() || g.size() != n || g_perp.size() != n) {
    throw Error(ErrorKind::kDimensionMismatch, "kl_diagnostics: vector and Fisher dimensions differ");
  }
  if (!(damping > 0.0)) throw Error(ErrorKind::kInvalidParam, "kl_diagnostics: damping must be positive");

  KlDiagnostics out;
  const Matrix gv = Matrix::column(g);
  const Matrix pv = Matrix::column(g_perp);

  // Q = M^{-1} F M^{-1}, built densely.
  const SpdFactorization m = spd_factorize(add_diagonal(dense_fisher, damping), 0.0);
  const Matrix q = spd_solve_right(m, spd_solve(m, dense_fisher));
  const Matrix qg = matmul(q, gv);
  const Matrix qp = matmul(q, pv);
  out.base_term = frobenius_inner(gv, qg);
  out.cross_term = 2.0 * beta * frobenius_inner(gv, qp);
  out.orth_term = beta * beta * frobenius_inner(pv, qp);
  out.total = eta * eta * (out.base_term + out.cross_term + out.orth_term);

  const SymmetricEigen eig = sym_eigendecomposition(dense_fisher);
  out.mu_min = eig.values.front();
  out.mu_max = eig.values.back();
  out.q_spectrum.reserve(n);
  for (double lam : eig.values) out.q_spectrum.push_back(lam / ((lam + damping) * (lam + damping)));

  if (out.mu_min > 0.0) {
    double ng = 0.0;
    double np = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      double hg = 0.0;
      double hp = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        hg += eig.vectors(i, k) * g[i];
        hp += eig.vectors(i, k) * g_perp[i];
      }
      ng += hg * hg / eig.values[k];
      np += hp * hp / eig.values[k];
    }
    out.inv_sqrt_norm_g = std::sqrt(ng);
    out.inv_sqrt_norm_g_perp = std::sqrt(np);
  } else {
    out.inv_sqrt_norm_g = std::numeric_limits<double>::infinity();
    out.inv_sqrt_norm_g_perp = std::numeric_limits<double>::infinity();
  }

  const double ratio = out.mu_max / damping;
  out.cross_bound = 2.0 * std::abs(beta) * ratio * out.inv_sqrt_norm_g * out.inv_sqrt_norm_g_perp;
  out.orth_bound = beta * beta * ratio / 4.0 * out.inv_sqrt_norm_g_perp * out.inv_sqrt_norm_g_perp;
  if (beta == 0.0) {
    out.cross_bound = 0.0;
    out.orth_bound = 0.0;
  }
  out.bound_rhs = out.base_term + out.cross_bound + out.orth_bound;
  out.bound_holds = out.total <= eta * eta * out.bound_rhs + 1e-10;
  out.cross_bound_holds = std::abs(out.cross_term) <= out.cross_bound * (1.0 + 1e-9);
  return out;
}

KlDiagnostics kl_diagnostics(const GradientPair& pair, const Matrix& g_perp, const Matrix& dense_fisher,
                             double damping, double beta, double eta) {
  const std::vector<double> g = vec(pair.avg);
  const std::vector<double> p = vec(g_perp);
  return kl_diagnostics(g, p, dense_fisher, damping, beta, eta);
}

}  // namespace fopkit
