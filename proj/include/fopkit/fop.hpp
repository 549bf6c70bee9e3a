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
#include <span>
#include <vector>

#include "fopkit/fisher.hpp"
#include "fopkit/linalg.hpp"

namespace fopkit {

/// Gradients of one layer from two disjoint sub-batches.
struct GradientPair {
  std::size_t layer_id = 0;
  Matrix g1;
  Matrix g2;
  Matrix avg;   // (g1 + g2) / 2
  Matrix diff;  // g1 - g2
};

GradientPair make_gradient_pair(Matrix g1, Matrix g2, std::size_t layer_id = 0);

/// Relative projection damping 1e-12 * (1 + g_avg^T F g_avg).
double default_projection_epsilon(const GradientPair& pair, const KroneckerFisherBlock& block);

/// s = (g_diff^T F g_avg) / (g_avg^T F g_avg + eps) with the undamped F.
/// Throws kDegenerateDenominator when the denominator is zero.
double projection_scalar(const GradientPair& pair, const KroneckerFisherBlock& block, double eps);

/// g_perp = g_diff - s * g_avg
Matrix orthogonal_component(const GradientPair& pair, double s);

struct OrthogonalityResidual {
  double residual = 0.0;     // g_perp^T F g_avg, evaluated directly
  double closed_form = 0.0;  // g_diff^T F g_avg * eps / (g_avg^T F g_avg + eps)
  double bound = 0.0;        // eps * ||F^{1/2} g_diff|| * ||F^{-1/2} g_avg||
  bool within_bound = false;
};

/// Orthogonality defect of the projection. The bound is +inf when F is
/// singular (F^{-1/2} undefined).
OrthogonalityResidual lemma1_residual(const GradientPair& pair, const KroneckerFisherBlock& block,
                                      double eps);

/// Guard on the D/E and eta* denominators.
inline constexpr double kDenominatorGuard = 1e-30;

/// beta* = D / E with D = g_avg^T M^{-1} g_perp and E = g_perp^T M^{-1} g_perp.
/// Returns 0 when E <= guard.
double beta_star(const GradientPair& pair, const Matrix& g_perp, const KroneckerFisherBlock& block,
                 double guard = kDenominatorGuard);

/// J(beta) = -(g1 + g2)^T M^{-1} c + 1/2 c^T M^{-1} c with c = g_avg + beta g_perp
/// and g1 + g2 = 2 g_avg.
double surrogate_objective(const GradientPair& pair, const Matrix& g_perp,
                           const KroneckerFisherBlock& block, double beta);

Matrix combined_gradient(const GradientPair& pair, const Matrix& g_perp, double beta);

enum class TotalGradient { kMean, kSum };

struct EtaClamp {
  double lo = 0.0;
  double hi = 2.0;
};

/// Unclamped eta* = g_tot^T M^{-1} g_comb / g_comb^T M^{-1} g_comb, or 1 when
/// the denominator is at or below the guard.
double eta_star_raw(const GradientPair& pair, const Matrix& g_comb, const KroneckerFisherBlock& block,
                    TotalGradient total = TotalGradient::kMean, double guard = kDenominatorGuard);

double eta_star(const GradientPair& pair, const Matrix& g_comb, const KroneckerFisherBlock& block,
                EtaClamp clamp = {}, TotalGradient total = TotalGradient::kMean,
                double guard = kDenominatorGuard);

enum class BetaMode { kAdaptive, kFixed, kZero };
enum class EtaMode { kAdaptive, kFixed };

struct FopOptions {
  BetaMode beta_mode = BetaMode::kAdaptive;
  double beta_value = 0.0;  // used by kFixed
  EtaMode eta_mode = EtaMode::kAdaptive;
  double eta_value = 1.0;  // used by kFixed
  std::optional<double> epsilon;  // nullopt: default_projection_epsilon
  EtaClamp eta_clamp;
  TotalGradient total = TotalGradient::kMean;
  double guard = kDenominatorGuard;
};

/// Every intermediate of one layer's FOP update.
struct FopStepPlan {
  std::size_t layer_id = 0;
  double epsilon = 0.0;
  double s_proj = 0.0;
  Matrix g_perp;
  double beta = 0.0;
  Matrix g_combined;
  double eta_star_raw = 1.0;
  double eta_star = 1.0;
  Matrix update;  // eta0 * eta* * M^{-1} g_combined, subtracted from the weights

  // ||g_perp||_F / ||g_avg||_F, 0 when g_avg vanishes.
  double perp_ratio = 0.0;
};

/// Throws kNonFiniteUpdate if any intermediate is not finite.
FopStepPlan fop_layer_step(const GradientPair& pair, const KroneckerFisherBlock& block, double eta0,
                           const FopOptions& options = {});

/// eta0 * M^{-1} g
Matrix kfac_layer_step(const Matrix& g, const KroneckerFisherBlock& block, double eta0);

/// Exact KL-norm terms of the update -eta M^{-1}(g + beta g_perp) under a
/// dense Fisher, with M = F + lambda I and Q = M^{-1} F M^{-1}.
struct KlDiagnostics {
  double base_term = 0.0;   // g^T Q g
  double cross_term = 0.0;  // 2 beta g^T Q g_perp
  double orth_term = 0.0;   // beta^2 g_perp^T Q g_perp
  double total = 0.0;       // eta^2 (base + cross + orth)
  // base + 2|beta| (mu_max/lambda) ||F^{-1/2}g|| ||F^{-1/2}g_perp||
  //      + beta^2 mu_max / (4 lambda) ||F^{-1/2}g_perp||^2
  double bound_rhs = 0.0;
  double cross_bound = 0.0;  // 2|beta| (mu_max/lambda) ||F^{-1/2}g|| ||F^{-1/2}g_perp||
  double orth_bound = 0.0;   // beta^2 mu_max / (4 lambda) ||F^{-1/2}g_perp||^2
  std::vector<double> q_spectrum;  // Lambda_i / (Lambda_i + lambda)^2, ascending Lambda
  double mu_min = 0.0;
  double mu_max = 0.0;
  double inv_sqrt_norm_g = 0.0;       // ||F^{-1/2} g||
  double inv_sqrt_norm_g_perp = 0.0;  // ||F^{-1/2} g_perp||
  bool bound_holds = false;        // total <= eta^2 bound_rhs + 1e-10
  bool cross_bound_holds = false;  // |cross| <= cross_bound (1 + 1e-9)
};

/// Largest dense Fisher dimension kl_diagnostics accepts (64 x 64 factors).
inline constexpr std::size_t kMaxDenseFisherDim = 4096;

KlDiagnostics kl_diagnostics(std::span<const double> g, std::span<const double> g_perp,
                             const Matrix& dense_fisher, double damping, double beta, double eta);

/// Same, with g = vec(pair.avg) and g_perp = vec(g_perp).
KlDiagnostics kl_diagnostics(const GradientPair& pair, const Matrix& g_perp, const Matrix& dense_fisher,
                             double damping, double beta, double eta);

}  // namespace fopkit
