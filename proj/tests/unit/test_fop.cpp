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

#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "fopkit/error.hpp"
#include "fopkit/fop.hpp"
#include "fopkit/verify.hpp"
#include "oracle.hpp"

using namespace fopkit;
using doctest::Approx;

namespace {

// 1 x 2 layer with G = [1] and A = diag(1, 4), so F = diag(1, 4).
KroneckerFisherBlock diag14_block() {
  KroneckerFisherBlock b(0, 2, 1);
  b.set_factors(Matrix::from_rows({{1, 0}, {0, 4}}), Matrix::from_rows({{1}}));
  b.refresh_inverse(1e-30);
  return b;
}

GradientPair diag14_pair() {
  // g_avg = (1, 1), g_diff = (1, -1).
  return make_gradient_pair(Matrix::from_rows({{1.5, 0.5}}), Matrix::from_rows({{0.5, 1.5}}));
}

GradientPair random_pair(std::size_t rows, std::size_t cols, Rng& rng) {
  return make_gradient_pair(random_matrix(rows, cols, rng), random_matrix(rows, cols, rng));
}

oracle::Dense damped_inverse(const KroneckerFisherBlock& b) {
  const double s = std::sqrt(b.damping());
  return oracle::inverse(oracle::kron(oracle::shift(oracle::from(b.inverse_source_a()), s),
                                      oracle::shift(oracle::from(b.inverse_source_g()), s)));
}

}  // namespace

TEST_CASE("gradient pair") {
  Rng rng(1);
  const Matrix g = random_matrix(2, 3, rng);
  const auto same = make_gradient_pair(g, g);
  CHECK(same.avg == g);
  CHECK(max_abs(same.diff) == 0.0);
  const auto opposite = make_gradient_pair(g, g * -1.0);
  CHECK(max_abs(opposite.avg) == 0.0);
  CHECK(opposite.diff == g * 2.0);
  const auto p = random_pair(3, 4, rng);
  CHECK(max_abs_diff(axpy(p.avg, 0.5, p.diff), p.g1) <= 1e-12);
  CHECK(max_abs_diff(axpy(p.avg, -0.5, p.diff), p.g2) <= 1e-12);
  CHECK_THROWS_AS(make_gradient_pair(Matrix(2, 2), Matrix(2, 3)), Error);
}

TEST_CASE("projection scalar") {
  SUBCASE("parallel pair") {
    Rng rng(2);
    const auto b = random_block(3, 2, 1e-3, rng);
    const Matrix g = random_matrix(2, 3, rng);
    // g1 = 1.5 g, g2 = 0.5 g gives g_diff = g_avg.
    const auto p = make_gradient_pair(g * 1.5, g * 0.5);
    CHECK(projection_scalar(p, b, 0.0) == Approx(1.0).epsilon(1e-14));
  }
  SUBCASE("diag(1,4) example") {
    const auto b = diag14_block();
    const auto p = diag14_pair();
    const double s = projection_scalar(p, b, 0.0);
    CHECK(s == Approx(-3.0 / 5.0).epsilon(1e-15));
    const Matrix perp = orthogonal_component(p, s);
    CHECK(perp(0, 0) == Approx(8.0 / 5.0).epsilon(1e-15));
    CHECK(perp(0, 1) == Approx(-2.0 / 5.0).epsilon(1e-15));
    CHECK(std::abs(b.fisher_inner(perp, p.avg)) <= 1e-15);
  }
  SUBCASE("large epsilon") {
    const auto b = diag14_block();
    CHECK(std::abs(projection_scalar(diag14_pair(), b, 1e12)) <= 1e-11);
  }
  SUBCASE("degenerate") {
    const auto b = diag14_block();
    const auto p = make_gradient_pair(Matrix::from_rows({{1, 2}}), Matrix::from_rows({{-1, -2}}));
    try {
      projection_scalar(p, b, 0.0);
      FAIL("expected DegenerateDenominator");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kDegenerateDenominator);
    }
  }
}

TEST_CASE("orthogonal component") {
  const auto p = diag14_pair();
  CHECK(orthogonal_component(p, 0.0) == p.diff);
  const auto parallel = make_gradient_pair(Matrix::from_rows({{3, 1.5}}), Matrix::from_rows({{1, 0.5}}));
  CHECK(max_abs(orthogonal_component(parallel, 1.0)) == 0.0);
}

TEST_CASE("lemma1 residual") {
  Rng rng(3);
  SUBCASE("exact projection") {
    for (int i = 0; i < 50; ++i) {
      const auto b = random_block(4, 3, 1e-3, rng);
      const auto p = random_pair(3, 4, rng);
      const auto r = lemma1_residual(p, b, 0.0);
      const double scale = std::sqrt(b.fisher_inner(p.diff, p.diff) * b.fisher_inner(p.avg, p.avg));
      CHECK(std::abs(r.residual) <= 1e-10 * scale);
      CHECK(r.closed_form == 0.0);
    }
  }
  SUBCASE("closed form identity at eps 1e-3") {
    for (int i = 0; i < 50; ++i) {
      const auto b = random_block(4, 3, 1e-3, rng);
      const auto p = random_pair(3, 4, rng);
      const double eps = 1e-3;
      const auto r = lemma1_residual(p, b, eps);
      // Independent evaluation in long double with the dense Kronecker F.
      const auto f = oracle::kron(oracle::from(b.a()), oracle::from(b.g()));
      const double num = oracle::quad(f, oracle::vec(p.diff), oracle::vec(p.avg));
      const double den = oracle::quad(f, oracle::vec(p.avg), oracle::vec(p.avg));
      const double expected = num * eps / (den + eps);
      const double scale = std::sqrt(oracle::quad(f, oracle::vec(p.diff), oracle::vec(p.diff)) * den);
      CHECK(std::abs(r.closed_form - expected) <= 1e-12 * scale);
      CHECK(std::abs(r.residual - expected) <= 1e-10 * scale);
    }
  }
  SUBCASE("already orthogonal") {
    const auto b = diag14_block();
    // (8/5, -2/5) is F-orthogonal to (1, 1).
    const auto p = make_gradient_pair(Matrix::from_rows({{1.8, 0.8}}), Matrix::from_rows({{0.2, 1.2}}));
    for (double eps : {0.0, 1e-6, 1e-2, 1.0}) {
      CHECK(std::abs(lemma1_residual(p, b, eps).residual) <= 1e-15);
    }
  }
}

TEST_CASE("beta star") {
  SUBCASE("identity fisher") {
    Rng rng(4);
    KroneckerFisherBlock b(0, 3, 2);
    b.refresh_inverse(1e-2);
    const auto p = random_pair(2, 3, rng);
    const double s = projection_scalar(p, b, 0.0);
    const Matrix perp = orthogonal_component(p, s);
    CHECK(std::abs(beta_star(p, perp, b)) <= 1e-12);
  }
  SUBCASE("diag(1,4) example") {
    const auto b = diag14_block();
    const auto p = diag14_pair();
    const Matrix perp = Matrix::from_rows({{8.0 / 5.0, -2.0 / 5.0}});
    CHECK(b.fisher_inv_inner(p.avg, perp) == Approx(3.0 / 2.0).epsilon(1e-14));
    CHECK(b.fisher_inv_inner(perp, perp) == Approx(13.0 / 5.0).epsilon(1e-14));
    CHECK(beta_star(p, perp, b) == Approx(15.0 / 26.0).epsilon(1e-14));
  }
  SUBCASE("zero perpendicular component") {
    const auto b = diag14_block();
    CHECK(beta_star(diag14_pair(), Matrix(1, 2), b) == 0.0);
  }
}

TEST_CASE("surrogate objective") {
  Rng rng(5);
  SUBCASE("beta 0 is the KFAC surrogate") {
    const auto b = random_block(3, 2, 1e-2, rng);
    const auto p = random_pair(2, 3, rng);
    const Matrix perp = orthogonal_component(p, projection_scalar(p, b, 0.0));
    const auto minv = damped_inverse(b);
    const auto ga = oracle::vec(p.avg);
    const double kfac = -2.0 * oracle::quad(minv, ga, ga) + 0.5 * oracle::quad(minv, ga, ga);
    CHECK(surrogate_objective(p, perp, b, 0.0) == Approx(kfac).epsilon(1e-10));
  }
  SUBCASE("beta star minimizes over a grid") {
    for (int i = 0; i < 100; ++i) {
      const auto b = random_block(3, 3, 1e-3, rng);
      const auto p = random_pair(3, 3, rng);
      const Matrix perp = orthogonal_component(p, projection_scalar(p, b, 0.0));
      const double beta = beta_star(p, perp, b);
      const double best = surrogate_objective(p, perp, b, beta);
      const double tol = 1e-12 * (1.0 + std::abs(best));
      bool ok = true;
      for (int k = 0; k <= 100; ++k) {
        const double t = beta - 5.0 + 0.1 * k;
        ok = ok && best <= surrogate_objective(p, perp, b, t) + tol;
      }
      CHECK(ok);
      const double e = b.fisher_inv_inner(perp, perp);
      for (double t : {-1.0, -0.1, 0.1, 1.0}) {
        const double gap = surrogate_objective(p, perp, b, beta + t) - best;
        CHECK(std::abs(gap - 0.5 * e * t * t) <= 1e-9 * (1.0 + std::abs(best)));
      }
    }
  }
}

TEST_CASE("combined gradient") {
  Rng rng(6);
  const auto p = random_pair(2, 3, rng);
  const Matrix perp = random_matrix(2, 3, rng);
  CHECK(combined_gradient(p, perp, 0.0) == p.avg);
  CHECK(combined_gradient(p, Matrix(2, 3), 7.5) == p.avg);
  const Matrix c = combined_gradient(p, perp, 1.0);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(c(i, j) == p.avg(i, j) + perp(i, j));
}

TEST_CASE("eta star") {
  SUBCASE("aligned direction") {
    Rng rng(7);
    const auto b = random_block(3, 2, 1e-3, rng);
    const auto p = random_pair(2, 3, rng);
    CHECK(eta_star(p, p.avg, b) == Approx(1.0).epsilon(1e-14));
  }
  SUBCASE("orthogonal direction clamps to 0") {
    KroneckerFisherBlock b(0, 2, 1);
    b.refresh_inverse(1e-30);
    const auto p = make_gradient_pair(Matrix::from_rows({{1, 0}}), Matrix::from_rows({{1, 0}}));
    const Matrix comb = Matrix::from_rows({{0, 1}});
    CHECK(eta_star_raw(p, comb, b) == 0.0);
    CHECK(eta_star(p, comb, b) == 0.0);
  }
  SUBCASE("diag(1,4) example") {
    const auto b = diag14_block();
    const auto p = diag14_pair();
    CHECK(eta_star_raw(p, Matrix::from_rows({{1, 0}}), b) == Approx(1.0).epsilon(1e-14));
  }
  SUBCASE("clamp and guard") {
    const auto b = diag14_block();
    const auto p = diag14_pair();
    const Matrix small = Matrix::from_rows({{0.1, 0.1}});
    CHECK(eta_star_raw(p, small, b) == Approx(10.0).epsilon(1e-13));
    CHECK(eta_star(p, small, b) == 2.0);
    CHECK(eta_star(p, small, b, EtaClamp{0.0, 20.0}) == Approx(10.0).epsilon(1e-13));
    CHECK(eta_star_raw(p, Matrix(1, 2), b) == 1.0);
    CHECK(eta_star_raw(p, small, b, TotalGradient::kSum) == Approx(20.0).epsilon(1e-13));
  }
  SUBCASE("raw eta minimizes the quadratic model along the step") {
    Rng rng(8);
    int checked = 0;
    for (int i = 0; i < 100; ++i) {
      const auto b = random_block(3, 3, 1e-2, rng);
      const auto p = random_pair(3, 3, rng);
      const Matrix perp = orthogonal_component(p, projection_scalar(p, b, 0.0));
      const Matrix comb = combined_gradient(p, perp, beta_star(p, perp, b));
      const double eta = eta_star_raw(p, comb, b);
      if (eta <= 0.0 || eta >= 2.0) continue;
      ++checked;
      // q(t) = -t g^T M^{-1} c + t^2/2 c^T M^{-1} c along d = t M^{-1} c.
      const double lin = b.fisher_inv_inner(p.avg, comb);
      const double quadc = b.fisher_inv_inner(comb, comb);
      auto q = [&](double t) { return -t * lin + 0.5 * t * t * quadc; };
      CHECK(q(eta) <= q(eta + 1e-3));
      CHECK(q(eta) <= q(eta - 1e-3));
    }
    CHECK(checked > 50);
  }
}

TEST_CASE("fop layer step") {
  Rng rng(9);
  SUBCASE("equal sub-batch gradients reduce to KFAC") {
    const auto b = random_block(4, 3, 1e-3, rng);
    const Matrix g = random_matrix(3, 4, rng);
    const auto plan = fop_layer_step(make_gradient_pair(g, g), b, 0.5);
    CHECK(max_abs(plan.g_perp) == 0.0);
    CHECK(plan.beta == 0.0);
    CHECK(plan.eta_star == Approx(1.0).epsilon(1e-14));
    const Matrix kfac = kfac_layer_step(g, b, 0.5);
    CHECK(max_abs_diff(plan.update, kfac * plan.eta_star) <= 1e-15 * max_abs(kfac));
  }
  SUBCASE("beta zero and eta fixed 1 is bit-equal to KFAC") {
    const auto b = random_block(4, 3, 1e-3, rng);
    const auto p = random_pair(3, 4, rng);
    FopOptions opt;
    opt.beta_mode = BetaMode::kZero;
    opt.eta_mode = EtaMode::kFixed;
    opt.eta_value = 1.0;
    const auto plan = fop_layer_step(p, b, 0.3, opt);
    CHECK(plan.update == kfac_layer_step(p.avg, b, 0.3));
  }
  SUBCASE("plan invariants on random instances") {
    for (int i = 0; i < 100; ++i) {
      const auto b = random_block(5, 3, 1e-3, rng);
      const auto p = random_pair(3, 5, rng);
      const double eta0 = 0.7;
      const auto plan = fop_layer_step(p, b, eta0);
      CHECK(plan.epsilon == default_projection_epsilon(p, b));
      CHECK(max_abs_diff(plan.g_perp, axpy(p.diff, -plan.s_proj, p.avg)) == 0.0);
      CHECK(max_abs_diff(plan.g_combined, axpy(p.avg, plan.beta, plan.g_perp)) == 0.0);
      CHECK(plan.eta_star >= 0.0);
      CHECK(plan.eta_star <= 2.0);
      const Matrix expect = b.fisher_inv_vec(plan.g_combined) * (eta0 * plan.eta_star);
      CHECK(max_abs_diff(plan.update, expect) <= 1e-14 * max_abs(expect));
      CHECK(lemma1_residual(p, b, plan.epsilon).within_bound);
      CHECK(plan.perp_ratio == Approx(frobenius_norm(plan.g_perp) / frobenius_norm(p.avg)).epsilon(1e-14));
    }
  }
  SUBCASE("scale behavior") {
    for (int i = 0; i < 20; ++i) {
      const auto b = random_block(3, 3, 1e-3, rng);
      const auto p = random_pair(3, 3, rng);
      const double c = 3.7;
      const auto base = fop_layer_step(p, b, 0.1);
      const auto scaled = fop_layer_step(make_gradient_pair(p.g1 * c, p.g2 * c), b, 0.1);
      CHECK(scaled.s_proj == Approx(base.s_proj).epsilon(1e-9));
      CHECK(max_abs_diff(scaled.g_perp, base.g_perp * c) <= 1e-9 * c * max_abs(base.g_perp));
      CHECK(scaled.beta == Approx(base.beta).epsilon(1e-9));
      CHECK(scaled.eta_star == Approx(base.eta_star).epsilon(1e-9));
      CHECK(max_abs_diff(scaled.update, base.update * c) <= 1e-9 * c * max_abs(base.update));
    }
  }
  SUBCASE("non-finite input") {
    const auto b = diag14_block();
    const auto p = make_gradient_pair(Matrix::from_rows({{std::numeric_limits<double>::quiet_NaN(), 0}}),
                                      Matrix::from_rows({{1, 1}}));
    try {
      fop_layer_step(p, b, 0.1);
      FAIL("expected NonFiniteUpdate");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kNonFiniteUpdate);
    }
  }
}

TEST_CASE("kfac layer step") {
  Rng rng(10);
  const Matrix g = random_matrix(2, 3, rng);
  KroneckerFisherBlock id(0, 3, 2);
  id.refresh_inverse(1e-30);
  CHECK(max_abs_diff(kfac_layer_step(g, id, 0.25), g * 0.25) <= 1e-14 * max_abs(g));
  CHECK(max_abs(kfac_layer_step(g, id, 0.0)) == 0.0);
  KroneckerFisherBlock d(0, 3, 2);
  d.set_factors(Matrix::from_rows({{1, 0, 0}, {0, 2, 0}, {0, 0, 5}}), Matrix::from_rows({{3, 0}, {0, 0.5}}));
  d.refresh_inverse(1e-2);
  const Matrix got = kfac_layer_step(g, d, 0.5);
  const auto ref = oracle::unvec(oracle::apply(damped_inverse(d), oracle::vec(g)), 2, 3);
  CHECK(max_abs_diff(got, ref * 0.5) <= 1e-14 * max_abs(ref));
}

TEST_CASE("kl diagnostics") {
  Rng rng(11);
  SUBCASE("beta 0 is the KFAC KL-norm") {
    const auto b = random_block(3, 2, 1e-2, rng);
    const auto p = random_pair(2, 3, rng);
    const Matrix perp = orthogonal_component(p, projection_scalar(p, b, 0.0));
    const Matrix f = kronecker_dense(b.a(), b.g());
    const double lambda = 0.5;
    const auto kl = kl_diagnostics(p, perp, f, lambda, 0.0, 0.3);
    CHECK(kl.cross_term == 0.0);
    CHECK(kl.orth_term == 0.0);
    // Q = M^{-1} F M^{-1} from the dense oracle.
    const auto fd = oracle::from(f);
    const auto minv = oracle::inverse(oracle::shift(fd, lambda));
    const auto q = oracle::mul(oracle::mul(minv, fd), minv);
    const auto g = oracle::vec(p.avg);
    const double base = oracle::quad(q, g, g);
    CHECK(kl.base_term == Approx(base).epsilon(1e-10));
    CHECK(kl.total == Approx(0.09 * base).epsilon(1e-10));
  }
  SUBCASE("three-term split matches the oracle") {
    const auto b = random_block(3, 3, 1e-2, rng);
    const auto p = random_pair(3, 3, rng);
    const Matrix perp = orthogonal_component(p, projection_scalar(p, b, 0.0));
    const Matrix f = kronecker_dense(b.a(), b.g());
    const double lambda = 2.0, beta = -0.8, eta = 1.3;
    const auto kl = kl_diagnostics(p, perp, f, lambda, beta, eta);
    const auto fd = oracle::from(f);
    const auto minv = oracle::inverse(oracle::shift(fd, lambda));
    const auto q = oracle::mul(oracle::mul(minv, fd), minv);
    const auto g = oracle::vec(p.avg), gp = oracle::vec(perp);
    CHECK(kl.cross_term == Approx(2 * beta * oracle::quad(q, g, gp)).epsilon(1e-9));
    CHECK(kl.orth_term == Approx(beta * beta * oracle::quad(q, gp, gp)).epsilon(1e-9));
    oracle::Vec step(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) step[i] = g[i] + beta * gp[i];
    const auto d = oracle::apply(minv, step);
    CHECK(kl.total == Approx(eta * eta * oracle::quad(fd, d, d)).epsilon(1e-9));
    const auto ev = oracle::eigenvalues(fd);
    CHECK(kl.mu_max == Approx(ev.back()).epsilon(1e-10));
    CHECK(kl.mu_min == Approx(ev.front()).epsilon(1e-8));
  }
  SUBCASE("bound holds for lambda at least mu_max") {
    for (int i = 0; i < 50; ++i) {
      const auto b = random_block(3, 3, 1e-2, rng);
      const auto p = random_pair(3, 3, rng);
      const Matrix perp = orthogonal_component(p, projection_scalar(p, b, 0.0));
      const Matrix f = kronecker_dense(b.a(), b.g());
      const double mu = oracle::eigenvalues(oracle::from(f)).back();
      const double beta = beta_star(p, perp, b);
      for (double mult : {1.0, 10.0, 100.0}) {
        const auto kl = kl_diagnostics(p, perp, f, mult * mu, beta, 1.0);
        CHECK(kl.bound_holds);
        CHECK(kl.cross_bound_holds);
      }
    }
  }
  SUBCASE("lambda sweep slopes") {
    const auto b = random_block(3, 3, 1e-2, rng);
    const auto p = random_pair(3, 3, rng);
    const Matrix perp = orthogonal_component(p, projection_scalar(p, b, 0.0));
    const Matrix f = kronecker_dense(b.a(), b.g());
    const double mu = oracle::eigenvalues(oracle::from(f)).back();
    std::vector<double> lambdas, base, orth;
    for (double mult : {1e3, 1e4, 1e5}) {
      const auto kl = kl_diagnostics(p, perp, f, mult * mu, 0.9, 1.0);
      lambdas.push_back(mult * mu);
      base.push_back(kl.base_term);
      orth.push_back(kl.orth_bound);
    }
    CHECK(loglog_slope(lambdas, base) == Approx(-2.0).epsilon(0.05));
    CHECK(loglog_slope(lambdas, orth) == Approx(-1.0).epsilon(0.1));
  }
  SUBCASE("norm sandwich") {
    const auto b = random_block(3, 2, 1e-2, rng);
    const Matrix f = kronecker_dense(b.a(), b.g());
    const auto fd = oracle::from(f);
    const auto finv = oracle::inverse(fd);
    const auto ev = oracle::eigenvalues(fd);
    for (int i = 0; i < 100; ++i) {
      const auto x = oracle::vec(random_matrix(2, 3, rng));
      const double norm = std::sqrt(oracle::dot(x, x));
      const double inv_norm = std::sqrt(oracle::quad(finv, x, x));
      CHECK(std::sqrt(ev.front()) * inv_norm <= norm * (1 + 1e-12));
      CHECK(norm <= std::sqrt(ev.back()) * inv_norm * (1 + 1e-12));
    }
  }
  SUBCASE("too large") {
    const std::vector<double> g(kMaxDenseFisherDim + 1, 0.0);
    const Matrix f(kMaxDenseFisherDim + 1, kMaxDenseFisherDim + 1);
    try {
      kl_diagnostics(g, g, f, 1.0, 0.0, 1.0);
      FAIL("expected TooLargeForDenseDiagnostics");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kTooLargeForDenseDiagnostics);
    }
  }
}
