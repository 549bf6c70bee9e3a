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

#include "fopkit/verify.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>

#include "fopkit/config.hpp"
#include "fopkit/data.hpp"
#include "fopkit/distsim.hpp"
#include "fopkit/error.hpp"
#include "fopkit/fop.hpp"
#include "fopkit/nn.hpp"
#include "fopkit/optim.hpp"
#include "fopkit/trainer.hpp"

namespace fopkit {
namespace {

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), pattern, args...);
  return buf;
}

// Counts failures and remembers the worst observed ratio value/limit.
struct Tally {
  std::size_t count = 0;
  std::size_t failures = 0;
  double worst = 0.0;

  void add(double value, double limit) {
    ++count;
    const double ratio = limit > 0.0 ? value / limit : (value > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    if (!(value <= limit)) ++failures;
    if (!(ratio <= worst)) worst = ratio;
  }
  void add_flag(bool ok) {
    ++count;
    if (!ok) ++failures;
  }
  PropertyResult result(std::string name, const std::string& what) const {
    return {std::move(name), failures == 0 && count > 0,
            fmt("%zu/%zu violations; worst %s = %.3g of limit", failures, count, what.c_str(), worst)};
  }
};

std::size_t pick(const VerifyOptions& o, std::size_t fallback) { return o.instances ? o.instances : fallback; }

double rel_diff(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

double inverse_quadratic(const Matrix& f, std::span<const double> x) {
  const auto fact = spd_factorize(f, 0.0);
  const Matrix y = spd_solve(fact, Matrix::column(x));
  double q = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) q += x[i] * y(i, 0);
  return q;
}

std::vector<double> random_vector(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> matvec(const Matrix& m, std::span<const double> x) {
  std::vector<double> y(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) y[i] = dot(m.row(i), x);
  return y;
}

// ---------------------------------------------------------------- lemma1

SuiteReport suite_lemma1(const VerifyOptions& o) {
  SuiteReport rep;
  const std::size_t n = pick(o, 1000);
  constexpr std::array<double, 2> kEps = {1e-6, 1e-3};
  for (std::size_t k : {2, 4, 8}) {
    Rng rng(split_seed(o.seed, k));
    Tally exact;
    std::array<Tally, 2> identity, self_relative, bound, corrected;
    for (std::size_t i = 0; i < n; ++i) {
      const auto block = random_block(k, k, 1e-3, rng);
      const auto pair = make_gradient_pair(random_matrix(k, k, rng), random_matrix(k, k, rng));
      const double s = projection_scalar(pair, block, 0.0);
      const Matrix g_perp = orthogonal_component(pair, s);
      const double f_diff = std::sqrt(block.fisher_inner(pair.diff, pair.diff));
      const double f_avg = std::sqrt(block.fisher_inner(pair.avg, pair.avg));
      exact.add(std::abs(block.fisher_inner(g_perp, pair.avg)), 1e-9 * f_diff * f_avg);
      for (std::size_t e = 0; e < kEps.size(); ++e) {
        const auto res = lemma1_residual(pair, block, kEps[e]);
        // Relative to the scale of the cancelling terms; the rounding of s
        // alone perturbs the residual by about 1e-16 of that scale.
        identity[e].add(std::abs(res.residual - res.closed_form), 1e-10 * f_diff * f_avg);
        self_relative[e].add(std::abs(res.residual - res.closed_form), 1e-10 * std::abs(res.closed_form));
        bound[e].add(std::abs(res.residual), res.bound + 1e-12);
        corrected[e].add(std::abs(res.residual), kEps[e] * f_diff / f_avg * (1.0 + 1e-9));
      }
    }
    rep.properties.push_back(exact.result(fmt("exact_orthogonality[k=%zu]", k), "|<g_perp,g_avg>_F|"));
    for (std::size_t e = 0; e < kEps.size(); ++e) {
      rep.properties.push_back(
          identity[e].result(fmt("residual_identity[k=%zu,eps=%g]", k, kEps[e]), "|residual - closed form|"));
      rep.properties.push_back(bound[e].result(fmt("residual_bound[k=%zu,eps=%g]", k, kEps[e]), "|residual|"));
      rep.notes.push_back(fmt("k=%zu eps=%g: scale-invariant form |residual| <= eps ||F^1/2 g_diff|| / ||F^1/2 g_avg|| violated %zu/%zu",
                              k, kEps[e], corrected[e].failures, corrected[e].count));
      rep.notes.push_back(fmt("k=%zu eps=%g: identity error within 1e-10 of |closed form| itself in %zu/%zu (worst %.3g)",
                              k, kEps[e], self_relative[e].count - self_relative[e].failures, self_relative[e].count,
                              self_relative[e].worst));
    }
  }
  return rep;
}

// ---------------------------------------------------------------- beta / eta

struct Instance {
  KroneckerFisherBlock block;
  GradientPair pair;
  Matrix g_perp;
};

Instance random_instance(Rng& rng, std::size_t i) {
  static constexpr std::array<std::array<std::size_t, 2>, 4> kShapes = {{{3, 2}, {4, 4}, {6, 3}, {8, 5}}};
  const auto [a_dim, g_dim] = kShapes[i % kShapes.size()];
  const double damping = std::pow(10.0, rng.uniform(-3.0, 0.0));
  Instance inst{random_block(a_dim, g_dim, damping, rng),
                make_gradient_pair(random_matrix(g_dim, a_dim, rng), random_matrix(g_dim, a_dim, rng)), {}};
  const double s = projection_scalar(inst.pair, inst.block, default_projection_epsilon(inst.pair, inst.block));
  inst.g_perp = orthogonal_component(inst.pair, s);
  return inst;
}

SuiteReport suite_beta(const VerifyOptions& o) {
  SuiteReport rep;
  Rng rng(split_seed(o.seed, 101));
  Tally grid, quad;
  for (std::size_t i = 0; i < pick(o, 100); ++i) {
    const auto inst = random_instance(rng, i);
    const double beta = beta_star(inst.pair, inst.g_perp, inst.block);
    const double e = inst.block.fisher_inv_inner(inst.g_perp, inst.g_perp);
    const double j_star = surrogate_objective(inst.pair, inst.g_perp, inst.block, beta);
    const double scale = std::max(1.0, std::abs(j_star));
    double j_min = std::numeric_limits<double>::infinity();
    for (int t = 0; t <= 100; ++t) {
      j_min = std::min(j_min, surrogate_objective(inst.pair, inst.g_perp, inst.block, beta - 5.0 + 0.1 * t));
    }
    grid.add(std::max(0.0, j_star - j_min), 1e-10 * scale);
    for (double t : {-1.0, -0.1, 0.1, 1.0}) {
      const double lhs = surrogate_objective(inst.pair, inst.g_perp, inst.block, beta + t) - j_star;
      quad.add(std::abs(lhs - 0.5 * e * t * t), 1e-9 * scale);
    }
  }
  rep.properties.push_back(grid.result("beta_star_minimizes_grid", "J(beta*) - min grid"));
  rep.properties.push_back(quad.result("quadratic_identity", "|J(b*+t) - J(b*) - E t^2/2|"));
  return rep;
}

SuiteReport suite_eta(const VerifyOptions& o) {
  SuiteReport rep;
  Rng rng(split_seed(o.seed, 102));
  const std::size_t wanted = pick(o, 100);
  Tally argmin, local;
  std::size_t tried = 0;
  for (std::size_t i = 0; argmin.count < wanted && tried < 100 * wanted; ++i, ++tried) {
    const auto inst = random_instance(rng, i);
    const double beta = rng.uniform(-2.0, 2.0);
    const Matrix g_comb = combined_gradient(inst.pair, inst.g_perp, beta);
    const double raw = eta_star_raw(inst.pair, g_comb, inst.block);
    if (!(raw >= 0.0 && raw <= 2.0)) continue;
    // Quadratic model along p = M^{-1} g_comb, built from M p directly.
    const Matrix p = inst.block.fisher_inv_vec(g_comb);
    const double a = frobenius_inner(inst.pair.avg, p);
    const double b = frobenius_inner(p, inst.block.damped_fisher_vec(p));
    const auto q = [&](double eta) { return -eta * a + 0.5 * eta * eta * b; };
    const double oracle = a / b;
    argmin.add(rel_diff(raw, oracle), 1e-10);
    bool ok = true;
    for (double d : {1e-3, 1e-1}) ok = ok && q(raw) <= q(raw + d) && q(raw) <= q(raw - d);
    local.add_flag(ok);
  }
  rep.properties.push_back(argmin.result("eta_star_is_model_minimizer", "relative error"));
  rep.properties.push_back(local.result("eta_star_local_minimum", "flag"));
  rep.notes.push_back(fmt("%zu instances drawn for %zu with unclamped eta* in [0, 2]", tried, argmin.count));
  return rep;
}

// ---------------------------------------------------------------- reduction

SuiteReport suite_reduction(const VerifyOptions& o) {
  SuiteReport rep;
  Rng rng(split_seed(o.seed, 103));
  Tally equal_grads, config_equiv, scaling;
  FopOptions zero_fixed;
  zero_fixed.beta_mode = BetaMode::kZero;
  zero_fixed.eta_mode = EtaMode::kFixed;
  zero_fixed.eta_value = 1.0;
  for (std::size_t i = 0; i < pick(o, 100); ++i) {
    auto inst = random_instance(rng, i);
    const double eta0 = rng.uniform(0.01, 1.0);
    const auto& block = inst.block;

    const auto same = make_gradient_pair(inst.pair.g1, inst.pair.g1);
    const Matrix kfac_same = kfac_layer_step(inst.pair.g1, block, eta0);
    equal_grads.add(max_abs_diff(fop_layer_step(same, block, eta0).update, kfac_same), 1e-12 * max_abs(kfac_same));

    const Matrix kfac_avg = kfac_layer_step(inst.pair.avg, block, eta0);
    config_equiv.add(max_abs_diff(fop_layer_step(inst.pair, block, eta0, zero_fixed).update, kfac_avg),
                     1e-14 * max_abs(kfac_avg));

    FopOptions exact;
    exact.epsilon = 0.0;
    const auto base = fop_layer_step(inst.pair, block, eta0, exact);
    for (double c : {0.5, 3.0}) {
      const auto scaled = fop_layer_step(make_gradient_pair(inst.pair.g1 * c, inst.pair.g2 * c), block, eta0, exact);
      double err = std::max({rel_diff(scaled.s_proj, base.s_proj), rel_diff(scaled.beta, base.beta),
                             rel_diff(scaled.eta_star, base.eta_star)});
      err = std::max(err, max_abs_diff(scaled.update, base.update * c) / (c * max_abs(base.update)));
      scaling.add(err, 1e-9);
    }
  }
  rep.properties.push_back(equal_grads.result("equal_gradients_match_kfac", "max |d_fop - d_kfac|"));
  rep.properties.push_back(config_equiv.result("beta_zero_eta_one_match_kfac", "max |d_fop - d_kfac|"));
  rep.properties.push_back(scaling.result("gradient_scale_covariance", "relative error"));
  return rep;
}

// ---------------------------------------------------------------- klbound

SuiteReport suite_klbound(const VerifyOptions& o) {
  SuiteReport rep;
  Rng rng(split_seed(o.seed, 104));
  constexpr std::array<double, 3> kSweep = {1e3, 1e4, 1e5};
  constexpr std::array<double, 6> kBoundRatios = {1.0, 10.0, 100.0, 1e3, 1e4, 1e5};
  constexpr std::array<std::size_t, 4> kSizes = {8, 16, 32, 64};
  Tally base_slope, orth_slope, bound, cross;
  std::size_t small_lambda_violations = 0;
  const std::size_t n_inst = pick(o, 20);
  std::array<double, kSweep.size()> base_sum{}, orth_sum{};
  for (std::size_t i = 0; i < n_inst; ++i) {
    const std::size_t n = kSizes[i % kSizes.size()];
    const Matrix f = random_spd(n, rng);
    const auto g = random_vector(n, rng);
    const auto g_diff = random_vector(n, rng);
    const auto fg = matvec(f, g);
    const double s = dot(g_diff, fg) / dot(g, fg);
    std::vector<double> g_perp(n);
    for (std::size_t j = 0; j < n; ++j) g_perp[j] = g_diff[j] - s * g[j];
    const double beta = rng.uniform(-2.0, 2.0);
    const double mu_max = sym_eigendecomposition(f).values.back();

    std::vector<double> lambdas, base, orth_bound;
    for (std::size_t r = 0; r < kSweep.size(); ++r) {
      const auto d = kl_diagnostics(g, g_perp, f, kSweep[r] * mu_max, beta, 1.0);
      lambdas.push_back(kSweep[r] * mu_max);
      base.push_back(d.base_term);
      orth_bound.push_back(d.orth_bound);
      base_sum[r] += d.base_term;
      orth_sum[r] += d.orth_bound;
    }
    const double sb = loglog_slope(lambdas, base);
    const double so = loglog_slope(lambdas, orth_bound);
    base_slope.add(std::abs(sb + 2.0), 0.1);
    orth_slope.add(std::abs(so + 1.0), 0.1);
    rep.notes.push_back(fmt("instance %zu (n=%zu, beta=%+.3f): base slope %.5f, orth-bound slope %.5f", i, n, beta,
                            sb, so));
    for (double ratio : kBoundRatios) {
      const double eta = rng.uniform(0.1, 2.0);
      const auto d = kl_diagnostics(g, g_perp, f, ratio * mu_max, beta, eta);
      bound.add_flag(d.bound_holds);
      cross.add_flag(d.cross_bound_holds);
    }
    if (!kl_diagnostics(g, g_perp, f, 1e-2 * mu_max, beta, 1.0).bound_holds) ++small_lambda_violations;
  }
  for (std::size_t r = 0; r < kSweep.size(); ++r) {
    rep.notes.push_back(fmt("lambda/mu_max=%g: mean base %.6e, mean orth bound %.6e", kSweep[r],
                            base_sum[r] / n_inst, orth_sum[r] / n_inst));
  }
  rep.notes.push_back(fmt("lambda = 0.01 mu_max (outside the bound's regime): %zu/%zu violations", small_lambda_violations,
                          n_inst));
  rep.properties.push_back(base_slope.result("base_term_slope_-2", "|slope + 2|"));
  rep.properties.push_back(orth_slope.result("orth_bound_slope_-1", "|slope + 1|"));
  rep.properties.push_back(bound.result("kl_bound_lambda_ge_mu_max", "flag"));
  rep.properties.push_back(cross.result("cross_term_bound", "flag"));
  return rep;
}

// ---------------------------------------------------------------- lemma2

SuiteReport suite_lemma2(const VerifyOptions& o) {
  SuiteReport rep;
  Rng rng(split_seed(o.seed, 105));
  constexpr std::array<std::size_t, 5> kSizes = {2, 3, 5, 8, 13};
  Tally lower, upper;
  const std::size_t n_inst = pick(o, 100);
  for (std::size_t i = 0; i < n_inst; ++i) {
    const std::size_t n = kSizes[i % kSizes.size()];
    const Matrix f = random_spd(n, rng);
    const auto eig = sym_eigendecomposition(f);
    const double mu_min = eig.values.front();
    const double mu_max = eig.values.back();
    for (std::size_t j = 0; j < n_inst; ++j) {
      const auto x = random_vector(n, rng);
      const double norm = std::sqrt(dot(x, x));
      const double inv_norm = std::sqrt(inverse_quadratic(f, x));
      lower.add(std::max(0.0, std::sqrt(mu_min) * inv_norm - norm), 1e-10 * norm);
      upper.add(std::max(0.0, norm - std::sqrt(mu_max) * inv_norm), 1e-10 * norm);
    }
  }
  rep.properties.push_back(lower.result("lower_sandwich", "excess"));
  rep.properties.push_back(upper.result("upper_sandwich", "excess"));
  return rep;
}

// ---------------------------------------------------------------- gradcheck

// Signs of every hidden pre-activation, used to detect ReLU kinks.
std::vector<char> relu_pattern(const Model& model, const Matrix& x) {
  std::vector<char> pattern;
  Matrix a = x;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    const auto& layer = model.layer(l);
    Matrix z(a.rows(), layer.out_features());
    for (std::size_t r = 0; r < a.rows(); ++r) {
      for (std::size_t o = 0; o < layer.out_features(); ++o) {
        double s = layer.weights(o, layer.in_features());
        for (std::size_t c = 0; c < layer.in_features(); ++c) s += layer.weights(o, c) * a(r, c);
        z(r, o) = s;
        if (layer.activation == Activation::kRelu) pattern.push_back(s > 0.0 ? 1 : 0);
      }
    }
    if (layer.activation == Activation::kRelu) {
      for (double& v : z.data()) v = std::max(v, 0.0);
    }
    a = std::move(z);
  }
  return pattern;
}

SuiteReport suite_gradcheck(const VerifyOptions& o) {
  SuiteReport rep;
  Rng rng(split_seed(o.seed, 106));
  const std::array<std::size_t, 4> widths = {6, 10, 8, 4};
  Model model = Model::mlp(widths, Activation::kRelu, o.seed);
  const std::size_t batch = 16;
  Matrix x = random_matrix(batch, widths.front(), rng);
  std::vector<int> labels(batch);
  for (int& y : labels) y = static_cast<int>(rng.below(widths.back()));
  const BatchTape tape = loss_and_backward(model, x, labels);
  constexpr double h = 1e-4;
  const std::size_t coords = pick(o, 20);
  std::size_t redraws = 0;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    Tally tally;
    const std::size_t rows = model.layer(l).weights.rows();
    const std::size_t cols = model.layer(l).weights.cols();
    for (std::size_t k = 0; k < coords; ++k) {
      for (int attempt = 0; attempt < 100; ++attempt) {
        const std::size_t r = rng.below(rows);
        // The first coordinate of every layer is a bias.
        const std::size_t c = k == 0 ? cols - 1 : rng.below(cols);
        double& w = model.layer(l).weights(r, c);
        const double saved = w;
        w = saved + h;
        const double up = evaluate(model, x, labels).loss;
        const auto pattern_up = relu_pattern(model, x);
        w = saved - h;
        const double down = evaluate(model, x, labels).loss;
        const auto pattern_down = relu_pattern(model, x);
        w = saved;
        if (pattern_up != pattern_down) {
          ++redraws;
          continue;
        }
        const double fd = (up - down) / (2.0 * h);
        const double bp = tape.grads[l](r, c);
        tally.add(std::abs(fd - bp) / std::max({std::abs(fd), std::abs(bp), 1e-6}), 1e-5);
        break;
      }
    }
    rep.properties.push_back(tally.result(fmt("finite_difference_layer%zu", l), "relative error"));
  }
  rep.notes.push_back(fmt("%zu coordinates redrawn because a ReLU kink lay within h", redraws));
  return rep;
}

// ---------------------------------------------------------------- distributed

SuiteReport suite_distributed(const VerifyOptions& o) {
  SuiteReport rep;
  const Dataset data = gen_blobs(3, 22, 4, 0.5, o.seed);
  const std::array<std::size_t, 4> widths = {4, 12, 10, 3};
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::kFop;
  cfg.lr = 0.1;
  cfg.damping = 1e-2;
  cfg.curvature.cov_interval = 2;
  cfg.curvature.inv_interval = 4;
  cfg.seed = o.seed;
  const std::size_t steps = 20;
  for (std::size_t workers : {2, 4, 8}) {
    Model sim = Model::mlp(widths, Activation::kRelu, o.seed);
    Model ref = sim;
    OptimizerState sim_state = OptimizerState::create(sim, cfg);
    OptimizerState ref_state = OptimizerState::create(ref, cfg);
    MessageLog log;
    std::vector<MessageRecord> expected;
    double worst = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
      const auto halves = split_batch(data.features, data.labels, split_seed(cfg.seed, step));
      const auto topo = ClusterTopology::from_halves(workers, halves.first.indices, halves.second.indices);
      simulate_fop_step(sim, data.features, data.labels, topo, cfg, sim_state, log);
      const auto first = gather_rows(data.features, data.labels, topo.group_rows(true));
      const auto second = gather_rows(data.features, data.labels, topo.group_rows(false));
      fop_step(ref, first, second, cfg, ref_state);
      const auto a = sim.parameters();
      const auto b = ref.parameters();
      for (std::size_t k = 0; k < a.size(); ++k) {
        worst = std::max(worst, std::abs(a[k] - b[k]) / std::max(1.0, std::abs(b[k])));
      }
      if (cfg.curvature.accumulates_at(step)) {
        for (std::size_t l = 0; l < sim.num_layers(); ++l) {
          const std::size_t in = sim.layer(l).weights.cols();
          const std::size_t out = sim.layer(l).weights.rows();
          expected.push_back({step, MessageKind::kFactorSend, l, (workers - 1) * (in * in + out * out)});
        }
      }
      expected.push_back({step, MessageKind::kAllreduceG1, std::nullopt, sim.parameter_count()});
      expected.push_back({step, MessageKind::kAllreduceG2, std::nullopt, sim.parameter_count()});
      for (std::size_t l = 0; l < sim.num_layers(); ++l) {
        expected.push_back({step, MessageKind::kBroadcastUpdate, l, sim.layer(l).weights.size()});
      }
    }
    rep.properties.push_back({fmt("parameter_equivalence[N=%zu]", workers), worst <= 1e-10,
                              fmt("max relative |dtheta| = %.3e over %zu steps", worst, steps)});
    rep.properties.push_back({fmt("message_counts[N=%zu]", workers), log.records == expected,
                              fmt("%zu records, %zu expected", log.records.size(), expected.size())});
  }
  return rep;
}

// ---------------------------------------------------------------- convergence

RunConfig convergence_config(OptimizerKind kind, double lr, std::uint64_t seed) {
  RunConfig cfg;
  cfg.data.kind = DataKind::kSpirals;
  cfg.data.classes = 2;
  cfg.data.per_class = 1000;
  cfg.data.noise = 0.0;
  cfg.data.turns = 2.0;
  cfg.model.hidden = {64, 64};
  cfg.batch_size = 0;
  cfg.epochs = 400;
  cfg.optimizer.kind = kind;
  cfg.optimizer.lr = lr;
  cfg.optimizer.damping = 1e-3;
  if (kind == OptimizerKind::kSgd) cfg.optimizer.momentum = 0.9;
  cfg.set_seed(seed);
  return cfg;
}

std::optional<std::size_t> epochs_to_accuracy(const RunConfig& cfg, const TrainData& data, double target) {
  TrainHooks hooks;
  hooks.stop_accuracy = target;
  return train(cfg, data, hooks).epochs_to_target;
}

std::string epochs_text(std::optional<std::size_t> e) { return e ? std::to_string(*e) : std::string("never"); }

bool sooner(std::optional<std::size_t> a, std::optional<std::size_t> b) { return a && (!b || *a < *b); }

SuiteReport suite_convergence(const VerifyOptions& o) {
  SuiteReport rep;
  constexpr double kTarget = 0.95;
  constexpr std::array<double, 6> kSecondOrderGrid = {0.1, 0.2, 0.5, 1.0, 2.0, 4.0};
  constexpr std::array<double, 5> kSgdGrid = {0.01, 0.03, 0.1, 0.3, 1.0};

  // The shared eta0 is tuned for the KFAC baseline on a held-out seed.
  const std::uint64_t tuning_seed = o.seed + 1000;
  const TrainData tuning_data = load_data(convergence_config(OptimizerKind::kKfac, 1.0, tuning_seed));
  double lr = kSecondOrderGrid.front();
  std::optional<std::size_t> best;
  for (double candidate : kSecondOrderGrid) {
    const auto e = epochs_to_accuracy(convergence_config(OptimizerKind::kKfac, candidate, tuning_seed), tuning_data,
                                      kTarget);
    if (sooner(e, best)) {
      best = e;
      lr = candidate;
    }
  }
  rep.notes.push_back(fmt("shared eta0 = %g (KFAC reached the target in %s epochs on tuning seed %llu)", lr,
                          epochs_text(best).c_str(), static_cast<unsigned long long>(tuning_seed)));

  const std::size_t seeds = pick(o, 5);
  std::size_t fop_not_slower = 0;
  std::size_t beats_sgd = 0;
  for (std::size_t i = 0; i < seeds; ++i) {
    const std::uint64_t seed = o.seed + i;
    const auto fop_cfg = convergence_config(OptimizerKind::kFop, lr, seed);
    const TrainData data = load_data(fop_cfg);
    const auto fop = epochs_to_accuracy(fop_cfg, data, kTarget);
    const auto kfac = epochs_to_accuracy(convergence_config(OptimizerKind::kKfac, lr, seed), data, kTarget);
    // SGD only has to run as long as the slower second-order method.
    std::optional<std::size_t> sgd;
    double sgd_lr = 0.0;
    const std::size_t cap = std::max(fop.value_or(0), kfac.value_or(0));
    if (fop && kfac) {
      for (double sgd_candidate : kSgdGrid) {
        auto cfg = convergence_config(OptimizerKind::kSgd, sgd_candidate, seed);
        cfg.epochs = cap;
        const auto e = epochs_to_accuracy(cfg, data, kTarget);
        if (sooner(e, sgd)) {
          sgd = e;
          sgd_lr = sgd_candidate;
        }
      }
    }
    if (fop && (!kfac || *fop <= *kfac)) ++fop_not_slower;
    if (fop && kfac && (!sgd || (*fop < *sgd && *kfac < *sgd))) ++beats_sgd;
    const std::string sgd_text = sgd ? std::to_string(*sgd) + fmt(" (lr %g)", sgd_lr) : ">" + std::to_string(cap);
    rep.notes.push_back(fmt("seed %llu: epochs to %.0f%% train accuracy: fop %s, kfac %s, sgd %s",
                            static_cast<unsigned long long>(seed), 100 * kTarget, epochs_text(fop).c_str(),
                            epochs_text(kfac).c_str(), sgd_text.c_str()));
  }
  const std::size_t needed = seeds >= 5 ? seeds - 1 : seeds;
  rep.properties.push_back({"fop_not_slower_than_kfac", fop_not_slower >= needed,
                            fmt("%zu/%zu seeds (need %zu)", fop_not_slower, seeds, needed)});
  rep.properties.push_back({"second_order_faster_than_sgd", beats_sgd == seeds,
                            fmt("%zu/%zu seeds", beats_sgd, seeds)});
  return rep;
}

using SuiteFn = SuiteReport (*)(const VerifyOptions&);

const std::vector<std::pair<std::string, SuiteFn>>& registry() {
  static const std::vector<std::pair<std::string, SuiteFn>> suites = {
      {"lemma1", suite_lemma1},   {"beta", suite_beta},           {"eta", suite_eta},
      {"reduction", suite_reduction}, {"klbound", suite_klbound}, {"lemma2", suite_lemma2},
      {"gradcheck", suite_gradcheck}, {"distributed", suite_distributed}, {"convergence", suite_convergence},
  };
  return suites;
}

}  // namespace

bool SuiteReport::passed() const {
  return !properties.empty() &&
         std::all_of(properties.begin(), properties.end(), [](const PropertyResult& p) { return p.passed; });
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, fn] : registry()) out.push_back(name);
    return out;
  }();
  return names;
}

SuiteReport run_suite(std::string_view name, const VerifyOptions& options) {
  for (const auto& [suite, fn] : registry()) {
    if (suite != name) continue;
    const auto start = std::chrono::steady_clock::now();
    SuiteReport rep = fn(options);
    rep.suite = suite;
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rep;
  }
  throw Error(ErrorKind::kInvalidParam, "unknown suite '" + std::string(name) + "'");
}

std::vector<SuiteReport> run_suites(std::string_view name, const VerifyOptions& options) {
  if (name != "all") return {run_suite(name, options)};
  std::vector<SuiteReport> out;
  for (const auto& suite : suite_names()) out.push_back(run_suite(suite, options));
  return out;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

Matrix random_spd(std::size_t n, Rng& rng) {
  const Matrix b = random_matrix(n, n, rng);
  Matrix f = matmul(b, transpose(b)) * (1.0 / static_cast<double>(n));
  // Exact symmetry, then the floor.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) f(j, i) = f(i, j);
  }
  return add_diagonal(std::move(f), 0.1);
}

KroneckerFisherBlock random_block(std::size_t a_dim, std::size_t g_dim, double damping, Rng& rng) {
  KroneckerFisherBlock block(0, a_dim, g_dim);
  Matrix a = random_spd(a_dim, rng);
  Matrix g = random_spd(g_dim, rng);
  block.set_factors(std::move(a), std::move(g));
  block.refresh_inverse(damping);
  return block;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error(ErrorKind::kInvalidParam, "loglog_slope: need >= 2 points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace fopkit
