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

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "fopkit/error.hpp"
#include "fopkit/optim.hpp"
#include "fopkit/schedule.hpp"
#include "fopkit/verify.hpp"
#include "oracle.hpp"

using namespace fopkit;
using doctest::Approx;

namespace {

struct Toy {
  Matrix x;
  std::vector<int> y;
};

Toy toy_batch(std::size_t n, std::size_t dim, int classes, std::uint64_t seed) {
  Rng rng(seed);
  Toy t{random_matrix(n, dim, rng), std::vector<int>(n)};
  for (auto& v : t.y) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
  return t;
}

Model toy_model(std::uint64_t seed = 3) {
  const std::vector<std::size_t> widths = {3, 6, 4};
  return Model::mlp(widths, Activation::kRelu, seed);
}

OptimizerConfig config(OptimizerKind kind, double lr) {
  OptimizerConfig cfg;
  cfg.kind = kind;
  cfg.lr = lr;
  cfg.seed = 17;
  return cfg;
}

std::vector<double> run(OptimizerKind kind, double lr, int steps) {
  auto cfg = config(kind, lr);
  cfg.momentum = kind == OptimizerKind::kSgd ? 0.9 : 0.0;
  cfg.curvature = {2, 4};
  Model m = toy_model();
  auto state = OptimizerState::create(m, cfg);
  std::vector<double> losses;
  for (int s = 0; s < steps; ++s) {
    const auto batch = toy_batch(16, 3, 4, 100 + static_cast<std::uint64_t>(s));
    losses.push_back(optimizer_step(m, batch.x, batch.y, cfg, state).loss);
  }
  const auto theta = m.parameters();
  losses.insert(losses.end(), theta.begin(), theta.end());
  return losses;
}

}  // namespace

TEST_CASE("config validation") {
  auto cfg = config(OptimizerKind::kKfac, 0.1);
  CHECK_NOTHROW(cfg.validate());
  cfg.lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = config(OptimizerKind::kFop, 0.1);
  cfg.damping = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = config(OptimizerKind::kSgd, 0.1);
  cfg.momentum = 1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  CHECK(parse_optimizer_kind("fop") == OptimizerKind::kFop);
  CHECK_THROWS_AS(parse_optimizer_kind("lbfgs"), Error);
}

TEST_CASE("sgd step") {
  const auto batch = toy_batch(8, 3, 4, 1);
  SUBCASE("no momentum is a plain gradient step") {
    Model m = toy_model();
    const auto tape = loss_and_backward(m, batch.x, batch.y);
    const Model before = m;
    auto cfg = config(OptimizerKind::kSgd, 0.2);
    auto state = OptimizerState::create(m, cfg);
    sgd_step(m, tape, cfg, state);
    for (std::size_t l = 0; l < m.num_layers(); ++l)
      CHECK(m.layer(l).weights == before.layer(l).weights - tape.grads[l] * 0.2);
    CHECK(state.step == 1);
  }
  SUBCASE("two momentum steps against the unrolled recurrence") {
    Model m = toy_model();
    auto cfg = config(OptimizerKind::kSgd, 0.1);
    cfg.momentum = 0.9;
    auto state = OptimizerState::create(m, cfg);
    const Model m0 = m;
    const auto t1 = loss_and_backward(m, batch.x, batch.y);
    sgd_step(m, t1, cfg, state);
    const Model m1 = m;
    const auto t2 = loss_and_backward(m, batch.x, batch.y);
    sgd_step(m, t2, cfg, state);
    for (std::size_t l = 0; l < m.num_layers(); ++l) {
      // theta2 = theta0 - lr g1 - lr (0.9 g1 + g2)
      const Matrix expect = m0.layer(l).weights - t1.grads[l] * 0.1 - (t1.grads[l] * 0.9 + t2.grads[l]) * 0.1;
      CHECK(max_abs_diff(m.layer(l).weights, expect) <= 1e-15 * 8);
      CHECK(max_abs_diff(m1.layer(l).weights, m0.layer(l).weights - t1.grads[l] * 0.1) <= 1e-16 * 8);
    }
  }
  SUBCASE("zero rate is a no-op") {
    Model m = toy_model();
    auto cfg = config(OptimizerKind::kSgd, 0.1);
    auto state = OptimizerState::create(m, cfg);
    state.lr = 0.0;
    const Model before = m;
    sgd_step(m, loss_and_backward(m, batch.x, batch.y), cfg, state);
    CHECK(m == before);
  }
  SUBCASE("decoupled weight decay") {
    Model m = toy_model();
    auto cfg = config(OptimizerKind::kSgd, 0.1);
    cfg.weight_decay = 0.01;
    auto state = OptimizerState::create(m, cfg);
    const Model before = m;
    const auto tape = loss_and_backward(m, batch.x, batch.y);
    sgd_step(m, tape, cfg, state);
    for (std::size_t l = 0; l < m.num_layers(); ++l) {
      const Matrix expect = before.layer(l).weights - tape.grads[l] * 0.1 - before.layer(l).weights * 0.001;
      CHECK(max_abs_diff(m.layer(l).weights, expect) <= 1e-15 * 8);
    }
  }
}

TEST_CASE("adamw step") {
  const auto batch = toy_batch(8, 3, 4, 2);
  SUBCASE("first step against hand computation") {
    Model m = toy_model();
    auto cfg = config(OptimizerKind::kAdamw, 0.01);
    auto state = OptimizerState::create(m, cfg);
    const Model before = m;
    const auto tape = loss_and_backward(m, batch.x, batch.y);
    adamw_step(m, tape, cfg, state);
    for (std::size_t l = 0; l < m.num_layers(); ++l) {
      const auto& g = tape.grads[l];
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) {
          // m_hat = g and v_hat = g^2 after one bias-corrected step.
          const double expect = before.layer(l).weights(i, j) - 0.01 * g(i, j) / (std::abs(g(i, j)) + 1e-8);
          CHECK(m.layer(l).weights(i, j) == Approx(expect).epsilon(1e-12));
        }
    }
  }
  SUBCASE("zero gradient with decay only shrinks") {
    Model m = toy_model();
    auto cfg = config(OptimizerKind::kAdamw, 0.01);
    cfg.weight_decay = 0.1;
    auto state = OptimizerState::create(m, cfg);
    const Model before = m;
    BatchTape tape;
    for (const auto& l : m.layers()) tape.grads.emplace_back(l.weights.rows(), l.weights.cols());
    adamw_step(m, tape, cfg, state);
    for (std::size_t l = 0; l < m.num_layers(); ++l)
      CHECK(max_abs_diff(m.layer(l).weights, before.layer(l).weights * (1.0 - 0.001)) <= 1e-16 * 4);
    cfg.weight_decay = 0.0;
    const Model mid = m;
    adamw_step(m, tape, cfg, state);
    CHECK(m == mid);
  }
}

TEST_CASE("kfac step") {
  const auto batch = toy_batch(10, 3, 4, 3);
  SUBCASE("identity factors reduce to scaled SGD") {
    Model m = toy_model();
    auto cfg = config(OptimizerKind::kKfac, 0.5);
    cfg.damping = 1e-2;
    cfg.curvature = {1000, 1000};
    auto state = OptimizerState::create(m, cfg);
    state.step = 1;  // not an accumulation step, so factors stay at identity
    const Model before = m;
    const auto tape = loss_and_backward(m, batch.x, batch.y);
    kfac_step(m, tape, cfg, state);
    const double scale = 0.5 / ((1 + 0.1) * (1 + 0.1));
    for (std::size_t l = 0; l < m.num_layers(); ++l)
      CHECK(max_abs_diff(m.layer(l).weights, before.layer(l).weights - tape.grads[l] * scale) <= 1e-15 * 8);
  }
  SUBCASE("dense natural gradient oracle on a linear model") {
    Rng rng(4);
    Model m({{random_matrix(2, 2, rng), Activation::kIdentity}});
    const Matrix x = Matrix::from_rows({{0.5}, {-1.2}, {2.0}, {0.3}});
    const std::vector<int> y = {0, 1, 1, 0};
    auto cfg = config(OptimizerKind::kKfac, 0.3);
    cfg.damping = 1e-3;
    auto state = OptimizerState::create(m, cfg);
    const Model before = m;
    const auto tape = loss_and_backward(m, x, y);
    kfac_step(m, tape, cfg, state);
    // Dense factors from the closed-form softmax gradient.
    oracle::Dense a(2, 2), g(2, 2);
    std::vector<double> grad(4, 0.0);  // column-stacked 2 x 2
    for (std::size_t r = 0; r < 4; ++r) {
      const double in[2] = {x(r, 0), 1.0};
      const double z0 = before.layer(0).weights(0, 0) * in[0] + before.layer(0).weights(0, 1);
      const double z1 = before.layer(0).weights(1, 0) * in[0] + before.layer(0).weights(1, 1);
      const double p0 = 1.0 / (1.0 + std::exp(z1 - z0));
      const double delta[2] = {p0 - (y[r] == 0), (1 - p0) - (y[r] == 1)};
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
          a(i, j) += in[i] * in[j] / 4.0L;
          g(i, j) += delta[i] * delta[j] / 4.0L;
          grad[j * 2 + i] += delta[i] * in[j] / 4.0;
        }
    }
    const double s = std::sqrt(1e-3);
    const auto minv = oracle::inverse(oracle::kron(oracle::shift(a, s), oracle::shift(g, s)));
    const auto d = oracle::unvec(oracle::apply(minv, grad), 2, 2);
    CHECK(max_abs_diff(m.layer(0).weights, before.layer(0).weights - d * 0.3) <= 1e-10 * max_abs(d));
  }
  SUBCASE("stale inverse path is deterministic") {
    CHECK(run(OptimizerKind::kKfac, 0.1, 9) == run(OptimizerKind::kKfac, 0.1, 9));
  }
}

TEST_CASE("fop step") {
  const auto batch = toy_batch(12, 3, 4, 5);
  SUBCASE("duplicated halves equal a KFAC step") {
    Model fm = toy_model(), km = toy_model();
    auto fcfg = config(OptimizerKind::kFop, 0.2), kcfg = config(OptimizerKind::kKfac, 0.2);
    auto fs = OptimizerState::create(fm, fcfg), ks = OptimizerState::create(km, kcfg);
    SubBatch whole{batch.x, batch.y, {}};
    for (int step = 0; step < 3; ++step) {
      fop_step(fm, whole, whole, fcfg, fs);
      kfac_step(km, loss_and_backward(km, batch.x, batch.y), kcfg, ks);
      for (std::size_t l = 0; l < fm.num_layers(); ++l)
        CHECK(max_abs_diff(fm.layer(l).weights, km.layer(l).weights) <= 1e-12);
    }
  }
  SUBCASE("beta zero and fixed eta match KFAC on the full batch") {
    Model fm = toy_model(), km = toy_model();
    auto fcfg = config(OptimizerKind::kFop, 0.2), kcfg = config(OptimizerKind::kKfac, 0.2);
    fcfg.fop.beta_mode = BetaMode::kZero;
    fcfg.fop.eta_mode = EtaMode::kFixed;
    auto fs = OptimizerState::create(fm, fcfg), ks = OptimizerState::create(km, kcfg);
    // Even halves make g_avg equal the full-batch gradient.
    fop_step(fm, batch.x, batch.y, fcfg, fs);
    kfac_step(km, loss_and_backward(km, batch.x, batch.y), kcfg, ks);
    for (std::size_t l = 0; l < fm.num_layers(); ++l)
      CHECK(max_abs_diff(fm.layer(l).weights, km.layer(l).weights) <= 1e-14 * std::max(1.0, max_abs(km.layer(l).weights)));
  }
  SUBCASE("one step on a 1-input linear model against a hand evaluation") {
    Model m({{Matrix::from_rows({{0.3, -0.1}, {-0.2, 0.4}}), Activation::kIdentity}});
    const Matrix x1 = Matrix::from_rows({{1.0}, {-0.5}});
    const Matrix x2 = Matrix::from_rows({{2.0}, {0.25}});
    const std::vector<int> y1 = {0, 1}, y2 = {1, 1};
    auto cfg = config(OptimizerKind::kFop, 0.5);
    cfg.damping = 1e-2;
    auto state = OptimizerState::create(m, cfg);
    const Model before = m;
    const auto report = fop_step(m, SubBatch{x1, y1, {}}, SubBatch{x2, y2, {}}, cfg, state);

    oracle::Dense a(2, 2), g(2, 2);
    std::vector<double> grads[2] = {std::vector<double>(4, 0.0), std::vector<double>(4, 0.0)};
    const Matrix* xs[2] = {&x1, &x2};
    const std::vector<int>* ys[2] = {&y1, &y2};
    const auto& w = before.layer(0).weights;
    for (int k = 0; k < 2; ++k) {
      for (std::size_t r = 0; r < 2; ++r) {
        const double in[2] = {(*xs[k])(r, 0), 1.0};
        const double z0 = w(0, 0) * in[0] + w(0, 1), z1 = w(1, 0) * in[0] + w(1, 1);
        const double p0 = 1.0 / (1.0 + std::exp(z1 - z0));
        const double delta[2] = {p0 - ((*ys[k])[r] == 0), (1 - p0) - ((*ys[k])[r] == 1)};
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j) {
            a(i, j) += in[i] * in[j] / 4.0L;
            g(i, j) += delta[i] * delta[j] / 4.0L;
            grads[k][j * 2 + i] += delta[i] * in[j] / 2.0;
          }
      }
    }
    std::vector<double> avg(4), diff(4);
    for (int i = 0; i < 4; ++i) {
      avg[i] = 0.5 * (grads[0][i] + grads[1][i]);
      diff[i] = grads[0][i] - grads[1][i];
    }
    const auto f = oracle::kron(a, g);
    const double fav = oracle::quad(f, avg, avg);
    const double eps = 1e-12 * (1 + fav);
    const double s = oracle::quad(f, diff, avg) / (fav + eps);
    std::vector<double> perp(4);
    for (int i = 0; i < 4; ++i) perp[i] = diff[i] - s * avg[i];
    const double sq = std::sqrt(1e-2);
    const auto minv = oracle::inverse(oracle::kron(oracle::shift(a, sq), oracle::shift(g, sq)));
    const double beta = oracle::quad(minv, avg, perp) / oracle::quad(minv, perp, perp);
    std::vector<double> comb(4);
    for (int i = 0; i < 4; ++i) comb[i] = avg[i] + beta * perp[i];
    const double eta = std::clamp(oracle::quad(minv, avg, comb) / oracle::quad(minv, comb, comb), 0.0, 2.0);
    const auto d = oracle::unvec(oracle::apply(minv, comb), 2, 2) * (0.5 * eta);

    CHECK(report.plans[0].s_proj == Approx(s).epsilon(1e-10));
    CHECK(report.plans[0].beta == Approx(beta).epsilon(1e-9));
    CHECK(report.plans[0].eta_star == Approx(eta).epsilon(1e-9));
    CHECK(max_abs_diff(m.layer(0).weights, before.layer(0).weights - d) <= 1e-9 * max_abs(d));
  }
  SUBCASE("batch too small") {
    Model m = toy_model();
    auto cfg = config(OptimizerKind::kFop, 0.1);
    auto state = OptimizerState::create(m, cfg);
    const std::vector<int> one = {0};
    try {
      fop_step(m, Matrix(1, 3), one, cfg, state);
      FAIL("expected BatchTooSmall");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kBatchTooSmall);
    }
  }
  SUBCASE("parameters stay finite over many steps") {
    Model m = toy_model();
    auto cfg = config(OptimizerKind::kFop, 1.0);
    auto state = OptimizerState::create(m, cfg);
    for (int step = 0; step < 30; ++step) {
      const auto b = toy_batch(8, 3, 4, 500 + static_cast<std::uint64_t>(step));
      fop_step(m, b.x, b.y, cfg, state);
    }
    for (const auto& l : m.layers()) CHECK(all_finite(l.weights));
  }
}

TEST_CASE("determinism") {
  for (auto kind : {OptimizerKind::kSgd, OptimizerKind::kAdamw, OptimizerKind::kKfac, OptimizerKind::kFop}) {
    CHECK(run(kind, 0.05, 8) == run(kind, 0.05, 8));
  }
}

TEST_CASE("linear scaling") {
  // With a mean-reduced loss, duplicating every sample keeps the gradient, so
  // doubling eta0 with the batch doubles the first step: the per-sample rate
  // eta0 / B is what the scaling rule holds fixed.
  Rng rng(6);
  const Model m0({{random_matrix(3, 4, rng), Activation::kIdentity}});
  const auto small = toy_batch(6, 3, 3, 9);
  Toy big{Matrix(12, 3), {}};
  for (std::size_t r = 0; r < 12; ++r) {
    for (std::size_t c = 0; c < 3; ++c) big.x(r, c) = small.x(r % 6, c);
    big.y.push_back(small.y[r % 6]);
  }
  Model ms = m0, mb = m0;
  auto cs = config(OptimizerKind::kSgd, 0.1), cb = config(OptimizerKind::kSgd, 0.2);
  auto ss = OptimizerState::create(ms, cs), sb = OptimizerState::create(mb, cb);
  sgd_step(ms, loss_and_backward(ms, small.x, small.y), cs, ss);
  sgd_step(mb, loss_and_backward(mb, big.x, big.y), cb, sb);
  const Matrix ds = m0.layer(0).weights - ms.layer(0).weights;
  const Matrix db = m0.layer(0).weights - mb.layer(0).weights;
  CHECK(max_abs_diff(db * (1.0 / 12.0), ds * (1.0 / 6.0)) <= 1e-15);
}

TEST_CASE("cosine schedule") {
  SchedulerSpec spec;
  spec.kind = SchedulerKind::kCosine;
  spec.max_epoch = 200;
  CHECK(cosine_lr(0, 0.1, spec) == Approx(0.1).epsilon(1e-15));
  const double end = 0.001 + 0.5 * (0.1 - 0.001) * (1 + std::cos(0.94 * std::numbers::pi));
  CHECK(cosine_lr(200, 0.1, spec) == Approx(end).epsilon(1e-14));
  for (std::size_t t = 0; t <= 200; t += 20) CHECK(cosine_lr(t, 0.001, spec) == Approx(0.001).epsilon(1e-15));
  for (std::size_t t = 1; t <= 200; ++t) CHECK(cosine_lr(t, 0.1, spec) <= cosine_lr(t - 1, 0.1, spec));
  LrScheduler sched(spec, 0.1);
  CHECK(sched.current() == cosine_lr(0, 0.1, spec));
  CHECK(sched.end_epoch(0, 1.0) == cosine_lr(1, 0.1, spec));
}

TEST_CASE("plateau schedule") {
  SchedulerSpec spec;
  spec.kind = SchedulerKind::kPlateau;
  const std::vector<double> improving = {1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4};
  CHECK(plateau_lr(improving, spec, 0.1) == 0.1);
  const std::vector<double> flat = {1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  CHECK(plateau_lr(flat, spec, 0.1) == Approx(0.01).epsilon(1e-15));
  const std::vector<double> five = {1.0, 1.0, 1.0, 1.0, 1.0};
  CHECK(plateau_lr(five, spec, 0.1) == 0.1);
  // An improvement of exactly the threshold does not reset the counter.
  const std::vector<double> boundary = {1.0, 1.0 - 1e-4};
  CHECK(plateau_lr(boundary, spec, 0.1) == 0.1);
  PlateauTracker tracker;
  tracker.observe(1.0, spec);
  tracker.observe(1.0 - 1e-4, spec);
  CHECK(tracker.bad_epochs() == 1);
  CHECK(tracker.best() == 1.0);
  tracker.observe(0.99, spec);
  CHECK(tracker.bad_epochs() == 0);

  LrScheduler sched(spec, 0.1);
  double lr = 0.1;
  for (std::size_t e = 0; e < 6; ++e) lr = sched.end_epoch(e, 2.0);
  CHECK(lr == Approx(0.01).epsilon(1e-15));
  spec.plateau_factor = 1.5;
  CHECK_THROWS_AS(spec.validate(), Error);
}
