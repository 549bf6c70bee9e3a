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
#include <numeric>
#include <set>
#include <vector>

#include "doctest.h"
#include "fopkit/error.hpp"
#include "fopkit/fisher.hpp"
#include "fopkit/nn.hpp"
#include "fopkit/verify.hpp"
#include "oracle.hpp"

using namespace fopkit;
using doctest::Approx;

namespace {

// Straight-line forward pass written independently of the library.
std::vector<double> naive_logits(const Model& m, const std::vector<double>& x) {
  std::vector<double> h = x;
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    const auto& w = m.layer(l).weights;
    std::vector<double> z(w.rows());
    for (std::size_t o = 0; o < w.rows(); ++o) {
      long double s = w(o, w.cols() - 1);
      for (std::size_t i = 0; i + 1 < w.cols(); ++i) s += static_cast<long double>(w(o, i)) * h[i];
      z[o] = static_cast<double>(s);
      if (m.layer(l).activation == Activation::kRelu) z[o] = std::max(0.0, z[o]);
    }
    h = z;
  }
  return h;
}

double naive_loss(const Model& m, const Matrix& x, const std::vector<int>& y) {
  long double total = 0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto z = naive_logits(m, std::vector<double>(x.row(r).begin(), x.row(r).end()));
    const double zmax = *std::max_element(z.begin(), z.end());
    long double sum = 0;
    for (double v : z) sum += std::exp(static_cast<long double>(v - zmax));
    total += std::log(sum) + zmax - z[static_cast<std::size_t>(y[r])];
  }
  return static_cast<double>(total / x.rows());
}

std::vector<int> random_labels(std::size_t n, int classes, Rng& rng) {
  std::vector<int> y(n);
  for (auto& v : y) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
  return y;
}

}  // namespace

TEST_CASE("model construction") {
  const std::vector<std::size_t> widths = {4, 8, 3};
  const Model m = Model::mlp(widths, Activation::kRelu, 7);
  CHECK(m.num_layers() == 2);
  CHECK(m.input_dim() == 4);
  CHECK(m.output_dim() == 3);
  CHECK(m.parameter_count() == 8 * 5 + 3 * 9);
  CHECK(m.layer(0).activation == Activation::kRelu);
  CHECK(m.layer(1).activation == Activation::kIdentity);
  const double bound = std::sqrt(6.0 / 4.0);
  for (std::size_t o = 0; o < 8; ++o) {
    CHECK(m.layer(0).weights(o, 4) == 0.0);
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(m.layer(0).weights(o, i)) <= bound);
  }
  CHECK(Model::mlp(widths, Activation::kRelu, 7) == m);
  CHECK_FALSE(Model::mlp(widths, Activation::kRelu, 8) == m);
  Model copy = m;
  auto theta = m.parameters();
  for (auto& v : theta) v += 1.0;
  copy.set_parameters(theta);
  CHECK(copy.parameters() == theta);
  CHECK(parse_activation("relu") == Activation::kRelu);
  CHECK_THROWS_AS(parse_activation("tanh"), Error);
  // Non-chaining layers.
  std::vector<DenseLayer> bad = {{Matrix(3, 3), Activation::kRelu}, {Matrix(2, 5), Activation::kIdentity}};
  CHECK_THROWS_AS(Model{bad}, Error);
}

TEST_CASE("forward") {
  SUBCASE("identity single layer") {
    Matrix w(3, 4);
    for (std::size_t i = 0; i < 3; ++i) w(i, i) = 1.0;
    const Model m({{w, Activation::kIdentity}});
    const Matrix x = Matrix::from_rows({{1, 2, 3}, {-4, 5, -6}});
    CHECK(forward(m, x) == x);
  }
  SUBCASE("zero weights") {
    const Model m({{Matrix(2, 4), Activation::kRelu}, {Matrix(3, 3), Activation::kIdentity}});
    CHECK(forward(m, Matrix(5, 3, 2.0)) == Matrix(5, 3));
  }
  SUBCASE("random net vs straight-line oracle") {
    Rng rng(3);
    const std::vector<std::size_t> widths = {5, 7, 6, 3};
    const Model m = Model::mlp(widths, Activation::kRelu, 11);
    Model biased = m;
    for (std::size_t l = 0; l < biased.num_layers(); ++l) {
      auto& w = biased.layer(l).weights;
      for (std::size_t o = 0; o < w.rows(); ++o) w(o, w.cols() - 1) = rng.normal() * 0.1;
    }
    const Matrix x = random_matrix(9, 5, rng);
    const Matrix z = forward(biased, x);
    for (std::size_t r = 0; r < 9; ++r) {
      const auto ref = naive_logits(biased, std::vector<double>(x.row(r).begin(), x.row(r).end()));
      for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(z(r, c) - ref[c]) <= 1e-12 * (1 + std::abs(ref[c])));
    }
  }
  SUBCASE("dimension mismatch") {
    const std::vector<std::size_t> widths = {3, 2};
    CHECK_THROWS_AS(forward(Model::mlp(widths, Activation::kRelu, 1), Matrix(2, 4)), Error);
  }
}

TEST_CASE("loss and backward") {
  SUBCASE("uniform logits") {
    const Model m({{Matrix(4, 3), Activation::kIdentity}});
    const std::vector<int> y = {0, 3};
    const auto tape = loss_and_backward(m, Matrix(2, 2, 1.0), y);
    CHECK(tape.loss == Approx(std::log(4.0)).epsilon(1e-15));
    CHECK(tape.batch_size == 2);
  }
  SUBCASE("single sample closed form") {
    const Model m({{Matrix::from_rows({{0.5, -1.0, 0.2}, {0.1, 0.3, -0.4}, {-0.7, 0.2, 0.0}}), Activation::kIdentity}});
    const Matrix x = Matrix::from_rows({{2.0, -1.0}});
    const std::vector<int> y = {1};
    const auto tape = loss_and_backward(m, x, y);
    const double z[3] = {0.5 * 2 + 1.0 + 0.2, 0.1 * 2 - 0.3 - 0.4, -0.7 * 2 - 0.2};
    const double zs = std::exp(z[0]) + std::exp(z[1]) + std::exp(z[2]);
    const double xs[3] = {2.0, -1.0, 1.0};
    for (std::size_t o = 0; o < 3; ++o) {
      const double delta = std::exp(z[o]) / zs - (o == 1 ? 1.0 : 0.0);
      for (std::size_t i = 0; i < 3; ++i) CHECK(tape.grads[0](o, i) == Approx(delta * xs[i]).epsilon(1e-13));
    }
    CHECK(tape.loss == Approx(std::log(zs) - z[1]).epsilon(1e-14));
  }
  SUBCASE("finite differences on a random 3-layer net") {
    Rng rng(5);
    const std::vector<std::size_t> widths = {4, 9, 7, 3};
    Model m = Model::mlp(widths, Activation::kRelu, 21);
    const Matrix x = random_matrix(12, 4, rng);
    const auto y = random_labels(12, 3, rng);
    const auto tape = loss_and_backward(m, x, y);
    CHECK(tape.loss == Approx(naive_loss(m, x, y)).epsilon(1e-12));
    const double h = 1e-4;
    int checked = 0;
    for (int trial = 0; trial < 200 && checked < 20; ++trial) {
      const std::size_t l = rng.below(m.num_layers());
      auto& w = m.layer(l).weights;
      const std::size_t r = rng.below(w.rows()), c = rng.below(w.cols());
      const double saved = w(r, c);
      w(r, c) = saved + h;
      const double up = naive_loss(m, x, y);
      w(r, c) = saved - h;
      const double down = naive_loss(m, x, y);
      w(r, c) = saved;
      // Skip coordinates whose stencil crosses a ReLU kink.
      bool kink = false;
      for (std::size_t k = 0; k + 1 < m.num_layers() && !kink; ++k) {
        Model up_m = m, down_m = m;
        up_m.layer(l).weights(r, c) = saved + h;
        down_m.layer(l).weights(r, c) = saved - h;
        const std::vector<DenseLayer> pre_up(up_m.layers().begin(), up_m.layers().begin() + static_cast<long>(k) + 1);
        const std::vector<DenseLayer> pre_down(down_m.layers().begin(), down_m.layers().begin() + static_cast<long>(k) + 1);
        std::vector<DenseLayer> lin_up = pre_up, lin_down = pre_down;
        lin_up.back().activation = Activation::kIdentity;
        lin_down.back().activation = Activation::kIdentity;
        const Matrix a = forward(Model(lin_up), x), b = forward(Model(lin_down), x);
        for (std::size_t i = 0; i < a.size() && !kink; ++i) kink = (a.data()[i] > 0) != (b.data()[i] > 0);
      }
      if (kink) continue;
      ++checked;
      const double fd = (up - down) / (2 * h);
      const double bp = tape.grads[l](r, c);
      const double rel = std::abs(fd - bp) / std::max({std::abs(fd), std::abs(bp), 1e-6});
      CHECK(rel <= 1e-5);
    }
    CHECK(checked == 20);
  }
  SUBCASE("tape consistency") {
    Rng rng(6);
    const std::vector<std::size_t> widths = {3, 5, 4};
    const Model m = Model::mlp(widths, Activation::kRelu, 2);
    const Matrix x = random_matrix(8, 3, rng);
    const auto y = random_labels(8, 4, rng);
    const auto tape = loss_and_backward(m, x, y);
    for (std::size_t l = 0; l < 2; ++l) {
      CHECK(tape.inputs[l].rows() == 8);
      for (std::size_t r = 0; r < 8; ++r) CHECK(tape.inputs[l](r, tape.inputs[l].cols() - 1) == 1.0);
      const Matrix rebuilt = matmul_tn(tape.preact_grads[l], tape.inputs[l]) * (1.0 / 8.0);
      CHECK(max_abs_diff(rebuilt, tape.grads[l]) <= 1e-12 * std::max(1.0, max_abs(tape.grads[l])));
    }
  }
  SUBCASE("factors from a single-sample tape give the exact Fisher of a linear model") {
    Rng rng(7);
    const Model m({{random_matrix(3, 4, rng), Activation::kIdentity}});
    const Matrix x = random_matrix(1, 3, rng);
    const std::vector<int> y = {2};
    const auto tape = loss_and_backward(m, x, y);
    KroneckerFisherBlock b(0, 4, 3);
    // preact_grads are per-sample dL_i/dz; a single-sample batch has n = 1.
    b.accumulate(tape.inputs[0], tape.preact_grads[0]);
    const auto g = oracle::vec(tape.grads[0]);
    const auto kron = oracle::kron(oracle::from(b.a()), oracle::from(b.g()));
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::size_t j = 0; j < g.size(); ++j)
        CHECK(static_cast<double>(kron(i, j)) == Approx(g[i] * g[j]).epsilon(1e-12).scale(1e-12));
  }
  SUBCASE("invalid labels") {
    const Model m({{Matrix(3, 3), Activation::kIdentity}});
    const std::vector<int> y = {3};
    try {
      loss_and_backward(m, Matrix(1, 2), y);
      FAIL("expected InvalidLabel");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kInvalidLabel);
    }
    const std::vector<int> short_y = {0};
    CHECK_THROWS_AS(loss_and_backward(m, Matrix(2, 2), short_y), Error);
  }
}

TEST_CASE("split batch") {
  Rng rng(8);
  const Matrix x = random_matrix(4, 2, rng);
  const std::vector<int> y = {0, 1, 2, 3};
  const auto [a, b] = split_batch(x, y, 0);
  CHECK(a.labels.size() == 2);
  CHECK(b.labels.size() == 2);
  const auto [a2, b2] = split_batch(x, y, 0);
  CHECK(a.indices == a2.indices);
  CHECK(b.indices == b2.indices);
  std::set<std::size_t> all(a.indices.begin(), a.indices.end());
  all.insert(b.indices.begin(), b.indices.end());
  CHECK(all.size() == 4);
  for (std::size_t k = 0; k < a.indices.size(); ++k) {
    CHECK(a.labels[k] == y[a.indices[k]]);
    CHECK(a.features(k, 1) == x(a.indices[k], 1));
  }
  const Matrix x5 = random_matrix(5, 2, rng);
  const std::vector<int> y5 = {0, 0, 1, 1, 0};
  const auto [c, d] = split_batch(x5, y5, 3);
  CHECK(c.labels.size() == 3);
  CHECK(d.labels.size() == 2);
  bool differs = false;
  for (std::uint64_t s = 1; s < 20 && !differs; ++s) differs = split_batch(x, y, s).first.indices != a.indices;
  CHECK(differs);
  const std::vector<int> one = {0};
  try {
    split_batch(Matrix(1, 2), one, 0);
    FAIL("expected BatchTooSmall");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kBatchTooSmall);
  }
}

TEST_CASE("apply update") {
  Rng rng(9);
  const std::vector<std::size_t> widths = {3, 4, 2};
  const Model m = Model::mlp(widths, Activation::kRelu, 4);
  Model n = m;
  std::vector<Matrix> zero = {Matrix(4, 4), Matrix(2, 5)};
  apply_update(n, zero);
  CHECK(n == m);
  std::vector<Matrix> d = {random_matrix(4, 4, rng), random_matrix(2, 5, rng)};
  apply_update(n, d);
  for (std::size_t l = 0; l < 2; ++l) CHECK(n.layer(l).weights == m.layer(l).weights - d[l]);
  std::vector<Matrix> neg = {d[0] * -1.0, d[1] * -1.0};
  apply_update(n, neg);
  for (std::size_t l = 0; l < 2; ++l) CHECK(max_abs_diff(n.layer(l).weights, m.layer(l).weights) <= 1e-15 * 4);
  std::vector<Matrix> wrong = {Matrix(4, 4)};
  CHECK_THROWS_AS(apply_update(n, wrong), Error);
}
