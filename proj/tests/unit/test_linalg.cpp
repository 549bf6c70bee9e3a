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
#include <vector>

#include "doctest.h"
#include "fopkit/error.hpp"
#include "fopkit/linalg.hpp"
#include "fopkit/rng.hpp"
#include "fopkit/verify.hpp"
#include "oracle.hpp"

using namespace fopkit;

namespace {

double rel_residual(const Matrix& a, const Matrix& x, const Matrix& b) {
  return frobenius_norm(matmul(a, x) - b) / frobenius_norm(b);
}

Matrix random_symmetric(std::size_t n, Rng& rng) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) m(i, j) = m(j, i) = rng.normal();
  }
  return m;
}

}  // namespace

TEST_CASE("matrix basics") {
  const Matrix a = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
  CHECK(a.rows() == 2);
  CHECK(a.cols() == 3);
  CHECK(a(1, 2) == 6);
  const Matrix t = transpose(a);
  CHECK(t(2, 1) == 6);
  const Matrix p = matmul(a, t);
  CHECK(p == Matrix::from_rows({{14, 32}, {32, 77}}));
  CHECK(matmul_tn(a, a) == matmul(t, a));
  CHECK(frobenius_inner(a, a) == 91);
  CHECK(max_abs(a * -2.0) == 12);
  CHECK_THROWS_AS(matmul(a, a), Error);
  CHECK(is_symmetric(p));
  CHECK_FALSE(is_symmetric(Matrix::from_rows({{1, 2}, {2.1, 1}})));
}

TEST_CASE("spd_factorize examples") {
  SUBCASE("identity") {
    const auto f = spd_factorize(Matrix::identity(3), 1e-8);
    CHECK(f.lower == Matrix::identity(3));
    CHECK(f.jitter == 0.0);
  }
  SUBCASE("diagonal") {
    const std::vector<double> d = {1.0, 4.0};
    const auto f = spd_factorize(Matrix::diagonal(d), 1e-8);
    CHECK(f.lower == Matrix::from_rows({{1, 0}, {0, 2}}));
    CHECK(f.jitter == 0.0);
    CHECK(spd_solve(f, Matrix::identity(2)) == Matrix::from_rows({{1, 0}, {0, 0.25}}));
  }
  SUBCASE("rank deficient escalates jitter") {
    const Matrix a = Matrix::from_rows({{1, 1}, {1, 1}});
    const auto f = spd_factorize(a, 1e-8);
    CHECK(f.jitter > 0.0);
    const Matrix shifted = add_diagonal(a, f.jitter);
    CHECK(frobenius_norm(reconstruct(f) - shifted) / frobenius_norm(a) <= 1e-10);
    const Matrix b = Matrix::from_rows({{1.0}, {-2.0}});
    CHECK(rel_residual(shifted, spd_solve(f, b), b) <= 1e-6);
  }
  SUBCASE("rejects non-symmetric and non-finite") {
    CHECK_THROWS_WITH_AS(spd_factorize(Matrix::from_rows({{1, 2}, {0, 1}}), 1e-8), doctest::Contains("symmetric"),
                         Error);
    try {
      spd_factorize(Matrix::from_rows({{-1, 0}, {0, -1}}), 1e-8);
      FAIL("expected failure");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kFactorizationFailed);
    }
  }
}

TEST_CASE("spd_solve residuals") {
  Rng rng(7);
  for (std::size_t n : {8, 64, 512}) {
    const Matrix a = random_spd(n, rng);
    const Matrix b = random_matrix(n, 3, rng);
    const auto f = spd_factorize(a, 1e-12);
    CHECK(frobenius_norm(reconstruct(f) - a) / frobenius_norm(a) <= 1e-10);
    CHECK(rel_residual(a, spd_solve(f, b), b) <= 1e-10);
    const Matrix bt = transpose(b);
    const Matrix xr = spd_solve_right(f, bt);
    CHECK(frobenius_norm(matmul(xr, a) - bt) / frobenius_norm(bt) <= 1e-10);
  }
  const auto id = spd_factorize(Matrix::identity(4), 0.0);
  const Matrix b = random_matrix(4, 2, rng);
  CHECK(spd_solve(id, b) == b);
  CHECK_THROWS_AS(spd_solve(id, Matrix(3, 1)), Error);
}

TEST_CASE("sym_eigendecomposition") {
  SUBCASE("diagonal") {
    const std::vector<double> d = {3.0, 1.0, 2.0};
    const auto e = sym_eigendecomposition(Matrix::diagonal(d));
    CHECK(e.values == std::vector<double>{1.0, 2.0, 3.0});
  }
  SUBCASE("identity") {
    for (double v : sym_eigendecomposition(Matrix::identity(5)).values) CHECK(v == doctest::Approx(1.0));
  }
  SUBCASE("random symmetric against Jacobi oracle") {
    Rng rng(11);
    const Matrix a = random_symmetric(6, rng);
    const auto e = sym_eigendecomposition(a);
    Matrix lam(6, 6);
    for (std::size_t i = 0; i < 6; ++i) lam(i, i) = e.values[i];
    const Matrix back = matmul(matmul(e.vectors, lam), transpose(e.vectors));
    CHECK(frobenius_norm(back - a) <= 1e-9 * frobenius_norm(a));
    CHECK(max_abs_diff(matmul_tn(e.vectors, e.vectors), Matrix::identity(6)) <= 1e-10);
    CHECK(std::is_sorted(e.values.begin(), e.values.end()));
    const auto ref = oracle::eigenvalues(oracle::from(a));
    for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(e.values[i] - ref[i]) <= 1e-10 * (1 + std::abs(ref[i])));
    // Rayleigh quotients stay inside the spectrum.
    for (int k = 0; k < 100; ++k) {
      const Matrix x = random_matrix(6, 1, rng);
      const double rq = frobenius_inner(x, matmul(a, x)) / frobenius_inner(x, x);
      CHECK(rq >= e.values.front() - 1e-12);
      CHECK(rq <= e.values.back() + 1e-12);
    }
  }
}

TEST_CASE("linalg is deterministic") {
  Rng r1(3), r2(3);
  const Matrix a1 = random_spd(16, r1), a2 = random_spd(16, r2);
  CHECK(a1 == a2);
  const Matrix b = Matrix::identity(16);
  CHECK(spd_solve(spd_factorize(a1, 0), b) == spd_solve(spd_factorize(a2, 0), b));
  CHECK(sym_eigendecomposition(a1).values == sym_eigendecomposition(a2).values);
}
