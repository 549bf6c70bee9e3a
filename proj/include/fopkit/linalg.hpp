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
#include <initializer_list>
#include <span>
#include <vector>

namespace fopkit {

/// Dense row-major matrix of doubles.
///
/// Gradients are stored as out x (in+1) matrices (bias in the last column),
/// Kronecker factors as square symmetric matrices. Entry (r, c) lives at
/// data()[r * cols() + c].
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> diag);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix column(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  bool square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double scale);

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double scale);
Matrix operator*(double scale, Matrix a);

Matrix transpose(const Matrix& a);
Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a + alpha * b
Matrix axpy(const Matrix& a, double alpha, const Matrix& b);
Matrix add_diagonal(Matrix a, double shift);

// sum_ij a_ij b_ij
double frobenius_inner(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& a);
double max_abs(const Matrix& a);
// Maximum absolute row sum.
double inf_norm(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
bool all_finite(const Matrix& a);
bool is_symmetric(const Matrix& a, double rel_tol = 1e-12);

/// Cholesky factor of A + jitter * I.
struct SpdFactorization {
  std::size_t dim = 0;
  Matrix lower;
  double jitter = 0.0;
};

/// Factorizes a symmetric matrix, escalating diagonal jitter through
/// {0, base_jitter * 10^k, k = 0..6} until the factorization succeeds.
/// Throws kNotSymmetric or kFactorizationFailed.
SpdFactorization spd_factorize(const Matrix& a, double base_jitter);

/// Solves (A + jitter I) X = B.
Matrix spd_solve(const SpdFactorization& fact, const Matrix& b);

/// Solves X (A + jitter I) = B, i.e. the right-multiplication by the inverse.
Matrix spd_solve_right(const SpdFactorization& fact, const Matrix& b);

/// L * L^T
Matrix reconstruct(const SpdFactorization& fact);

struct SymmetricEigen {
  std::vector<double> values;  // ascending
  Matrix vectors;              // column k is the eigenvector of values[k]
};

SymmetricEigen sym_eigendecomposition(const Matrix& a);

}  // namespace fopkit
