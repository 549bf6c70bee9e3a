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

#include "fopkit/linalg.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "fopkit/error.hpp"

namespace fopkit {
namespace {

std::string shape(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw Error(ErrorKind::kDimensionMismatch,
                std::string(op) + ": shapes " + shape(a) + " and " + shape(b));
  }
}

// Plain Cholesky of a + shift*I. Returns false on a pivot that is not safely
// positive relative to the largest diagonal entry.
bool try_cholesky(const Matrix& a, double shift, Matrix& lower) {
  const std::size_t n = a.rows();
  lower = Matrix(n, n);
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(a(i, i) + shift));
  const double floor = static_cast<double>(n) * std::numeric_limits<double>::epsilon() * max_diag;
  for (std::size_t j = 0; j < n; ++j) {
    double pivot = a(j, j) + shift;
    for (std::size_t k = 0; k < j; ++k) pivot -= lower(j, k) * lower(j, k);
    if (!(pivot > floor) || !std::isfinite(pivot)) return false;
    const double root = std::sqrt(pivot);
    lower(j, j) = root;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= lower(i, k) * lower(j, k);
      lower(i, j) = s / root;
    }
  }
  return true;
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw Error(ErrorKind::kDimensionMismatch, "Matrix: entry count does not match rows*cols");
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
  Matrix m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw Error(ErrorKind::kDimensionMismatch, "Matrix::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::column(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require_same_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require_same_shape(*this, other, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double scale) {
  for (double& x : data_) x *= scale;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double scale) { return a *= scale; }
Matrix operator*(double scale, Matrix a) { return a *= scale; }

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) t(c, r) = a(r, c);
  return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw Error(ErrorKind::kDimensionMismatch, "matmul: " + shape(a) + " * " + shape(b));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw Error(ErrorKind::kDimensionMismatch, "matmul_tn: " + shape(a) + "^T * " + shape(b));
  }
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto a_row = a.row(k);
    auto b_row = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a_row[i];
      if (aki == 0.0) continue;
      auto out_row = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aki * b_row[j];
    }
  }
  return out;
}

Matrix axpy(const Matrix& a, double alpha, const Matrix& b) {
  require_same_shape(a, b, "axpy");
  Matrix out = a;
  auto o = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += alpha * bd[i];
  return out;
}

Matrix add_diagonal(Matrix a, double shift) {
  if (!a.square()) throw Error(ErrorKind::kDimensionMismatch, "add_diagonal: not square");
  for (std::size_t i = 0; i < a.rows(); ++i) a(i, i) += shift;
  return a;
}

double frobenius_inner(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "frobenius_inner");
  double s = 0.0;
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) s += ad[i] * bd[i];
  return s;
}

double frobenius_norm(const Matrix& a) { return std::sqrt(frobenius_inner(a, a)); }

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double x : a.data()) m = std::max(m, std::abs(x));
  return m;
}

double inf_norm(const Matrix& a) {
  double m = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double s = 0.0;
    for (double x : a.row(r)) s += std::abs(x);
    m = std::max(m, s);
  }
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

bool all_finite(const Matrix& a) {
  return std::all_of(a.data().begin(), a.data().end(), [](double x) { return std::isfinite(x); });
}

bool is_symmetric(const Matrix& a, double rel_tol) {
  if (!a.square()) return false;
  double worst_row = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) s += std::abs(a(r, c) - a(c, r));
    worst_row = std::max(worst_row, s);
  }
  return worst_row <= rel_tol * inf_norm(a);
}

SpdFactorization spd_factorize(const Matrix& a, double base_jitter) {
  if (!a.square()) throw Error(ErrorKind::kDimensionMismatch, "spd_factorize: " + shape(a) + " is not square");
  if (!all_finite(a)) throw Error(ErrorKind::kFactorizationFailed, "spd_factorize: non-finite entries");
  if (!is_symmetric(a)) throw Error(ErrorKind::kNotSymmetric, "spd_factorize: matrix is not symmetric");

  SpdFactorization fact;
  fact.dim = a.rows();
  if (try_cholesky(a, 0.0, fact.lower)) return fact;
  if (base_jitter > 0.0) {
    double jitter = base_jitter;
    for (int k = 0; k <= 6; ++k, jitter *= 10.0) {
      if (try_cholesky(a, jitter, fact.lower)) {
        fact.jitter = jitter;
        return fact;
      }
    }
  }
  throw Error(ErrorKind::kFactorizationFailed,
              "spd_factorize: factorization failed after jitter escalation");
}

Matrix spd_solve(const SpdFactorization& fact, const Matrix& b) {
  const std::size_t n = fact.dim;
  if (b.rows() != n) {
    throw Error(ErrorKind::kDimensionMismatch, "spd_solve: rhs " + shape(b) + " for dimension " + std::to_string(n));
  }
  const Matrix& l = fact.lower;
  Matrix x = b;
  const std::size_t k = b.cols();
  // L Y = B
  for (std::size_t i = 0; i < n; ++i) {
    auto xi = x.row(i);
    for (std::size_t j = 0; j < i; ++j) {
      const double lij = l(i, j);
      if (lij == 0.0) continue;
      auto xj = x.row(j);
      for (std::size_t c = 0; c < k; ++c) xi[c] -= lij * xj[c];
    }
    const double d = l(i, i);
    for (std::size_t c = 0; c < k; ++c) xi[c] /= d;
  }
  // L^T X = Y
  for (std::size_t ii = n; ii-- > 0;) {
    auto xi = x.row(ii);
    for (std::size_t j = ii + 1; j < n; ++j) {
      const double lji = l(j, ii);
      if (lji == 0.0) continue;
      auto xj = x.row(j);
      for (std::size_t c = 0; c < k; ++c) xi[c] -= lji * xj[c];
    }
    const double d = l(ii, ii);
    for (std::size_t c = 0; c < k; ++c) xi[c] /= d;
  }
  return x;
}

Matrix spd_solve_right(const SpdFactorization& fact, const Matrix& b) {
  if (b.cols() != fact.dim) {
    throw Error(ErrorKind::kDimensionMismatch,
                "spd_solve_right: lhs " + shape(b) + " for dimension " + std::to_string(fact.dim));
  }
  return transpose(spd_solve(fact, transpose(b)));
}

Matrix reconstruct(const SpdFactorization& fact) {
  return matmul(fact.lower, transpose(fact.lower));
}

SymmetricEigen sym_eigendecomposition(const Matrix& a) {
  if (!a.square()) throw Error(ErrorKind::kDimensionMismatch, "sym_eigendecomposition: not square");
  if (!all_finite(a)) throw Error(ErrorKind::kConvergenceFailure, "sym_eigendecomposition: non-finite entries");
  if (!is_symmetric(a)) throw Error(ErrorKind::kNotSymmetric, "sym_eigendecomposition: matrix is not symmetric");
  const auto n = static_cast<Eigen::Index>(a.rows());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c)
      m(r, c) = a(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorKind::kConvergenceFailure, "sym_eigendecomposition: solver did not converge");
  }
  SymmetricEigen out;
  out.values.assign(solver.eigenvalues().data(), solver.eigenvalues().data() + n);
  out.vectors = Matrix(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c)
      out.vectors(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = solver.eigenvectors()(r, c);
  return out;
}

}  // namespace fopkit
