#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace coldstart {

using Vector = std::vector<double>;
using Rng = std::mt19937_64;

// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  Matrix transposed() const;
  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

Vector matvec(const Matrix& a, std::span<const double> x);
// aᵀ·x without materializing the transpose.
Vector matvec_transposed(const Matrix& a, std::span<const double> x);
double dot(std::span<const double> a, std::span<const double> b);
double frobenius_norm(const Matrix& a);

// Lower-triangular L with L·Lᵀ = a. Throws NumericsError when a pivot is <= 0.
Matrix cholesky(const Matrix& a);
// Solves L·x = b and Lᵀ·x = b for lower-triangular L.
Vector forward_substitute(const Matrix& lower, std::span<const double> b);
Vector back_substitute_transposed(const Matrix& lower, std::span<const double> b);
// Inverse of an SPD matrix via its Cholesky factor.
Matrix spd_inverse(const Matrix& a);
Vector spd_solve(const Matrix& a, std::span<const double> b);

double uniform01(Rng& rng);
double standard_normal(Rng& rng);
// Uniform integer in [0, n).
std::size_t uniform_index(Rng& rng, std::size_t n);

Vector sample_mvn(std::span<const double> mean, const Matrix& covariance, Rng& rng);
// Draw from N(mean, precision⁻¹) given the Cholesky factor of the precision.
Vector sample_mvn_precision(std::span<const double> mean, const Matrix& precision_cholesky, Rng& rng);
// Bartlett decomposition; E[W] = dof · scale.
Matrix sample_wishart(const Matrix& scale, double dof, Rng& rng);

}  // namespace coldstart
