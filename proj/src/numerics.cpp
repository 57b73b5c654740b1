#include "coldstart/numerics.hpp"

#include <cmath>
#include <string>

#include "coldstart/error.hpp"

namespace coldstart {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw NumericsError(std::string(what) + ": shape mismatch");
  }
}

void require_square(const Matrix& a, const char* what) {
  if (a.rows() != a.cols()) throw NumericsError(std::string(what) + ": matrix is not square");
}

}  // namespace

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

bool Matrix::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw NumericsError("matrix product: inner dimension mismatch");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      auto orow = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "matrix sum");
  Matrix out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "matrix difference");
  Matrix out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return out;
}

Matrix operator*(double s, const Matrix& a) {
  Matrix out = a;
  for (double& v : out.values()) v *= s;
  return out;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) throw NumericsError("matvec: dimension mismatch");
  Vector y(a.rows(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) y[r] = dot(a.row(r), x);
  return y;
}

Vector matvec_transposed(const Matrix& a, std::span<const double> x) {
  if (a.rows() != x.size()) throw NumericsError("matvec_transposed: dimension mismatch");
  Vector y(a.cols(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    auto row = a.row(r);
    for (std::size_t c = 0; c < a.cols(); ++c) y[c] += row[c] * xr;
  }
  return y;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw NumericsError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

Matrix cholesky(const Matrix& a) {
  require_square(a, "cholesky");
  const std::size_t n = a.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 0.0)) {
      throw NumericsError("cholesky: matrix is not positive definite (pivot " + std::to_string(j) +
                          " = " + std::to_string(diag) + ")");
    }
    const double ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

Vector forward_substitute(const Matrix& lower, std::span<const double> b) {
  const std::size_t n = lower.rows();
  if (b.size() != n) throw NumericsError("forward_substitute: dimension mismatch");
  Vector x(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= lower(i, k) * x[k];
    x[i] = s / lower(i, i);
  }
  return x;
}

Vector back_substitute_transposed(const Matrix& lower, std::span<const double> b) {
  const std::size_t n = lower.rows();
  if (b.size() != n) throw NumericsError("back_substitute_transposed: dimension mismatch");
  Vector x(n);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = b[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= lower(k, ii) * x[k];
    x[ii] = s / lower(ii, ii);
  }
  return x;
}

Vector spd_solve(const Matrix& a, std::span<const double> b) {
  const Matrix l = cholesky(a);
  return back_substitute_transposed(l, forward_substitute(l, b));
}

Matrix spd_inverse(const Matrix& a) {
  const Matrix l = cholesky(a);
  const std::size_t n = a.rows();
  Matrix inv(n, n);
  Vector e(n, 0.0);
  for (std::size_t c = 0; c < n; ++c) {
    e.assign(n, 0.0);
    e[c] = 1.0;
    const Vector col = back_substitute_transposed(l, forward_substitute(l, e));
    for (std::size_t r = 0; r < n; ++r) inv(r, c) = col[r];
  }
  // Symmetrize away rounding asymmetry.
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = r + 1; c < n; ++c) {
      const double m = 0.5 * (inv(r, c) + inv(c, r));
      inv(r, c) = m;
      inv(c, r) = m;
    }
  return inv;
}

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double standard_normal(Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

std::size_t uniform_index(Rng& rng, std::size_t n) {
  if (n == 0) throw NumericsError("uniform_index: empty range");
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(rng);
}

Vector sample_mvn(std::span<const double> mean, const Matrix& covariance, Rng& rng) {
  if (covariance.rows() != mean.size()) throw NumericsError("sample_mvn: dimension mismatch");
  const Matrix l = cholesky(covariance);
  Vector z(mean.size());
  for (double& v : z) v = standard_normal(rng);
  Vector x(mean.begin(), mean.end());
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t k = 0; k <= i; ++k) x[i] += l(i, k) * z[k];
  return x;
}

Vector sample_mvn_precision(std::span<const double> mean, const Matrix& precision_cholesky, Rng& rng) {
  if (precision_cholesky.rows() != mean.size()) {
    throw NumericsError("sample_mvn_precision: dimension mismatch");
  }
  Vector z(mean.size());
  for (double& v : z) v = standard_normal(rng);
  // Lᵀ·y = z gives Cov(y) = (L·Lᵀ)⁻¹.
  Vector y = back_substitute_transposed(precision_cholesky, z);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += mean[i];
  return y;
}

Matrix sample_wishart(const Matrix& scale, double dof, Rng& rng) {
  require_square(scale, "sample_wishart");
  const std::size_t p = scale.rows();
  if (!(dof > static_cast<double>(p) - 1.0)) {
    throw NumericsError("sample_wishart: degrees of freedom must exceed dimension - 1");
  }
  const Matrix l = cholesky(scale);
  Matrix a(p, p);
  for (std::size_t i = 0; i < p; ++i) {
    std::chi_squared_distribution<double> chi2(dof - static_cast<double>(i));
    a(i, i) = std::sqrt(chi2(rng));
    for (std::size_t j = 0; j < i; ++j) a(i, j) = standard_normal(rng);
  }
  const Matrix la = l * a;
  return la * la.transposed();
}

}  // namespace coldstart
