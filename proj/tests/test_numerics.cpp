#include <doctest.h>

#include <cmath>

#include "coldstart/error.hpp"
#include "coldstart/numerics.hpp"

using namespace coldstart;

namespace {

Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(rows.size(), rows.begin()->size());
  std::size_t r = 0;
  for (const auto& row : rows) {
    std::size_t c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.values()[i] - b.values()[i]));
  return d;
}

}  // namespace

TEST_CASE("matrix products and transposes") {
  const Matrix a = from_rows({{1, 2, 3}, {4, 5, 6}});
  const Matrix b = from_rows({{1, 0}, {0, 1}, {1, 1}});
  const Matrix ab = a * b;
  CHECK(ab == from_rows({{4, 5}, {10, 11}}));
  CHECK(a.transposed() == from_rows({{1, 4}, {2, 5}, {3, 6}}));
  const Vector x{1.0, -1.0, 2.0};
  CHECK(matvec(a, x) == Vector{5.0, 11.0});
  CHECK(matvec_transposed(a, Vector{1.0, 1.0}) == Vector{5.0, 7.0, 9.0});
  CHECK(dot(x, x) == doctest::Approx(6.0));
  CHECK(frobenius_norm(Matrix::identity(4)) == doctest::Approx(2.0));
  CHECK((a - a) == Matrix(2, 3));
  CHECK((2.0 * a + a) == 3.0 * a);
}

TEST_CASE("cholesky of the identity is the identity") {
  CHECK(cholesky(Matrix::identity(5)) == Matrix::identity(5));
}

TEST_CASE("cholesky reconstructs an SPD matrix") {
  const Matrix a = from_rows({{4, 2}, {2, 3}});
  const Matrix l = cholesky(a);
  CHECK(l(0, 1) == 0.0);
  CHECK(max_abs_diff(l * l.transposed(), a) < 1e-10);

  const Matrix b = from_rows({{6, 2, 1}, {2, 5, 2}, {1, 2, 4}});
  const Matrix lb = cholesky(b);
  CHECK(max_abs_diff(lb * lb.transposed(), b) < 1e-10);
}

TEST_CASE("cholesky rejects a matrix that is not positive definite") {
  CHECK_THROWS_AS(cholesky(from_rows({{1, 2}, {2, 1}})), NumericsError);
  CHECK_THROWS_AS(cholesky(from_rows({{0, 0}, {0, 1}})), NumericsError);
}

TEST_CASE("spd solve and inverse") {
  const Matrix a = from_rows({{6, 2, 1}, {2, 5, 2}, {1, 2, 4}});
  const Vector b{1.0, 2.0, 3.0};
  const Vector x = spd_solve(a, b);
  const Vector back = matvec(a, x);
  for (std::size_t i = 0; i < 3; ++i) CHECK(back[i] == doctest::Approx(b[i]).epsilon(1e-12));
  CHECK(max_abs_diff(a * spd_inverse(a), Matrix::identity(3)) < 1e-12);
}

TEST_CASE("uniform draws stay in [0, 1) and indices in range") {
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = uniform01(rng);
    CHECK((u >= 0.0 && u < 1.0));
    CHECK(uniform_index(rng, 7) < 7u);
  }
}

TEST_CASE("mvn with vanishing covariance returns the mean") {
  Rng rng(5);
  const Vector mean{1.5, -2.0};
  const Vector draw = sample_mvn(mean, 1e-20 * Matrix::identity(2), rng);
  CHECK(draw[0] == doctest::Approx(1.5).epsilon(1e-9));
  CHECK(draw[1] == doctest::Approx(-2.0).epsilon(1e-9));
}

TEST_CASE("mvn sample moments match the target") {
  Rng rng(11);
  const Vector mean{1.0, -0.5};
  const Matrix cov = from_rows({{2.0, 0.6}, {0.6, 1.0}});
  const int n = 100000;
  Vector sum(2, 0.0);
  Matrix outer(2, 2);
  std::vector<Vector> draws;
  draws.reserve(n);
  for (int i = 0; i < n; ++i) {
    draws.push_back(sample_mvn(mean, cov, rng));
    sum[0] += draws.back()[0];
    sum[1] += draws.back()[1];
  }
  const Vector m{sum[0] / n, sum[1] / n};
  for (const Vector& d : draws)
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t c = 0; c < 2; ++c) outer(r, c) += (d[r] - m[r]) * (d[c] - m[c]) / (n - 1);
  CHECK(std::abs(m[0] - mean[0]) < 4.0 * std::sqrt(2.0) / std::sqrt(n));
  CHECK(std::abs(m[1] - mean[1]) < 4.0 * 1.0 / std::sqrt(n));
  CHECK(frobenius_norm(outer - cov) < 0.05 * frobenius_norm(cov));
}

TEST_CASE("precision-parameterised mvn has covariance equal to the inverse precision") {
  Rng rng(12);
  const Matrix precision = from_rows({{3.0, 1.0}, {1.0, 2.0}});
  const Matrix target = spd_inverse(precision);
  const Matrix l = cholesky(precision);
  const Vector mean{0.25, 0.75};
  const int n = 100000;
  Matrix cov(2, 2);
  Vector m(2, 0.0);
  std::vector<Vector> draws;
  for (int i = 0; i < n; ++i) {
    draws.push_back(sample_mvn_precision(mean, l, rng));
    m[0] += draws.back()[0] / n;
    m[1] += draws.back()[1] / n;
  }
  for (const Vector& d : draws)
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t c = 0; c < 2; ++c) cov(r, c) += (d[r] - m[r]) * (d[c] - m[c]) / (n - 1);
  CHECK(std::abs(m[0] - mean[0]) < 4.0 * std::sqrt(target(0, 0) / n));
  CHECK(std::abs(m[1] - mean[1]) < 4.0 * std::sqrt(target(1, 1) / n));
  CHECK(frobenius_norm(cov - target) < 0.05 * frobenius_norm(target));
}

TEST_CASE("wishart sample mean is dof times scale") {
  Rng rng(13);
  const Matrix scale = from_rows({{1.0, 0.3, 0.0}, {0.3, 0.5, 0.1}, {0.0, 0.1, 0.8}});
  const double dof = 5.0;
  const int n = 10000;
  Matrix mean(3, 3);
  for (int i = 0; i < n; ++i) {
    const Matrix w = sample_wishart(scale, dof, rng);
    CHECK(w == w.transposed());
    mean = mean + (1.0 / n) * w;
  }
  const Matrix expected = dof * scale;
  CHECK(frobenius_norm(mean - expected) < 0.05 * frobenius_norm(expected));
}

TEST_CASE("identical seeds give identical draws") {
  Rng a(99), b(99);
  for (int i = 0; i < 100; ++i) CHECK(standard_normal(a) == standard_normal(b));
}
