#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "adarank/error.hpp"
#include "adarank/matrix.hpp"
#include "adarank/rng.hpp"
#include "adarank/svd.hpp"
#include "oracles.hpp"

using adarank::DimensionError;
using adarank::Matrix;
using adarank::NumericalError;
using adarank::Rng;
using adarank::ThinSvd;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("matrix construction enforces shape and finiteness") {
  CHECK_THROWS_AS(Matrix(2, 2, {1.0, 2.0, 3.0}), DimensionError);
  CHECK_THROWS_AS(Matrix(1, 2, {1.0, std::nan("")}), NumericalError);
  CHECK_THROWS_AS(Matrix(1, 2, {1.0, HUGE_VAL}), NumericalError);
  const Matrix m(2, 3);
  CHECK_EQ(m.rows(), 2);
  CHECK_EQ(m.cols(), 3);
  for (std::size_t i = 0; i < m.size(); ++i) CHECK_EQ(m.data()[i], 0.0);
}

TEST_CASE("matmul identity and column selection") {
  const Matrix eye = Matrix::identity(2);
  CHECK(bitwise_equal(matmul(eye, eye), eye));

  const Matrix a(2, 2, {1.0, 2.0, 3.0, 4.0});
  const Matrix b(2, 1, {0.0, 1.0});
  const Matrix c = matmul(a, b);
  CHECK_EQ(c(0, 0), 2.0);
  CHECK_EQ(c(1, 0), 4.0);
}

TEST_CASE("matmul matches the triple-loop oracle exactly") {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = random_matrix(5, 3, rng);
    const Matrix b = random_matrix(3, 4, rng);
    CHECK(bitwise_equal(matmul(a, b), oracles::matmul_triple_loop(a, b)));
  }
  // larger shapes, and inputs containing exact zeros
  Matrix a = random_matrix(17, 9, rng);
  a(3, 4) = 0.0;
  a(0, 0) = -0.0;
  const Matrix b = random_matrix(9, 13, rng);
  CHECK(bitwise_equal(matmul(a, b), oracles::matmul_triple_loop(a, b)));
}

TEST_CASE("matmul rejects mismatched shapes and reports both") {
  const Matrix a(2, 3);
  const Matrix b(4, 2);
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("4x2") != std::string::npos);
  }
}

TEST_CASE("elementwise operations and norms") {
  const Matrix a(2, 2, {1.0, 2.0, 3.0, 4.0});
  const Matrix b(2, 2, {0.5, 0.5, 0.5, 0.5});
  Matrix c = a;
  c += b;
  CHECK_EQ(c(1, 1), 4.5);
  c -= b;
  CHECK(bitwise_equal(c, a));
  c *= 2.0;
  CHECK_EQ(c(0, 1), 4.0);
  CHECK_EQ(dot(a, a), 1.0 + 4.0 + 9.0 + 16.0);
  CHECK_EQ(a.frobenius_norm(), std::sqrt(30.0));
  CHECK_EQ(a.max_abs(), 4.0);
  Matrix d(2, 3);
  CHECK_THROWS_AS(d += a, DimensionError);

  CHECK_EQ(relative_frobenius_error(a, a), 0.0);
  const Matrix zero(2, 2);
  CHECK_EQ(relative_frobenius_error(a, zero) > 0.0, true);
}

TEST_CASE("svd of identity and diagonal inputs") {
  const ThinSvd eye = svd_thin(Matrix::identity(2));
  REQUIRE_EQ(eye.s.size(), 2);
  CHECK_EQ(eye.s[0], 1.0);
  CHECK_EQ(eye.s[1], 1.0);

  const Matrix diag(2, 2, {3.0, 0.0, 0.0, 1.0});
  const ThinSvd f = svd_thin(diag);
  REQUIRE_EQ(f.s.size(), 2);
  CHECK_EQ(f.s[0], doctest::Approx(3.0).epsilon(1e-12));
  CHECK_EQ(f.s[1], doctest::Approx(1.0).epsilon(1e-12));
  // u and v are signed permutations of I; the sign convention makes every
  // nonzero entry +1 here
  for (const Matrix* m : {&f.u, &f.v}) {
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t j = 0; j < 2; ++j) {
        const double want = (i == j) ? 1.0 : 0.0;
        CHECK_EQ((*m)(i, j), doctest::Approx(want).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("svd of the zero matrix completes an orthonormal basis") {
  const ThinSvd f = svd_thin(Matrix(4, 3));
  REQUIRE_EQ(f.s.size(), 3);
  for (double s : f.s) CHECK_EQ(s, 0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK_EQ(f.u(i, j), (i == j) ? 1.0 : 0.0);
    }
  }
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK_EQ(f.v(i, j), (i == j) ? 1.0 : 0.0);
    }
  }
}

TEST_CASE("svd singular values match the Gram eigenvalue oracle") {
  Rng rng(7);
  const Matrix a = random_matrix(64, 48, rng);
  const ThinSvd f = svd_thin(a);
  const std::vector<double> want = oracles::gram_singular_values(a);
  REQUIRE_EQ(f.s.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    CHECK_LE(std::fabs(f.s[i] - want[i]), 1e-8 * (1.0 + want[0]));
  }
}

TEST_CASE("svd contract on random shapes") {
  Rng rng(11);
  const std::size_t shapes[][2] = {{8, 8}, {16, 5}, {5, 16}, {33, 64}, {65, 64}, {1, 7}, {9, 1}};
  for (const auto& shape : shapes) {
    const Matrix a = random_matrix(shape[0], shape[1], rng);
    const ThinSvd f = svd_thin(a);
    const std::size_t k = std::min(shape[0], shape[1]);
    REQUIRE_EQ(f.s.size(), k);
    REQUIRE_EQ(f.u.rows(), shape[0]);
    REQUIRE_EQ(f.u.cols(), k);
    REQUIRE_EQ(f.v.rows(), shape[1]);
    REQUIRE_EQ(f.v.cols(), k);
    for (std::size_t i = 0; i + 1 < k; ++i) CHECK_GE(f.s[i], f.s[i + 1]);
    for (double s : f.s) CHECK_GE(s, 0.0);
    CHECK_LE(oracles::max_orthonormality_defect(f.u), 1e-10);
    CHECK_LE(oracles::max_orthonormality_defect(f.v), 1e-10);
    CHECK_LE(relative_frobenius_error(reconstruct_all(f), a), 1e-8);
  }
}

TEST_CASE("svd handles rank-deficient inputs") {
  Rng rng(13);
  const Matrix left = random_matrix(20, 3, rng);
  const Matrix right = random_matrix(3, 15, rng);
  const Matrix a = matmul(left, right);  // rank <= 3
  const ThinSvd f = svd_thin(a);
  CHECK_LE(oracles::max_orthonormality_defect(f.u), 1e-10);
  CHECK_LE(oracles::max_orthonormality_defect(f.v), 1e-10);
  CHECK_LE(relative_frobenius_error(reconstruct_all(f), a), 1e-8);
  for (std::size_t i = 3; i < f.s.size(); ++i) CHECK_LE(f.s[i], 1e-10 * f.s[0]);
}

TEST_CASE("svd is deterministic and sign-fixed") {
  Rng rng(17);
  const Matrix a = random_matrix(12, 10, rng);
  const ThinSvd f1 = svd_thin(a);
  const ThinSvd f2 = svd_thin(a);
  CHECK(bitwise_equal(f1.u, f2.u));
  CHECK(bitwise_equal(f1.v, f2.v));
  CHECK(f1.s == f2.s);
  for (std::size_t r = 0; r < f1.s.size(); ++r) {
    double best = 0.0;
    for (std::size_t i = 0; i < f1.u.rows(); ++i) {
      if (std::fabs(f1.u(i, r)) > std::fabs(best)) best = f1.u(i, r);
    }
    CHECK_GE(best, 0.0);
  }
}

TEST_CASE("reconstruct_components selections") {
  const Matrix diag(2, 2, {3.0, 0.0, 0.0, 1.0});
  const ThinSvd f = svd_thin(diag);

  const Matrix top = reconstruct_components(f, {0});
  CHECK_EQ(top(0, 0), doctest::Approx(3.0).epsilon(1e-12));
  CHECK_EQ(top(1, 1), doctest::Approx(0.0).epsilon(1e-12));

  const Matrix none = reconstruct_components(f, {});
  for (std::size_t i = 0; i < none.size(); ++i) CHECK_EQ(none.data()[i], 0.0);

  CHECK_THROWS_AS(reconstruct_components(f, {2}), DimensionError);

  // duplicates collapse to a set
  CHECK(bitwise_equal(reconstruct_components(f, {0, 0}), top));

  Rng rng(19);
  const Matrix a = random_matrix(10, 6, rng);
  const ThinSvd g = svd_thin(a);
  CHECK_LE(relative_frobenius_error(reconstruct_components(g, {0, 1, 2, 3, 4, 5}), a), 1e-8);
}

TEST_CASE("scaled_outer_sum with a single scale equals the manual outer product") {
  Rng rng(23);
  const Matrix a = random_matrix(9, 7, rng);
  const ThinSvd f = svd_thin(a);
  std::vector<double> scale(f.s.size(), 0.0);
  scale[2] = f.s[2];
  const Matrix lib = scaled_outer_sum(f, scale);
  Matrix manual(9, 7);
  for (std::size_t i = 0; i < 9; ++i) {
    for (std::size_t j = 0; j < 7; ++j) manual(i, j) = f.s[2] * f.u(i, 2) * f.v(j, 2);
  }
  CHECK(bitwise_equal(lib, manual));
}

TEST_CASE("top components beat random subsets of the same size") {
  Rng rng(29);
  const Matrix a = random_matrix(24, 18, rng);
  const ThinSvd f = svd_thin(a);
  const std::size_t k = 4;
  std::vector<std::size_t> top(k);
  for (std::size_t i = 0; i < k; ++i) top[i] = i;
  const double top_err = relative_frobenius_error(reconstruct_components(f, top), a);

  std::vector<std::size_t> all(f.s.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::size_t> pool = all;
    rng.shuffle(pool);
    std::vector<std::size_t> subset(pool.begin(), pool.begin() + k);
    const double err = relative_frobenius_error(reconstruct_components(f, subset), a);
    CHECK_LE(top_err, err + 1e-12);
  }
}
