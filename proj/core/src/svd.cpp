#include "adarank/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "adarank/error.hpp"

namespace adarank {
namespace {

constexpr double kCouplingTol = 1e-12;
constexpr int kMaxSweeps = 30;

// One-sided Jacobi on a tall matrix (rows >= cols). Returns u (m x n),
// s (n), v (n x n) before sorting or sign normalization.
void jacobi_tall(Matrix a, Matrix& u, std::vector<double>& s, Matrix& v) {
  const std::size_t m = a.rows(), n = a.cols();
  v = Matrix::identity(n);

  double worst = 0.0;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    worst = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double app = 0.0, aqq = 0.0, apq = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double xp = a(i, p), xq = a(i, q);
          app += xp * xp;
          aqq += xq * xq;
          apq += xp * xq;
        }
        if (app == 0.0 || aqq == 0.0 || apq == 0.0) continue;
        const double coupling = std::fabs(apq) / std::sqrt(app * aqq);
        worst = std::max(worst, coupling);
        if (coupling < kCouplingTol) continue;

        const double tau = (aqq - app) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = t * c;
        for (std::size_t i = 0; i < m; ++i) {
          const double xp = a(i, p), xq = a(i, q);
          a(i, p) = c * xp - sn * xq;
          a(i, q) = sn * xp + c * xq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - sn * vq;
          v(i, q) = sn * vp + c * vq;
        }
      }
    }
    if (worst < kCouplingTol) {
      worst = 0.0;
      break;
    }
  }
  if (worst >= kCouplingTol) {
    throw NumericalError("svd: jacobi sweeps did not converge, residual coupling " +
                         std::to_string(worst));
  }

  u = Matrix(m, n);
  s.assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double norm2 = 0.0;
    for (std::size_t i = 0; i < m; ++i) norm2 += a(i, j) * a(i, j);
    const double norm = std::sqrt(norm2);
    s[j] = norm;
    if (norm > 0.0) {
      for (std::size_t i = 0; i < m; ++i) u(i, j) = a(i, j) / norm;
    }
  }
}

// Replace exactly-zero singular columns of u with an orthonormal completion
// built from identity columns, Gram-Schmidt'ed against everything kept.
void complete_zero_columns(Matrix& u, const std::vector<double>& s) {
  const std::size_t m = u.rows(), k = u.cols();
  std::size_t candidate = 0;
  for (std::size_t j = 0; j < k; ++j) {
    if (s[j] != 0.0) continue;
    while (candidate < m) {
      std::vector<double> col(m, 0.0);
      col[candidate] = 1.0;
      ++candidate;
      for (std::size_t r = 0; r < k; ++r) {
        if (r == j) continue;
        if (s[r] == 0.0 && r > j) continue;  // not yet completed
        double proj = 0.0;
        for (std::size_t i = 0; i < m; ++i) proj += col[i] * u(i, r);
        for (std::size_t i = 0; i < m; ++i) col[i] -= proj * u(i, r);
      }
      double norm = 0.0;
      for (double x : col) norm += x * x;
      norm = std::sqrt(norm);
      if (norm > 0.5) {
        for (std::size_t i = 0; i < m; ++i) u(i, j) = col[i] / norm;
        break;
      }
    }
  }
}

void apply_sign_convention(Matrix& u, Matrix& v) {
  for (std::size_t j = 0; j < u.cols(); ++j) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < u.rows(); ++i) {
      const double mag = std::fabs(u(i, j));
      if (mag > best) {
        best = mag;
        arg = i;
      }
    }
    if (u(arg, j) < 0.0) {
      for (std::size_t i = 0; i < u.rows(); ++i) u(i, j) = -u(i, j);
      for (std::size_t i = 0; i < v.rows(); ++i) v(i, j) = -v(i, j);
    }
  }
}

}  // namespace

ThinSvd svd_thin(const Matrix& a) {
  if (a.rows() == 0 || a.cols() == 0) {
    throw DimensionError("svd: empty matrix");
  }
  if (!a.all_finite()) {
    throw NumericalError("svd: non-finite input");
  }

  const bool flipped = a.rows() < a.cols();
  Matrix left, right;
  std::vector<double> s;
  jacobi_tall(flipped ? transpose(a) : a, left, s, right);
  complete_zero_columns(left, s);

  // Stable descending sort keeps the pre-sort order of equal values.
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return s[i] > s[j]; });

  const std::size_t k = s.size();
  Matrix left_sorted(left.rows(), k), right_sorted(right.rows(), k);
  std::vector<double> s_sorted(k);
  for (std::size_t j = 0; j < k; ++j) {
    s_sorted[j] = s[order[j]];
    for (std::size_t i = 0; i < left.rows(); ++i) left_sorted(i, j) = left(i, order[j]);
    for (std::size_t i = 0; i < right.rows(); ++i) right_sorted(i, j) = right(i, order[j]);
  }

  ThinSvd out;
  out.s = std::move(s_sorted);
  if (flipped) {
    out.u = std::move(right_sorted);
    out.v = std::move(left_sorted);
  } else {
    out.u = std::move(left_sorted);
    out.v = std::move(right_sorted);
  }
  apply_sign_convention(out.u, out.v);
  return out;
}

Matrix reconstruct_components(const ThinSvd& svd, const std::vector<std::size_t>& selected) {
  const std::size_t k = svd.num_components();
  std::vector<std::size_t> idx(selected);
  std::sort(idx.begin(), idx.end());
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  if (!idx.empty() && idx.back() >= k) {
    throw DimensionError("reconstruct_components: index " + std::to_string(idx.back()) +
                         " out of range for " + std::to_string(k) + " components");
  }
  std::vector<double> scale(k, 0.0);
  for (std::size_t r : idx) scale[r] = svd.s[r];
  return scaled_outer_sum(svd, scale);
}

Matrix reconstruct_all(const ThinSvd& svd) {
  std::vector<std::size_t> all(svd.num_components());
  std::iota(all.begin(), all.end(), 0);
  return reconstruct_components(svd, all);
}

Matrix scaled_outer_sum(const ThinSvd& svd, const std::vector<double>& col_scale) {
  const std::size_t k = svd.num_components();
  if (col_scale.size() != k) {
    throw DimensionError("scaled_outer_sum: scale size " + std::to_string(col_scale.size()) +
                         " does not match " + std::to_string(k) + " components");
  }
  Matrix scaled = svd.u;
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < scaled.rows(); ++i) scaled(i, j) *= col_scale[j];
  }
  return matmul(scaled, transpose(svd.v));
}

}  // namespace adarank
