#pragma once

#include <cstddef>
#include <vector>

#include "adarank/matrix.hpp"

namespace adarank {

// Thin SVD of an m x n matrix: u is m x k, s holds k singular values in
// descending order, v is n x k, with k = min(m, n) and a = u diag(s) v^T.
struct ThinSvd {
  Matrix u;
  std::vector<double> s;
  Matrix v;

  std::size_t num_components() const { return s.size(); }
};

// One-sided Jacobi thin SVD.
//
// The factorization runs on the taller orientation (the input is transposed
// internally when rows < cols) and sweeps column pairs until the largest
// normalized off-diagonal Gram coupling drops below 1e-12, capped at 30
// sweeps; hitting the cap throws NumericalError with the residual coupling.
// Exactly-zero columns are replaced by an orthonormal completion drawn from
// identity columns, so the zero matrix decomposes to s = 0 with u and v the
// leading columns of the identity. Each column pair (u_r, v_r) is flipped so
// that the largest-magnitude entry of u_r is positive (first index wins ties).
ThinSvd svd_thin(const Matrix& a);

// Sum of s_r * u_r * v_r^T over the selected component indices, treated as a
// set (duplicates collapse) and accumulated in ascending index order.
// Out-of-range indices throw DimensionError.
Matrix reconstruct_components(const ThinSvd& svd, const std::vector<std::size_t>& selected);

Matrix reconstruct_all(const ThinSvd& svd);

// u diag(col_scale) v^T with one scale per component; the shared kernel
// behind masked reconstruction so selections stay bit-consistent.
Matrix scaled_outer_sum(const ThinSvd& svd, const std::vector<double>& col_scale);

}  // namespace adarank
