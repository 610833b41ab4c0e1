#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bgld/errors.hpp"

// Dense double-precision linear algebra sized for this library: Gram matrices
// over training months (tens to a few hundred rows), per-level p x p blocks,
// and the dense test oracles (a few hundred rows). Row-contiguous storage so
// the row-wise kernels apply directly.

namespace bgld {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
// g(i,j) = <row i, row j>; symmetric
Matrix gram_rows(const Matrix& e);
// y = a x for row-major a and vector x
std::vector<double> matvec(const Matrix& a, std::span<const double> x);

// In-place lower-triangular Cholesky of an SPD matrix (upper part ignored).
// Throws NotPositiveDefinite naming the failing pivot.
void cholesky_inplace(Matrix& a);
// Solve L L^T x = b in place given the factor from cholesky_inplace.
void cholesky_solve(const Matrix& chol, std::span<double> b);
double cholesky_logdet(const Matrix& chol);
// Inverse of an SPD matrix via its Cholesky factor.
Matrix spd_inverse(const Matrix& a);

struct SymEig {
  std::vector<double> values;  // descending
  Matrix vectors;              // column k is the eigenvector for values[k]
};

// Cyclic Jacobi eigendecomposition of a symmetric matrix. Deterministic:
// eigenvalues sorted descending (stable), each vector's largest-magnitude
// entry made positive.
SymEig jacobi_eigen(const Matrix& a, int max_sweeps = 64);

struct RowSvd {
  Matrix spatial;            // [rank x n] orthonormal rows (right singular vectors)
  Matrix temporal;           // [rank x T] orthonormal rows (left singular vectors)
  std::vector<double> sv;    // descending, length rank
  int rank = 0;
};

// Thin SVD of e [T x n] with T <= n, computed from the T x T Gram matrix.
// Keeps singular values above rel_cutoff * sv_max; the default reflects the
// Gram route's squared conditioning (eigenvalue noise ~ eps * top), below
// which singular values are numerically indistinguishable from zero. Spatial
// rows are re-orthonormalized to counter the loss of orthogonality at small
// singular values.
RowSvd svd_rows(const Matrix& e, double rel_cutoff = 3e-7);

// Modified Gram-Schmidt (two passes) of `v` against the first `nrows` rows of
// `basis`; returns the norm of the remainder before normalization. On success
// (norm > tol) `v` is normalized in place.
double orthogonalize_against(std::span<double> v, const Matrix& basis,
                             std::size_t nrows, double tol = 1e-12);

// Orthonormalize the rows of `m` in order (MGS, two passes); throws
// SingularSystem if a row is dependent beyond tol.
void orthonormalize_rows(Matrix& m, double tol = 1e-10);

}  // namespace bgld
