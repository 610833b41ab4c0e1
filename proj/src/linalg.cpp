#include "bgld/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "bgld/kernels.hpp"

namespace bgld {

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    fail(ErrorCode::ShapeMismatch, "matmul " + std::to_string(a.cols()) + " vs " +
                                       std::to_string(b.rows()));
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k)
      kern::axpy(a(i, k), b.row(k).data(), c.row(i).data(), b.cols());
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix gram_rows(const Matrix& e) {
  Matrix g(e.rows(), e.rows());
  for (std::size_t i = 0; i < e.rows(); ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      const double v = kern::dot(e.row(i).data(), e.row(j).data(), e.cols());
      g(i, j) = v;
      g(j, i) = v;
    }
  return g;
}

std::vector<double> matvec(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size())
    fail(ErrorCode::ShapeMismatch, "matvec " + std::to_string(a.cols()) + " vs " +
                                       std::to_string(x.size()));
  std::vector<double> y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    y[i] = kern::dot(a.row(i).data(), x.data(), x.size());
  return y;
}

void cholesky_inplace(Matrix& a) {
  const std::size_t n = a.rows();
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j) - kern::sumsq(a.row(j).data(), j);
    if (!(d > 0.0))
      fail(ErrorCode::NotPositiveDefinite,
           "cholesky pivot " + std::to_string(j) + " = " + std::to_string(d));
    d = std::sqrt(d);
    a(j, j) = d;
    for (std::size_t i = j + 1; i < n; ++i)
      a(i, j) = (a(i, j) - kern::dot(a.row(i).data(), a.row(j).data(), j)) / d;
    for (std::size_t k = j + 1; k < n; ++k) a(j, k) = 0.0;
  }
}

void cholesky_solve(const Matrix& chol, std::span<double> b) {
  const std::size_t n = chol.rows();
  for (std::size_t i = 0; i < n; ++i)
    b[i] = (b[i] - kern::dot(chol.row(i).data(), b.data(), i)) / chol(i, i);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= chol(k, i) * b[k];
    b[i] = s / chol(i, i);
  }
}

double cholesky_logdet(const Matrix& chol) {
  double s = 0.0;
  for (std::size_t i = 0; i < chol.rows(); ++i) s += std::log(chol(i, i));
  return 2.0 * s;
}

Matrix spd_inverse(const Matrix& a) {
  Matrix chol = a;
  cholesky_inplace(chol);
  const std::size_t n = a.rows();
  Matrix inv(n, n);
  std::vector<double> e(n);
  for (std::size_t j = 0; j < n; ++j) {
    std::fill(e.begin(), e.end(), 0.0);
    e[j] = 1.0;
    cholesky_solve(chol, e);
    for (std::size_t i = 0; i < n; ++i) inv(i, j) = e[i];
  }
  // symmetrize against roundoff
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const double v = 0.5 * (inv(i, j) + inv(j, i));
      inv(i, j) = v;
      inv(j, i) = v;
    }
  return inv;
}

SymEig jacobi_eigen(const Matrix& a_in, int max_sweeps) {
  const std::size_t n = a_in.rows();
  Matrix a = a_in;
  Matrix v = Matrix::identity(n);

  double frob = 0.0;
  for (std::size_t i = 0; i < n; ++i) frob += kern::sumsq(a.row(i).data(), n);
  frob = std::sqrt(frob);
  const double stop = (frob > 0 ? frob : 1.0) * 1e-15;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += 2.0 * a(p, q) * a(p, q);
    if (std::sqrt(off) <= stop) break;

    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) <= stop / (n * n + 1.0)) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(1.0 + theta * theta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        const double tau = s / (1.0 + c);

        const double app = a(p, p), aqq = a(q, q);
        a(p, p) = app - t * apq;
        a(q, q) = aqq + t * apq;
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (i == p || i == q) continue;
          const double aip = a(i, p), aiq = a(i, q);
          a(i, p) = aip - s * (aiq + tau * aip);
          a(p, i) = a(i, p);
          a(i, q) = aiq + s * (aip - tau * aiq);
          a(q, i) = a(i, q);
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vip = v(i, p), viq = v(i, q);
          v(i, p) = vip - s * (viq + tau * vip);
          v(i, q) = viq + s * (vip - tau * viq);
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });

  SymEig out;
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t src = order[k];
    out.values[k] = a(src, src);
    // sign convention: largest-magnitude entry positive
    std::size_t imax = 0;
    double amax = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double m = std::abs(v(i, src));
      if (m > amax) {
        amax = m;
        imax = i;
      }
    }
    const double sgn = v(imax, src) >= 0.0 ? 1.0 : -1.0;
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = sgn * v(i, src);
  }
  return out;
}

double orthogonalize_against(std::span<double> v, const Matrix& basis,
                             std::size_t nrows, double tol) {
  const std::size_t n = v.size();
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t r = 0; r < nrows; ++r) {
      const double c = kern::dot(v.data(), basis.row(r).data(), n);
      kern::axpy(-c, basis.row(r).data(), v.data(), n);
    }
  }
  const double norm = std::sqrt(kern::sumsq(v.data(), n));
  if (norm > tol)
    for (std::size_t i = 0; i < n; ++i) v[i] /= norm;
  return norm;
}

void orthonormalize_rows(Matrix& m, double tol) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    Matrix& b = m;
    const double norm = orthogonalize_against(m.row(r), b, r, tol);
    if (norm <= tol)
      fail(ErrorCode::SingularSystem,
           "row " + std::to_string(r) + " dependent (residual " +
               std::to_string(norm) + ")");
  }
}

RowSvd svd_rows(const Matrix& e, double rel_cutoff) {
  const std::size_t t = e.rows();
  const Matrix g = gram_rows(e);
  const SymEig eig = jacobi_eigen(g);

  const double top = eig.values.empty() ? 0.0 : std::max(eig.values[0], 0.0);
  const double sv_max = std::sqrt(top);
  const double cutoff = sv_max * rel_cutoff;

  RowSvd out;
  for (std::size_t k = 0; k < t; ++k) {
    const double sv = std::sqrt(std::max(eig.values[k], 0.0));
    if (sv <= cutoff || sv == 0.0) break;
    out.sv.push_back(sv);
  }
  out.rank = static_cast<int>(out.sv.size());

  out.temporal = Matrix(out.rank, t);
  out.spatial = Matrix(out.rank, e.cols());
  for (int k = 0; k < out.rank; ++k) {
    for (std::size_t i = 0; i < t; ++i) out.temporal(k, i) = eig.vectors(i, k);
    // spatial_k = E^T temporal_k / sv_k
    for (std::size_t i = 0; i < t; ++i)
      kern::axpy(out.temporal(k, i) / out.sv[k], e.row(i).data(),
                 out.spatial.row(k).data(), e.cols());
  }
  // Small singular values lose orthogonality through the Gram route; clean up.
  for (int k = 0; k < out.rank; ++k) {
    const double norm = orthogonalize_against(out.spatial.row(k), out.spatial, k);
    if (norm <= 0.5)
      fail(ErrorCode::SingularSystem, "svd spatial row collapse at " + std::to_string(k));
  }
  return out;
}

}  // namespace bgld
