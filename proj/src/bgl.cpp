#include "bgld/bgl.hpp"

#include <algorithm>
#include <cmath>

#include "bgld/kernels.hpp"
#include "bgld/predict.hpp"

namespace bgld {

namespace {

double soft(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

Matrix symmetrized(const Matrix& a) {
  Matrix s = a;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const double v = 0.5 * (a(i, j) + a(j, i));
      s(i, j) = v;
      s(j, i) = v;
    }
  return s;
}

}  // namespace

void BglModel::validate() const {
  if (!basis) fail(ErrorCode::ModelMissing, "model has no basis attached");
  const int np = p();
  if (static_cast<int>(tau2.size()) != np)
    fail(ErrorCode::DimensionMismatch, "tau2 length != p");
  for (double t2 : tau2)
    if (!(t2 > 0.0)) fail(ErrorCode::NotPositiveDefinite, "tau2 must be positive");
  if (levels() != basis->L())
    fail(ErrorCode::DimensionMismatch, "Q block count != basis L");
  for (int l = 0; l < levels(); ++l) {
    const Matrix& q = q_blocks[l];
    if (q.rows() != q.cols() || static_cast<int>(q.rows()) != np)
      fail(ErrorCode::DimensionMismatch, "Q block " + std::to_string(l) + " shape");
    for (std::size_t i = 0; i < q.rows(); ++i)
      for (std::size_t j = 0; j < i; ++j)
        if (q(i, j) != q(j, i))
          fail(ErrorCode::MalformedInput,
               "Q block " + std::to_string(l) + " not symmetric");
    const SymEig eig = jacobi_eigen(q);
    if (!(eig.values.back() > 0.0))
      fail(ErrorCode::NotPositiveDefinite,
           "Q block " + std::to_string(l) + " min eigenvalue " +
               std::to_string(eig.values.back()));
  }
  if (lambda < 0.0 || rho < 0.0)
    fail(ErrorCode::MalformedInput, "penalties must be nonnegative");
}

SampleStats compute_stats(const ResidualPair& residuals, const BasisSet& basis) {
  residuals.validate();
  const int t_train = residuals.t_train;
  const int levels = basis.L();
  const int n = residuals.n();
  if (basis.n() != n)
    fail(ErrorCode::DimensionMismatch, "basis/residual pixel counts differ");

  SampleStats st;
  st.nobs = t_train;
  st.n = n;
  st.coeff_moments.assign(levels, Matrix(2, 2));
  st.resid_sumsq.assign(2, 0.0);

  for (int t = 0; t < t_train; ++t) {
    const double* e1 = residuals.e1.row(t).data();
    const double* e2 = residuals.e2.row(t).data();
    st.resid_sumsq[0] += kern::sumsq(e1, n);
    st.resid_sumsq[1] += kern::sumsq(e2, n);
    for (int l = 0; l < levels; ++l) {
      const double* phi = basis.phi.row(l).data();
      const double c1 = kern::dot(phi, e1, n);
      const double c2 = kern::dot(phi, e2, n);
      Matrix& m = st.coeff_moments[l];
      m(0, 0) += c1 * c1;
      m(0, 1) += c1 * c2;
      m(1, 0) += c1 * c2;
      m(1, 1) += c2 * c2;
    }
  }
  const double inv = 1.0 / t_train;
  for (auto& m : st.coeff_moments)
    for (std::size_t k = 0; k < 4; ++k) m.data()[k] *= inv;
  for (auto& v : st.resid_sumsq) v *= inv;
  return st;
}

Matrix stacked_sample_cov(const ResidualPair& residuals) {
  residuals.validate();
  const int t_train = residuals.t_train;
  const int n = residuals.n();
  Matrix s(2 * n, 2 * n);
  std::vector<double> eps(2 * n);
  for (int t = 0; t < t_train; ++t) {
    std::copy_n(residuals.e1.row(t).data(), n, eps.data());
    std::copy_n(residuals.e2.row(t).data(), n, eps.data() + n);
    for (int i = 0; i < 2 * n; ++i)
      kern::axpy(eps[i], eps.data(), s.row(i).data(), 2 * n);
  }
  const double inv = 1.0 / t_train;
  for (std::size_t k = 0; k < s.rows() * s.cols(); ++k) s.data()[k] *= inv;
  return s;
}

double nll_direct(const std::vector<Matrix>& q_blocks,
                  const std::vector<double>& tau2, const BasisSet& basis,
                  const Matrix& s_dense) {
  const int p = static_cast<int>(tau2.size());
  const int n = basis.n();
  const int levels = static_cast<int>(q_blocks.size());
  if (static_cast<int>(s_dense.rows()) != p * n || s_dense.rows() != s_dense.cols())
    fail(ErrorCode::ShapeMismatch, "S must be (p n) x (p n)");
  if (levels != basis.L())
    fail(ErrorCode::DimensionMismatch, "Q block count != basis L");

  Matrix sigma(p * n, p * n);
  for (int l = 0; l < levels; ++l) {
    const Matrix qinv = spd_inverse(q_blocks[l]);
    const double* phi = basis.phi.row(l).data();
    for (int j = 0; j < p; ++j)
      for (int k = 0; k < p; ++k) {
        const double q = qinv(j, k);
        if (q == 0.0) continue;
        for (int a = 0; a < n; ++a)
          kern::axpy(q * phi[a], phi, sigma.row(j * n + a).data() + k * n, n);
      }
  }
  for (int j = 0; j < p; ++j) {
    if (!(tau2[j] > 0.0)) fail(ErrorCode::NotPositiveDefinite, "tau2 <= 0");
    for (int a = 0; a < n; ++a) sigma(j * n + a, j * n + a) += tau2[j];
  }

  cholesky_inplace(sigma);
  const double logdet = cholesky_logdet(sigma);

  // tr(S Sigma^-1): solve per column of S
  double trace = 0.0;
  std::vector<double> col(p * n);
  for (int j = 0; j < p * n; ++j) {
    for (int i = 0; i < p * n; ++i) col[i] = s_dense(i, j);
    cholesky_solve(sigma, col);
    trace += col[j];
  }
  return logdet + trace;
}

double nll_smw(const std::vector<Matrix>& q_blocks, const std::vector<double>& tau2,
               const SampleStats& stats) {
  const int p = static_cast<int>(tau2.size());
  const int levels = static_cast<int>(q_blocks.size());
  if (static_cast<int>(stats.coeff_moments.size()) != levels)
    fail(ErrorCode::DimensionMismatch, "stats level count != Q block count");

  double value = 0.0;
  for (int j = 0; j < p; ++j) {
    if (!(tau2[j] > 0.0)) fail(ErrorCode::NotPositiveDefinite, "tau2 <= 0");
    value += stats.n * std::log(tau2[j]) + stats.resid_sumsq[j] / tau2[j];
  }
  for (int l = 0; l < levels; ++l) {
    const Matrix& q = q_blocks[l];
    Matrix b = q;
    for (int j = 0; j < p; ++j) b(j, j) += 1.0 / tau2[j];

    Matrix bc = b;
    cholesky_inplace(bc);
    Matrix qc = q;
    cholesky_inplace(qc);
    value += cholesky_logdet(bc) - cholesky_logdet(qc);

    const Matrix binv = spd_inverse(b);
    const Matrix& c = stats.coeff_moments[l];
    double tr = 0.0;
    for (int j = 0; j < p; ++j)
      for (int k = 0; k < p; ++k)
        tr += c(j, k) / (tau2[j] * tau2[k]) * binv(k, j);
    value -= tr;
  }
  return value;
}

double penalty(const std::vector<Matrix>& q_blocks, double lambda, double rho) {
  double value = 0.0;
  const int levels = static_cast<int>(q_blocks.size());
  for (int l = 0; l < levels; ++l) {
    const Matrix& q = q_blocks[l];
    for (std::size_t i = 0; i < q.rows(); ++i)
      for (std::size_t j = 0; j < q.cols(); ++j)
        if (i != j) value += lambda * std::abs(q(i, j));
  }
  for (int l = 0; l + 1 < levels; ++l) {
    const Matrix& a = q_blocks[l];
    const Matrix& b = q_blocks[l + 1];
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = 0; j < a.cols(); ++j)
        if (i != j) value += rho * std::abs(a(i, j) - b(i, j));
  }
  return value;
}

std::vector<double> estimate_noise(const ResidualPair& residuals,
                                   const BasisSet& basis, const BglOptions& opts) {
  residuals.validate();
  const int t_train = residuals.t_train;
  const int n = residuals.n();
  const int t_cols = basis.T();

  std::vector<double> tau2(2, 0.0);
  std::vector<double> r(n);
  std::vector<double> coeffs(t_cols);
  for (int j = 0; j < 2; ++j) {
    const Matrix& e = j == 0 ? residuals.e1 : residuals.e2;
    double sumsq = 0.0, sum = 0.0, total_sq = 0.0;
    for (int t = 0; t < t_train; ++t) {
      const double* row = e.row(t).data();
      sum += kern::sum(row, n);
      total_sq += kern::sumsq(row, n);
      std::copy_n(row, n, r.data());
      for (int k = 0; k < t_cols; ++k)
        coeffs[k] = kern::dot(basis.column(k).data(), row, n);
      for (int k = 0; k < t_cols; ++k)
        kern::axpy(-coeffs[k], basis.column(k).data(), r.data(), n);
      sumsq += kern::sumsq(r.data(), n);
    }
    const double cnt = static_cast<double>(t_train) * n;
    const double mean = sum / cnt;
    const double marginal_var = std::max(total_sq / cnt - mean * mean, 0.0);
    const double floor =
        std::max(opts.tau_floor_rel * marginal_var, 1e-300);
    tau2[j] = std::max(sumsq / cnt, floor);
  }
  return tau2;
}

void tv1d_prox(const double* v, double* z, int n, double w) {
  if (n <= 0) return;
  if (n == 1 || w <= 0.0) {
    std::copy_n(v, n, z);
    return;
  }
  // Dual box QP: min (1/2) u^T (D D^T) u - u^T D v over |u_i| <= w, solved by
  // projected SOR (Cryer's method; provably convergent for SPD box QP).
  // Primal recovery: z_j = v_j + u_j - u_{j-1}.
  const int m = n - 1;
  std::vector<double> u(m, 0.0);
  double scale = 0.0;
  for (int i = 0; i < m; ++i) scale = std::max(scale, std::abs(v[i + 1] - v[i]));
  scale = std::max(scale, 1.0);
  const double omega = 1.8;
  const double tol = 1e-14 * scale;
  const int max_sweeps = 40000;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double delta = 0.0;
    for (int i = 0; i < m; ++i) {
      const double left = i > 0 ? u[i - 1] : 0.0;
      const double right = i + 1 < m ? u[i + 1] : 0.0;
      const double target = 0.5 * (left + right + v[i + 1] - v[i]);
      double next = u[i] + omega * (target - u[i]);
      next = std::clamp(next, -w, w);
      delta = std::max(delta, std::abs(next - u[i]));
      u[i] = next;
    }
    if (delta <= tol) break;
  }
  for (int j = 0; j < n; ++j) {
    const double uj = j < m ? u[j] : 0.0;
    const double ujm1 = j > 0 ? u[j - 1] : 0.0;
    z[j] = v[j] + uj - ujm1;
  }
}

namespace {

// X-update of the ADMM subproblem: prox of -logdet(X) + tr(G X) with step t
// at point A = Z - U - t G; closed form through the eigendecomposition.
Matrix logdet_prox(const Matrix& a, double t) {
  const SymEig eig = jacobi_eigen(a);
  const int p = static_cast<int>(a.rows());
  Matrix x(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) {
      double s = 0.0;
      for (int k = 0; k < p; ++k) {
        const double lam = eig.values[k];
        const double xv = 0.5 * (lam + std::sqrt(lam * lam + 4.0 * t));
        s += xv * eig.vectors(i, k) * eig.vectors(j, k);
      }
      x(i, j) = s;
    }
  return x;
}

// Solve min sum_l [-logdet Q_l + tr(G_l Q_l)] + lambda*off_l1 + rho*fusion
// by ADMM; returns Z (carries the exact zeros / fused values).
std::vector<Matrix> admm_subproblem(const std::vector<Matrix>& g, double lambda,
                                    double rho, const std::vector<Matrix>& warm,
                                    const BglOptions& opts, int* iters_out) {
  const int levels = static_cast<int>(g.size());
  const int p = static_cast<int>(g[0].rows());

  std::vector<Matrix> x = warm, z = warm, u(levels, Matrix(p, p));

  double gtrace = 0.0;
  for (const auto& m : g)
    for (int i = 0; i < p; ++i) gtrace += m(i, i);
  double t = (levels * p) / std::max(gtrace, 1e-300);

  std::vector<double> chain(levels), chain_z(levels);
  const double dim = std::sqrt(static_cast<double>(levels) * p * p);

  int iter = 0;
  for (; iter < opts.max_inner; ++iter) {
    for (int l = 0; l < levels; ++l) {
      Matrix a(p, p);
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j)
          a(i, j) = z[l](i, j) - u[l](i, j) - t * g[l](i, j);
      x[l] = logdet_prox(symmetrized(a), t);
    }

    const std::vector<Matrix> z_prev = z;
    for (int l = 0; l < levels; ++l)
      for (int i = 0; i < p; ++i) z[l](i, i) = x[l](i, i) + u[l](i, i);
    for (int i = 0; i < p; ++i) {
      for (int j = i + 1; j < p; ++j) {
        for (int l = 0; l < levels; ++l) chain[l] = x[l](i, j) + u[l](i, j);
        if (rho > 0.0)
          tv1d_prox(chain.data(), chain_z.data(), levels, t * rho);
        else
          std::copy(chain.begin(), chain.end(), chain_z.begin());
        for (int l = 0; l < levels; ++l) {
          const double zv = soft(chain_z[l], t * lambda);
          z[l](i, j) = zv;
          z[l](j, i) = zv;
        }
      }
    }

    double r2 = 0.0, s2 = 0.0, xn2 = 0.0, zn2 = 0.0, un2 = 0.0;
    for (int l = 0; l < levels; ++l) {
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) {
          const double d = x[l](i, j) - z[l](i, j);
          u[l](i, j) += d;
          r2 += d * d;
          const double dz = z[l](i, j) - z_prev[l](i, j);
          s2 += dz * dz;
          xn2 += x[l](i, j) * x[l](i, j);
          zn2 += z[l](i, j) * z[l](i, j);
          un2 += u[l](i, j) * u[l](i, j);
        }
    }
    const double r = std::sqrt(r2);
    const double s = std::sqrt(s2) / t;
    const double eps_pri =
        dim * 1e-14 + opts.inner_tol * std::sqrt(std::max(xn2, zn2));
    const double eps_dual = dim * 1e-14 + opts.inner_tol * std::sqrt(un2) / t;
    if (r <= eps_pri && s <= eps_dual) {
      ++iter;
      break;
    }
    if ((iter + 1) % 10 == 0) {
      if (r > 10.0 * s) {
        t *= 0.5;
        for (auto& m : u)
          for (std::size_t k = 0; k < m.rows() * m.cols(); ++k) m.data()[k] *= 0.5;
      } else if (s > 10.0 * r) {
        t *= 2.0;
        for (auto& m : u)
          for (std::size_t k = 0; k < m.rows() * m.cols(); ++k) m.data()[k] *= 2.0;
      }
    }
  }
  if (iters_out) *iters_out = iter;
  return z;
}

// Closed-form 2x2 graphical lasso (rho = 0): the dual fixes the diagonal of
// W = Q^-1 at diag(G) and soft-thresholds the off-diagonal.
Matrix glasso2x2(const Matrix& g, double lambda) {
  const double w12 = soft(g(0, 1), lambda);
  const double det = g(0, 0) * g(1, 1) - w12 * w12;
  if (!(det > 0.0) || !(g(0, 0) > 0.0))
    fail(ErrorCode::NotPositiveDefinite, "glasso surrogate not SPD");
  Matrix q(2, 2);
  q(0, 0) = g(1, 1) / det;
  q(1, 1) = g(0, 0) / det;
  q(0, 1) = -w12 / det;
  q(1, 0) = -w12 / det;
  return q;
}

}  // namespace

BglModel fit(const ResidualPair& residuals, std::shared_ptr<const BasisSet> basis,
             double lambda, double rho, const BglOptions& opts,
             DeterministicFit det, FitInfo* info) {
  if (!basis) fail(ErrorCode::ModelMissing, "fit needs a basis");
  if (lambda < 0.0 || rho < 0.0)
    fail(ErrorCode::MalformedInput, "penalties must be nonnegative");
  const SampleStats stats = compute_stats(residuals, *basis);
  const int levels = basis->L();
  const int p = 2;

  BglModel model;
  model.basis = basis;
  model.det = std::move(det);
  model.lambda = lambda;
  model.rho = rho;
  model.season = residuals.season;
  model.tau2 = opts.tau2_override.empty() ? estimate_noise(residuals, *basis, opts)
                                          : opts.tau2_override;

  // initializer: inverse of the ridged per-level coefficient covariance
  model.q_blocks.reserve(levels);
  for (int l = 0; l < levels; ++l) {
    Matrix c = stats.coeff_moments[l];
    double tr = 0.0;
    for (int i = 0; i < p; ++i) tr += c(i, i);
    const double ridge = opts.init_diag_reg * std::max(tr / p, 1e-300);
    for (int i = 0; i < p; ++i) c(i, i) += ridge;
    model.q_blocks.push_back(spd_inverse(c));
  }

  FitInfo local;
  FitInfo& fi = info ? *info : local;
  fi.objective.clear();
  double obj = nll_smw(model.q_blocks, model.tau2, stats) +
               penalty(model.q_blocks, lambda, rho);
  fi.objective.push_back(obj);

  std::vector<Matrix> g(levels, Matrix(p, p));
  for (int outer = 0; outer < opts.max_outer; ++outer) {
    // linearize the concave part at the current iterate
    for (int l = 0; l < levels; ++l) {
      Matrix b = model.q_blocks[l];
      for (int j = 0; j < p; ++j) b(j, j) += 1.0 / model.tau2[j];
      const Matrix binv = spd_inverse(b);
      Matrix m(p, p);
      const Matrix& c = stats.coeff_moments[l];
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j)
          m(i, j) = c(i, j) / (model.tau2[i] * model.tau2[j]);
      const Matrix bmb = matmul(binv, matmul(m, binv));
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) g[l](i, j) = binv(i, j) + bmb(i, j);
      g[l] = symmetrized(g[l]);
    }

    std::vector<Matrix> q_new;
    if (lambda == 0.0 && rho == 0.0) {
      q_new.reserve(levels);
      for (int l = 0; l < levels; ++l) q_new.push_back(spd_inverse(g[l]));
    } else if (rho == 0.0 && p == 2) {
      q_new.reserve(levels);
      for (int l = 0; l < levels; ++l) q_new.push_back(glasso2x2(g[l], lambda));
    } else {
      int inner = 0;
      q_new = admm_subproblem(g, lambda, rho, model.q_blocks, opts, &inner);
      fi.inner_iterations += inner;
    }

    // SPD safeguard: floor eigenvalues relative to the block scale
    for (int l = 0; l < levels; ++l) {
      double scale = 0.0;
      for (int i = 0; i < p; ++i) scale = std::max(scale, std::abs(q_new[l](i, i)));
      const double floor = opts.eig_floor * std::max(scale, 1e-300);
      const SymEig eig = jacobi_eigen(q_new[l]);
      if (eig.values.back() < floor) {
        fi.eig_floored = true;
        Matrix fixed(p, p);
        for (int i = 0; i < p; ++i)
          for (int j = 0; j < p; ++j) {
            double s = 0.0;
            for (int k = 0; k < p; ++k)
              s += std::max(eig.values[k], floor) * eig.vectors(i, k) * eig.vectors(j, k);
            fixed(i, j) = s;
          }
        q_new[l] = fixed;
      }
    }

    const double obj_new = nll_smw(q_new, model.tau2, stats) +
                           penalty(q_new, lambda, rho);
    if (obj_new > obj + 1e-9 * std::max(1.0, std::abs(obj)))
      fail(ErrorCode::Diverged,
           "objective increased from " + std::to_string(obj) + " to " +
               std::to_string(obj_new) + " at outer iteration " +
               std::to_string(outer + 1));
    model.q_blocks = std::move(q_new);
    fi.objective.push_back(obj_new);
    fi.outer_iterations = outer + 1;
    const bool converged = (obj - obj_new) < opts.tol * std::max(1.0, std::abs(obj));
    obj = obj_new;
    if (converged) break;
  }
  return model;
}

std::pair<double, double> select_penalties(
    const ResidualPair& residuals, std::shared_ptr<const BasisSet> basis,
    const std::vector<std::pair<double, double>>& grid, const BglOptions& opts,
    int folds) {
  if (grid.empty()) fail(ErrorCode::MalformedInput, "penalty grid is empty");
  residuals.validate();
  const int t_train = residuals.t_train;
  if (t_train < folds)
    fail(ErrorCode::InsufficientData,
         std::to_string(t_train) + " training months < " + std::to_string(folds) +
             " folds");
  const int n = residuals.n();

  std::vector<double> score(grid.size(), 0.0);
  int scored_months = 0;
  for (int f = 0; f < folds; ++f) {
    const int lo = static_cast<int>(static_cast<long long>(f) * t_train / folds);
    const int hi = static_cast<int>(static_cast<long long>(f + 1) * t_train / folds);
    if (hi <= lo) continue;
    const int t_sub = t_train - (hi - lo);
    if (t_sub < 2) fail(ErrorCode::InsufficientData, "fold leaves < 2 training months");

    ResidualPair sub;
    sub.season = residuals.season;
    sub.t_train = t_sub;
    sub.e1 = Matrix(t_sub, n);
    sub.e2 = Matrix(t_sub, n);
    int r = 0;
    for (int t = 0; t < t_train; ++t) {
      if (t >= lo && t < hi) continue;
      std::copy_n(residuals.e1.row(t).data(), n, sub.e1.row(r).data());
      std::copy_n(residuals.e2.row(t).data(), n, sub.e2.row(r).data());
      ++r;
    }

    const DeterministicFit det = fit_deterministic(sub, *basis);
    for (std::size_t gidx = 0; gidx < grid.size(); ++gidx) {
      const BglModel m =
          fit(sub, basis, grid[gidx].first, grid[gidx].second, opts, det);
      for (int t = lo; t < hi; ++t) {
        const std::vector<double> e2_hat = predict_e2(residuals.e1.row(t), m);
        score[gidx] += kern::sum_sq_diff(e2_hat.data(), residuals.e2.row(t).data(), n) / n;
      }
    }
    scored_months += hi - lo;
  }
  if (scored_months == 0) fail(ErrorCode::InsufficientData, "no held-out months");

  std::size_t best = 0;
  for (std::size_t gidx = 1; gidx < grid.size(); ++gidx)
    if (score[gidx] < score[best]) best = gidx;
  return grid[best];
}

}  // namespace bgld
