#pragma once

#include <memory>

#include "bgld/basis.hpp"

// Basis graphical lasso stage: penalized maximum likelihood for the per-level
// precision blocks Q_l of the stochastic basis coefficients, with an
// elementwise l1 penalty (lambda) on off-diagonals and a fusion penalty (rho)
// on off-diagonal differences at adjacent levels.
//
// The likelihood is evaluated through the Sherman-Morrison-Woodbury
// reduction; with an orthonormal basis it decomposes into independent p x p
// computations per level. The nonconvex objective is minimized by a
// difference-of-convex outer loop: the concave part
// log det(Q + Phi^T D^-1 Phi) - tr(M (Q + Phi^T D^-1 Phi)^-1) is linearized
// at the current iterate, which turns every outer step into a graphical-lasso
// subproblem with surrogate covariance G = B^-1 + B^-1 M B^-1. With rho = 0
// and p = 2 the subproblem has a closed-form solution; otherwise it is solved
// by ADMM whose penalty prox is a fused-lasso chain across levels.

namespace bgld {

struct BglOptions {
  double tol = 1e-6;        // outer stop: relative objective decrease
  int max_outer = 50;
  double inner_tol = 1e-9;  // ADMM residual tolerance (relative)
  int max_inner = 5000;
  double eig_floor = 1e-8;  // SPD cone projection floor, relative to block scale
  double tau_floor_rel = 1e-8;  // noise floor relative to marginal variance
  double init_diag_reg = 0.01;  // initializer ridge, times trace/p
  std::vector<double> tau2_override;  // testing hook; empty = estimate_noise
};

struct BglModel {
  std::shared_ptr<const BasisSet> basis;
  DeterministicFit det;
  std::vector<Matrix> q_blocks;  // L blocks, p x p SPD
  std::vector<double> tau2;      // length p
  double lambda = 0.0, rho = 0.0;
  int season = -1;

  int levels() const { return static_cast<int>(q_blocks.size()); }
  int p() const { return q_blocks.empty() ? 0 : static_cast<int>(q_blocks[0].rows()); }
  void validate() const;  // SPD blocks, positive noise
};

// Sufficient statistics of the stacked residual sample for the SMW-reduced
// likelihood: per-level second moments of the basis-projection coefficients,
// plus the basis-independent terms that make nll_smw equal nll_direct.
struct SampleStats {
  std::vector<Matrix> coeff_moments;  // L of p x p: (1/T) sum_t c_t c_t^T
  std::vector<double> resid_sumsq;    // p: (1/T) sum_t ||e_j,t||^2
  int nobs = 0;                       // T
  int n = 0;                          // active pixels
};

SampleStats compute_stats(const ResidualPair& residuals, const BasisSet& basis);

// Dense-reference negative log-likelihood log det(Sigma) + tr(S Sigma^-1)
// with Sigma = Phi Q^-1 Phi^T + D assembled explicitly ((p n)^2 storage);
// test oracle for small n. S is the (p n) x (p n) residual second moment.
double nll_direct(const std::vector<Matrix>& q_blocks,
                  const std::vector<double>& tau2, const BasisSet& basis,
                  const Matrix& s_dense);

// S = (1/T) sum_t eps_t eps_t^T over training months, eps = [e1; e2].
Matrix stacked_sample_cov(const ResidualPair& residuals);

// SMW-reduced likelihood, equal to nll_direct up to roundoff (orthonormal
// basis assumed; per-level p x p computations only).
double nll_smw(const std::vector<Matrix>& q_blocks, const std::vector<double>& tau2,
               const SampleStats& stats);

// lambda * sum_l sum_{i!=j} |Q_l[ij]| + rho * sum_{l<L} sum_{i!=j} |Q_l[ij]-Q_{l+1}[ij]|
double penalty(const std::vector<Matrix>& q_blocks, double lambda, double rho);

// Mean squared residual per process after projecting out all T basis
// columns, floored at tau_floor_rel times the marginal variance.
std::vector<double> estimate_noise(const ResidualPair& residuals,
                                   const BasisSet& basis,
                                   const BglOptions& opts = {});

struct FitInfo {
  std::vector<double> objective;  // penalized objective, index 0 = initializer
  int outer_iterations = 0;
  int inner_iterations = 0;  // total ADMM iterations
  bool eig_floored = false;
};

BglModel fit(const ResidualPair& residuals, std::shared_ptr<const BasisSet> basis,
             double lambda, double rho, const BglOptions& opts = {},
             DeterministicFit det = {}, FitInfo* info = nullptr);

// K-fold cross-validation over training months (contiguous blocks); selects
// the grid pair with the lowest mean held-out residual prediction MSE of the
// full Stage-2 path. Ties break to the earlier grid entry.
std::pair<double, double> select_penalties(
    const ResidualPair& residuals, std::shared_ptr<const BasisSet> basis,
    const std::vector<std::pair<double, double>>& grid,
    const BglOptions& opts = {}, int folds = 5);

// Exact prox of (1/2)||z - v||^2 + w * sum |z_{i+1} - z_i| (1-D total
// variation chain); used by the ADMM penalty step and exposed for tests.
void tv1d_prox(const double* v, double* z, int n, double w);

}  // namespace bgld
