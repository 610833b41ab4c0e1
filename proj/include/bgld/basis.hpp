#pragma once

#include "bgld/grid.hpp"
#include "bgld/linalg.hpp"

// EOF basis over training residuals. Rows of phi/psi are basis columns in the
// active-pixel order (contiguous per level, which is what the projection and
// reconstruction kernels want).

namespace bgld {

struct ResidualPair {
  Matrix e1;  // [T x n] model-side residual; rows beyond t_train are future months
  Matrix e2;  // [t_train x n] observation minus trend
  int t_train = 0;
  int season = -1;
  std::vector<YearMonth> months;  // length e1.rows(), training rows first

  int n() const { return static_cast<int>(e2.cols()); }
  void validate() const;
};

struct BasisSet {
  Matrix phi;  // [L x n] stochastic
  Matrix psi;  // [(T-L) x n] deterministic
  std::vector<double> singular_values;  // length T, nonincreasing, 0 for completed
  bool rank_deficient = false;

  int n() const { return static_cast<int>(phi.cols() ? phi.cols() : psi.cols()); }
  int L() const { return static_cast<int>(phi.rows()); }
  int T() const { return static_cast<int>(phi.rows() + psi.rows()); }
  // row r of the full [T x n] column set (phi rows then psi rows)
  std::span<const double> column(int r) const;
};

struct DeterministicFit {
  Matrix nu;  // [2 x (T-L)]
  bool empty() const { return nu.cols() == 0; }
};

enum class EofSource { obs, pooled };

// Left singular vectors of the column-centered training residual matrix, all
// T columns, nonincreasing singular value order. Rank deficiency is flagged
// and trailing columns are completed to an orthonormal set (first from the
// removed time-mean directions, then seeded pseudo-random vectors).
BasisSet compute_eofs(const ResidualPair& residuals, EofSource source);

struct SplitRule {
  enum class Kind { fixed_l, variance_threshold } kind = Kind::variance_threshold;
  int L = 0;
  double fraction = 0.95;

  static SplitRule fixed(int L) { return {Kind::fixed_l, L, 0.0}; }
  static SplitRule variance(double fraction) {
    return {Kind::variance_threshold, 0, fraction};
  }
  std::string to_string() const;
  static SplitRule parse(const std::string& s);
};

// Truncation only: the first L columns stay stochastic, the rest move to psi.
BasisSet split_basis(const BasisSet& full, const SplitRule& rule);

// OLS coefficients of the time-mean training residual on the deterministic
// columns; with orthonormal psi this is nu_j = psi * mean(e_j).
DeterministicFit fit_deterministic(const ResidualPair& residuals, const BasisSet& basis);

}  // namespace bgld
