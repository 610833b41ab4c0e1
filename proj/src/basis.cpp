#include "bgld/basis.hpp"

#include <cmath>

#include "bgld/kernels.hpp"
#include "bgld/rng.hpp"

namespace bgld {

void ResidualPair::validate() const {
  if (e2.rows() != static_cast<std::size_t>(t_train))
    fail(ErrorCode::DimensionMismatch, "e2 rows != t_train");
  if (e1.rows() < e2.rows())
    fail(ErrorCode::DimensionMismatch, "e1 has fewer rows than e2");
  if (e1.cols() != e2.cols())
    fail(ErrorCode::DimensionMismatch, "e1/e2 pixel counts differ");
  if (!months.empty() && months.size() != e1.rows())
    fail(ErrorCode::DimensionMismatch, "months length != e1 rows");
}

std::span<const double> BasisSet::column(int r) const {
  if (r < L()) return phi.row(r);
  return psi.row(r - L());
}

namespace {

// column means of the first t_train rows
std::vector<double> time_mean(const Matrix& e, int t_train) {
  std::vector<double> mean(e.cols(), 0.0);
  for (int t = 0; t < t_train; ++t)
    kern::axpy(1.0, e.row(t).data(), mean.data(), e.cols());
  const double inv = t_train > 0 ? 1.0 / t_train : 0.0;
  for (double& v : mean) v *= inv;
  return mean;
}

}  // namespace

BasisSet compute_eofs(const ResidualPair& residuals, EofSource source) {
  residuals.validate();
  const int t_train = residuals.t_train;
  const int n = residuals.n();
  if (t_train < 2)
    fail(ErrorCode::InsufficientData,
         "need at least 2 training months, have " + std::to_string(t_train));
  if (n < t_train)
    fail(ErrorCode::InsufficientData,
         "need n >= T (" + std::to_string(n) + " < " + std::to_string(t_train) + ")");

  const auto mean1 = time_mean(residuals.e1, t_train);
  const auto mean2 = time_mean(residuals.e2, t_train);

  const int src_rows = source == EofSource::obs ? t_train : 2 * t_train;
  Matrix centered(src_rows, n);
  for (int t = 0; t < t_train; ++t) {
    const int dst = source == EofSource::obs ? t : t_train + t;
    kern::subtract(residuals.e2.row(t).data(), mean2.data(),
                   centered.row(dst).data(), n);
    if (source == EofSource::pooled)
      kern::subtract(residuals.e1.row(t).data(), mean1.data(),
                     centered.row(t).data(), n);
  }

  const RowSvd svd = svd_rows(centered);
  const int keep = std::min(svd.rank, t_train);

  BasisSet out;
  out.phi = Matrix(t_train, n);
  out.singular_values.assign(t_train, 0.0);
  for (int k = 0; k < keep; ++k) {
    out.singular_values[k] = svd.sv[k];
    for (int p = 0; p < n; ++p) out.phi(k, p) = svd.spatial(k, p);
  }
  out.rank_deficient = keep < t_train;

  // Complete the set: the removed time-mean directions first (so projecting
  // out all T columns also removes the mean), then seeded pseudo-random.
  int next = keep;
  std::vector<std::span<const double>> candidates;
  candidates.emplace_back(mean2.data(), mean2.size());
  candidates.emplace_back(mean1.data(), mean1.size());
  std::size_t ci = 0;
  Rng rng(0x9e3779b97f4a7c15ull);
  std::vector<double> v(n);
  while (next < t_train) {
    if (ci < candidates.size()) {
      const auto& c = candidates[ci++];
      std::copy(c.begin(), c.end(), v.begin());
    } else {
      for (double& x : v) x = rng.normal();
    }
    const double norm = orthogonalize_against({v.data(), v.size()}, out.phi, next);
    if (norm <= 1e-10) continue;
    for (int p = 0; p < n; ++p) out.phi(next, p) = v[p];
    ++next;
  }
  return out;
}

std::string SplitRule::to_string() const {
  if (kind == Kind::fixed_l) return "fixed:" + std::to_string(L);
  return "variance:" + std::to_string(fraction);
}

SplitRule SplitRule::parse(const std::string& s) {
  const std::size_t colon = s.find(':');
  if (colon == std::string::npos)
    fail(ErrorCode::InvalidRule, "split rule '" + s + "'");
  const std::string kind = s.substr(0, colon);
  const std::string arg = s.substr(colon + 1);
  if (kind == "fixed") return SplitRule::fixed(std::stoi(arg));
  if (kind == "variance") return SplitRule::variance(std::stod(arg));
  fail(ErrorCode::InvalidRule, "split rule kind '" + kind + "'");
}

BasisSet split_basis(const BasisSet& full, const SplitRule& rule) {
  const int t = full.T();
  const int n = full.n();
  int l = 0;
  if (rule.kind == SplitRule::Kind::fixed_l) {
    if (rule.L < 1 || rule.L > t)
      fail(ErrorCode::InvalidRule,
           "fixed L=" + std::to_string(rule.L) + " outside [1," + std::to_string(t) + "]");
    l = rule.L;
  } else {
    if (!(rule.fraction > 0.0) || rule.fraction > 1.0)
      fail(ErrorCode::InvalidRule,
           "variance fraction " + std::to_string(rule.fraction) + " outside (0,1]");
    double total = 0.0;
    for (double sv : full.singular_values) total += sv * sv;
    if (total <= 0.0) {
      l = 1;  // degenerate all-zero spectrum
    } else {
      double cum = 0.0;
      for (int k = 0; k < t; ++k) {
        cum += full.singular_values[k] * full.singular_values[k];
        if (cum >= rule.fraction * total - 1e-12 * total) {
          l = k + 1;
          break;
        }
      }
      if (l == 0) l = t;
    }
  }

  BasisSet out;
  out.singular_values = full.singular_values;
  out.rank_deficient = full.rank_deficient;
  out.phi = Matrix(l, n);
  out.psi = Matrix(t - l, n);
  for (int k = 0; k < t; ++k) {
    const auto src = full.column(k);
    double* dst = k < l ? out.phi.row(k).data() : out.psi.row(k - l).data();
    std::copy(src.begin(), src.end(), dst);
  }
  return out;
}

DeterministicFit fit_deterministic(const ResidualPair& residuals, const BasisSet& basis) {
  residuals.validate();
  DeterministicFit fit;
  const int m = static_cast<int>(basis.psi.rows());
  fit.nu = Matrix(2, m);
  if (m == 0) return fit;
  if (basis.n() != residuals.n())
    fail(ErrorCode::DimensionMismatch, "basis/residual pixel counts differ");

  const auto mean1 = time_mean(residuals.e1, residuals.t_train);
  const auto mean2 = time_mean(residuals.e2, residuals.t_train);
  for (int k = 0; k < m; ++k) {
    fit.nu(0, k) = kern::dot(basis.psi.row(k).data(), mean1.data(), mean1.size());
    fit.nu(1, k) = kern::dot(basis.psi.row(k).data(), mean2.data(), mean2.size());
  }
  return fit;
}

}  // namespace bgld
