#include "bgld/synthetic.hpp"

#include <cmath>
#include <numbers>

#include "bgld/kernels.hpp"
#include "bgld/rng.hpp"
#include "bgld/trend.hpp"

namespace bgld {

void ScenarioSpec::validate() const {
  if (coarse_ncols < 2 || coarse_nrows < 2)
    fail(ErrorCode::MalformedInput, "coarse grid must be at least 2x2");
  if (fine_factor < 1) fail(ErrorCode::MalformedInput, "fine_factor < 1");
  if (train_years < 1 || future_years < 0)
    fail(ErrorCode::MalformedInput, "year counts");
  if (l_true < 1) fail(ErrorCode::MalformedInput, "l_true < 1");
  if (!(coeff_var > 0.0) || !(tau2_model > 0.0) || !(tau2_obs > 0.0))
    fail(ErrorCode::MalformedInput, "variance parameters must be positive");
  if (cross_corr <= -1.0 || cross_corr >= 1.0)
    fail(ErrorCode::MalformedInput, "cross_corr must lie in (-1, 1)");
  if (mask_fraction < 0.0 || mask_fraction > 0.5)
    fail(ErrorCode::MalformedInput, "mask_fraction outside [0, 0.5]");
}

CoarseField block_average(const FineField& fine, const GridSpec& coarse_spec) {
  const int f_rows = fine.spec.nrows / coarse_spec.nrows;
  const int f_cols = fine.spec.ncols / coarse_spec.ncols;
  if (f_rows * coarse_spec.nrows != fine.spec.nrows ||
      f_cols * coarse_spec.ncols != fine.spec.ncols)
    fail(ErrorCode::DimensionMismatch, "fine grid does not tile the coarse grid");

  const auto fidx = fine.spec.active_index();
  // per coarse cell: list of fine active indices, row-major within the cell
  std::vector<std::vector<std::int32_t>> members(coarse_spec.n_cells());
  for (int r = 0; r < fine.spec.nrows; ++r)
    for (int c = 0; c < fine.spec.ncols; ++c) {
      const std::int32_t a = fidx[static_cast<std::size_t>(r) * fine.spec.ncols + c];
      if (a < 0) continue;
      members[(r / f_rows) * coarse_spec.ncols + (c / f_cols)].push_back(a);
    }

  CoarseField out;
  out.spec = coarse_spec;
  out.spec.kind = GridKind::coarse;
  out.spec.mask.assign(coarse_spec.n_cells(), 0);
  for (int k = 0; k < coarse_spec.n_cells(); ++k)
    out.spec.mask[k] = members[k].empty() ? 0 : 1;
  out.time = fine.time;
  out.values = Matrix(fine.values.rows(), out.spec.n_active());
  for (std::size_t t = 0; t < fine.values.rows(); ++t) {
    const double* src = fine.values.row(t).data();
    std::size_t a = 0;
    for (int k = 0; k < coarse_spec.n_cells(); ++k) {
      if (members[k].empty()) continue;
      double s = 0.0;
      for (std::int32_t i : members[k]) s += src[i];
      out.values(t, a++) = s / members[k].size();
    }
  }
  return out;
}

namespace {

// separable Gaussian blur on the full fine lattice (reflecting borders)
void blur_lattice(std::vector<double>& v, int rows, int cols, double sigma) {
  if (sigma <= 0.0) return;
  const int half = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * half + 1);
  double ksum = 0.0;
  for (int k = -half; k <= half; ++k) {
    kernel[k + half] = std::exp(-0.5 * (k / sigma) * (k / sigma));
    ksum += kernel[k + half];
  }
  for (double& k : kernel) k /= ksum;

  std::vector<double> tmp(v.size());
  auto reflect = [](int i, int n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
    return i;
  };
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double s = 0.0;
      for (int k = -half; k <= half; ++k)
        s += kernel[k + half] * v[static_cast<std::size_t>(r) * cols + reflect(c + k, cols)];
      tmp[static_cast<std::size_t>(r) * cols + c] = s;
    }
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) {
      double s = 0.0;
      for (int k = -half; k <= half; ++k)
        s += kernel[k + half] * tmp[static_cast<std::size_t>(reflect(r + k, rows)) * cols + c];
      v[static_cast<std::size_t>(r) * cols + c] = s;
    }
}

}  // namespace

SyntheticData generate(const ScenarioSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  const int f = spec.fine_factor;
  const int fine_rows = spec.coarse_nrows * f;
  const int fine_cols = spec.coarse_ncols * f;

  GridSpec coarse_spec;
  coarse_spec.kind = GridKind::coarse;
  coarse_spec.lon0 = 140.0;
  coarse_spec.lat0 = -10.0;
  coarse_spec.dlon = 1.0;
  coarse_spec.dlat = -1.0;
  coarse_spec.ncols = spec.coarse_ncols;
  coarse_spec.nrows = spec.coarse_nrows;

  GridSpec fine_spec;
  fine_spec.kind = GridKind::fine;
  fine_spec.dlon = 1.0 / f;
  fine_spec.dlat = -1.0 / f;
  fine_spec.lon0 = coarse_spec.lon0 - 0.5 + 0.5 / f;
  fine_spec.lat0 = coarse_spec.lat0 + 0.5 - 0.5 / f;
  fine_spec.ncols = fine_cols;
  fine_spec.nrows = fine_rows;
  if (spec.mask_fraction > 0.0) {
    fine_spec.mask.assign(fine_spec.n_cells(), 1);
    for (auto& m : fine_spec.mask)
      if (rng.uniform() < spec.mask_fraction) m = 0;
  }
  const int n = fine_spec.n_active();
  const auto active = fine_spec.active_cells();

  // months: training years then future years, all calendar months
  TimeIndex all_time;
  const int total_years = spec.train_years + spec.future_years;
  for (int y = 0; y < total_years; ++y)
    for (int m = 1; m <= 12; ++m)
      all_time.entries.push_back({spec.start_year + y, m});
  const int t_train = 12 * spec.train_years;
  const int t_all = all_time.size();

  // smooth orthonormal basis: blur seeded Gaussians on the lattice, restrict
  // to active pixels, Gram-Schmidt
  Matrix phi(spec.l_true, n);
  {
    std::vector<double> lattice(fine_spec.n_cells());
    for (int l = 0; l < spec.l_true; ++l) {
      for (double& v : lattice) v = rng.normal();
      blur_lattice(lattice, fine_rows, fine_cols, spec.basis_smooth_cells * f);
      for (int p = 0; p < n; ++p) phi(l, p) = lattice[active[p]];
    }
    orthonormalize_rows(phi);
  }

  // true per-level precision: covariance var_l * [[1, r], [r, 1]]
  std::vector<Matrix> q_blocks;
  std::vector<double> var_level(spec.l_true);
  for (int l = 0; l < spec.l_true; ++l) {
    const double var = spec.coeff_var / (1.0 + spec.coeff_var_decay * l);
    var_level[l] = var;
    const double r = spec.cross_corr;
    Matrix q(2, 2);
    const double s = 1.0 / (var * (1.0 - r * r));
    q(0, 0) = s;
    q(1, 1) = s;
    q(0, 1) = -r * s;
    q(1, 0) = -r * s;
    q_blocks.push_back(q);
  }

  // deterministic structure on normalized coordinates
  std::vector<double> base(n), bias(n), seas_gain(n);
  for (int p = 0; p < n; ++p) {
    const int r = active[p] / fine_cols;
    const int c = active[p] % fine_cols;
    const double u = (c + 0.5) / fine_cols;
    const double v = (r + 0.5) / fine_rows;
    base[p] = 20.0 + 3.0 * u + 2.0 * v - 1.5 * u * v + 0.5 * u * u;
    bias[p] = spec.bias_amp * (u - v + 0.3 + 0.4 * u * v);
    seas_gain[p] = 0.75 + 0.5 * u;
  }
  auto seasonal = [&](int month) {
    return std::cos(2.0 * std::numbers::pi * (month - 1) / 12.0 - 0.3);
  };
  auto warming = [&](YearMonth ym) {
    const double years = (ym.year - spec.start_year) + (ym.month - 0.5) / 12.0;
    return spec.warming_per_decade * years / 10.0;
  };

  // model-world fine field and the correlated observation residual parts
  SyntheticData out;
  out.truth.phi = phi;
  out.truth.q_blocks = q_blocks;
  out.truth.tau2 = {spec.tau2_model, spec.tau2_obs};
  out.truth.seasons = SeasonMap::southern_default();

  FineField fine_model;
  fine_model.spec = fine_spec;
  fine_model.time = all_time;
  fine_model.values = Matrix(t_all, n);
  Matrix obs_resid(t_all, n);  // Phi omega2 + delta2, kept for obs assembly
  const double tau1 = std::sqrt(spec.tau2_model);
  const double tau2 = std::sqrt(spec.tau2_obs);
  for (int t = 0; t < t_all; ++t) {
    const YearMonth ym = all_time.entries[t];
    const double g = warming(ym);
    const double cyc = seasonal(ym.month);
    double* mrow = fine_model.values.row(t).data();
    for (int p = 0; p < n; ++p)
      mrow[p] = base[p] + spec.seasonal_amp * seas_gain[p] * cyc + bias[p] + g;
    double* orow = obs_resid.row(t).data();
    for (int l = 0; l < spec.l_true; ++l) {
      const double a = std::sqrt(var_level[l]);
      const double z1 = rng.normal();
      const double z2 = rng.normal();
      const double w1 = a * z1;
      const double w2 = a * (spec.cross_corr * z1 +
                             std::sqrt(1.0 - spec.cross_corr * spec.cross_corr) * z2);
      kern::axpy(w1, phi.row(l).data(), mrow, n);
      kern::axpy(w2, phi.row(l).data(), orow, n);
    }
    for (int p = 0; p < n; ++p) {
      mrow[p] += tau1 * rng.normal();
      orow[p] += tau2 * rng.normal();
    }
  }

  out.coarse = block_average(fine_model, coarse_spec);
  out.truth.fine_model = std::move(fine_model);

  // expected coarse climatology per calendar month over the training years
  // (deterministic part only)
  Matrix clim_true(12, out.coarse.spec.n_active());
  {
    FineField det_part;
    det_part.spec = fine_spec;
    Matrix det_rows(12, n);
    for (int m = 1; m <= 12; ++m) {
      double gbar = 0.0;
      for (int y = 0; y < spec.train_years; ++y)
        gbar += warming({spec.start_year + y, m});
      gbar /= spec.train_years;
      double* row = det_rows.row(m - 1).data();
      const double cyc = seasonal(m);
      for (int p = 0; p < n; ++p)
        row[p] = base[p] + spec.seasonal_amp * seas_gain[p] * cyc + bias[p] + gbar;
    }
    det_part.values = std::move(det_rows);
    for (int m = 1; m <= 12; ++m)
      det_part.time.entries.push_back({spec.start_year, m});
    const CoarseField coarse_det = block_average(det_part, coarse_spec);
    clim_true = coarse_det.values;
  }

  // obs = true obs climatology + interpolated coarse anomaly + obs residual
  const BilinearStencil stencil =
      BilinearStencil::build(out.coarse.spec, fine_spec);
  Matrix anomaly_row(1, out.coarse.spec.n_active());
  std::vector<double> interp(n);
  FineField obs;
  obs.spec = fine_spec;
  FineField future;
  future.spec = fine_spec;
  obs.values = Matrix(t_train, n);
  future.values = Matrix(t_all - t_train, n);
  for (int t = 0; t < t_all; ++t) {
    const YearMonth ym = all_time.entries[t];
    double gbar = 0.0;
    for (int y = 0; y < spec.train_years; ++y)
      gbar += warming({spec.start_year + y, ym.month});
    gbar /= spec.train_years;
    kern::subtract(out.coarse.values.row(t).data(),
                   clim_true.row(ym.month - 1).data(), anomaly_row.row(0).data(),
                   out.coarse.spec.n_active());
    stencil.apply(anomaly_row.row(0), {interp.data(), interp.size()});
    const double cyc = seasonal(ym.month);
    double* dst = t < t_train ? obs.values.row(t).data()
                              : future.values.row(t - t_train).data();
    const double* orow = obs_resid.row(t).data();
    for (int p = 0; p < n; ++p)
      dst[p] = base[p] + spec.seasonal_amp * seas_gain[p] * cyc + gbar +
               interp[p] + orow[p];
    if (t < t_train)
      obs.time.entries.push_back(ym);
    else
      future.time.entries.push_back(ym);
  }
  out.obs = std::move(obs);
  out.truth_future = std::move(future);
  return out;
}

ConditionalMoments dense_conditional_oracle(const JointSpec& joint,
                                            std::span<const double> e1) {
  const int levels = static_cast<int>(joint.q_blocks.size());
  const int n = static_cast<int>(joint.phi.cols());
  if (e1.size() != static_cast<std::size_t>(n))
    fail(ErrorCode::DimensionMismatch, "e1 length != n");

  // Sigma1 = sum_l (Qinv_l)_11 phi_l phi_l^T + tau1^2 I
  Matrix sigma1(n, n);
  std::vector<double> v11(levels), v21(levels), v22(levels);
  for (int l = 0; l < levels; ++l) {
    const Matrix qinv = spd_inverse(joint.q_blocks[l]);
    v11[l] = qinv(0, 0);
    v21[l] = qinv(1, 0);
    v22[l] = qinv(1, 1);
    const double* phi = joint.phi.row(l).data();
    for (int a = 0; a < n; ++a)
      kern::axpy(v11[l] * phi[a], phi, sigma1.row(a).data(), n);
  }
  for (int a = 0; a < n; ++a) sigma1(a, a) += joint.tau2_1;
  cholesky_inplace(sigma1);

  // cross covariance rows: Cov(omega2_l, E1) = (Qinv_l)_21 phi_l
  ConditionalMoments out;
  out.mean.resize(levels);
  out.cov = Matrix(levels, levels);
  std::vector<double> rhs(n);
  Matrix solved(levels, n);
  for (int l = 0; l < levels; ++l) {
    const double* phi = joint.phi.row(l).data();
    for (int a = 0; a < n; ++a) rhs[a] = v21[l] * phi[a];
    cholesky_solve(sigma1, rhs);
    std::copy(rhs.begin(), rhs.end(), solved.row(l).data());
  }
  for (int l = 0; l < levels; ++l) {
    out.mean[l] = kern::dot(solved.row(l).data(), e1.data(), n);
    for (int m = 0; m < levels; ++m) {
      const double* phim = joint.phi.row(m).data();
      double cross = 0.0;
      for (int a = 0; a < n; ++a) cross += solved.row(l).data()[a] * v21[m] * phim[a];
      out.cov(l, m) = (l == m ? v22[l] : 0.0) - cross;
    }
  }
  // symmetrize
  for (int l = 0; l < levels; ++l)
    for (int m = 0; m < l; ++m) {
      const double v = 0.5 * (out.cov(l, m) + out.cov(m, l));
      out.cov(l, m) = v;
      out.cov(m, l) = v;
    }
  return out;
}

}  // namespace bgld
