#include "bgld/predict.hpp"

#include <cmath>

#include "bgld/kernels.hpp"

namespace bgld {

namespace {

void check_p2(const BglModel& model) {
  if (!model.basis) fail(ErrorCode::ModelMissing, "model has no basis");
  if (model.levels() > 0 && model.p() != 2)
    fail(ErrorCode::DimensionMismatch, "prediction requires p = 2 processes");
  if (model.tau2.size() != 2)
    fail(ErrorCode::DimensionMismatch, "prediction requires 2 noise variances");
}

// prior variance of omega1 at level l: (Q_l^-1)_11
double prior_var1(const Matrix& q) {
  const double det = q(0, 0) * q(1, 1) - q(0, 1) * q(1, 0);
  if (!(det > 0.0) || !(q(1, 1) > 0.0))
    fail(ErrorCode::NotPositiveDefinite, "Q block not SPD in prediction");
  return q(1, 1) / det;
}

}  // namespace

std::vector<double> gls_omega1(std::span<const double> e1, const BglModel& model) {
  check_p2(model);
  const BasisSet& basis = *model.basis;
  if (e1.size() != static_cast<std::size_t>(basis.n()))
    fail(ErrorCode::DimensionMismatch, "e1 length != active pixel count");
  for (double v : e1)
    if (!std::isfinite(v)) fail(ErrorCode::NonFiniteValue, "e1 residual");

  // Sigma1 = sum_l v_l phi_l phi_l^T + tau1^2 I; each phi_l is an eigenvector
  // with eigenvalue v_l + tau1^2, so the GLS solve reduces to projections.
  std::vector<double> omega1(model.levels());
  for (int l = 0; l < model.levels(); ++l) {
    if (!(prior_var1(model.q_blocks[l]) + model.tau2[0] > 0.0))
      fail(ErrorCode::SingularSystem, "Sigma1 singular at level " + std::to_string(l));
    omega1[l] = kern::dot(basis.phi.row(l).data(), e1.data(), e1.size());
  }
  return omega1;
}

std::vector<double> gls_variance(const BglModel& model) {
  check_p2(model);
  std::vector<double> var(model.levels());
  for (int l = 0; l < model.levels(); ++l)
    var[l] = prior_var1(model.q_blocks[l]) + model.tau2[0];
  return var;
}

Omega1Posterior omega1_posterior(std::span<const double> e1, const BglModel& model) {
  Omega1Posterior post;
  post.mean = gls_omega1(e1, model);
  post.var.resize(model.levels());
  const double s = model.tau2[0];  // sampling variance of the GLS coordinate
  for (int l = 0; l < model.levels(); ++l) {
    const double v = prior_var1(model.q_blocks[l]);
    const double shrink = v / (v + s);
    post.mean[l] *= shrink;
    post.var[l] = v * s / (v + s);
  }
  return post;
}

CoefficientPrediction condition_omega2(std::span<const double> omega1_mean,
                                       std::span<const double> omega1_var,
                                       const BglModel& model) {
  check_p2(model);
  const int levels = model.levels();
  if (omega1_mean.size() != static_cast<std::size_t>(levels) ||
      omega1_var.size() != static_cast<std::size_t>(levels))
    fail(ErrorCode::DimensionMismatch, "omega1 moments length != L");

  CoefficientPrediction pred;
  pred.omega2_mean.resize(levels);
  pred.omega2_var.resize(levels);
  for (int l = 0; l < levels; ++l) {
    const Matrix& q = model.q_blocks[l];
    if (!(q(1, 1) > 0.0))
      fail(ErrorCode::NotPositiveDefinite, "Q_22 <= 0 at level " + std::to_string(l));
    const double beta = -q(1, 0) / q(1, 1);
    pred.omega2_mean[l] = beta * omega1_mean[l];
    pred.omega2_var[l] = 1.0 / q(1, 1) + beta * beta * omega1_var[l];
  }
  return pred;
}

std::vector<double> predict_e2(std::span<const double> e1_row, const BglModel& model) {
  const Omega1Posterior post = omega1_posterior(e1_row, model);
  const CoefficientPrediction pred = condition_omega2(post.mean, post.var, model);
  const BasisSet& basis = *model.basis;
  std::vector<double> e2_hat(basis.n(), 0.0);
  for (int l = 0; l < model.levels(); ++l)
    kern::axpy(pred.omega2_mean[l], basis.phi.row(l).data(), e2_hat.data(),
               e2_hat.size());
  if (!model.det.empty()) {
    for (std::size_t k = 0; k < basis.psi.rows(); ++k)
      kern::axpy(model.det.nu(1, k), basis.psi.row(k).data(), e2_hat.data(),
                 e2_hat.size());
  }
  return e2_hat;
}

MonthPrediction downscale_month(std::span<const double> trend_row,
                                std::span<const double> e1_row,
                                const BglModel& model, bool nugget_in_sd) {
  check_p2(model);
  const BasisSet& basis = *model.basis;
  const std::size_t n = basis.n();
  if (trend_row.size() != n)
    fail(ErrorCode::DimensionMismatch, "trend row length != active pixel count");

  const Omega1Posterior post = omega1_posterior(e1_row, model);

  MonthPrediction out;
  out.coeffs = condition_omega2(post.mean, post.var, model);
  out.mean.assign(trend_row.begin(), trend_row.end());
  out.sd.assign(n, nugget_in_sd ? model.tau2[1] : 0.0);
  for (int l = 0; l < model.levels(); ++l) {
    kern::axpy(out.coeffs.omega2_mean[l], basis.phi.row(l).data(), out.mean.data(), n);
    kern::sq_weight_accum(out.coeffs.omega2_var[l], basis.phi.row(l).data(),
                          out.sd.data(), n);
  }
  if (!model.det.empty()) {
    for (std::size_t k = 0; k < basis.psi.rows(); ++k)
      kern::axpy(model.det.nu(1, k), basis.psi.row(k).data(), out.mean.data(), n);
  }
  for (double& v : out.sd) v = std::sqrt(v);
  return out;
}

}  // namespace bgld
