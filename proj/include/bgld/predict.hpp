#pragma once

#include "bgld/bgl.hpp"

// Stage-2 prediction: estimate the model-side coefficients from a future
// month's model residual, condition the observation-side coefficients on them
// level by level, and assemble the downscaled field with pointwise
// uncertainty.

namespace bgld {

struct CoefficientPrediction {
  std::vector<double> omega2_mean;  // L
  std::vector<double> omega2_var;   // L, positive, <= prior variance
  YearMonth month{};
};

// GLS estimate (Phi^T Sigma1^-1 Phi)^-1 Phi^T Sigma1^-1 e1. The basis columns
// are eigenvectors of Sigma1, so the weighted solve collapses to L
// independent projections; no n x n matrix is formed.
std::vector<double> gls_omega1(std::span<const double> e1, const BglModel& model);

// Diagonal of (Phi^T Sigma1^-1 Phi)^-1: the marginal variance of the GLS
// coordinates, prior + noise per level.
std::vector<double> gls_variance(const BglModel& model);

// Conditional distribution of omega1 given the observed model residual:
// the GLS coordinate carries noise tau1^2, so the posterior shrinks it by
// v/(v + tau1^2) with matching variance. This is what the law-of-total-
// expectation step consumes.
struct Omega1Posterior {
  std::vector<double> mean;  // L
  std::vector<double> var;   // L
};
Omega1Posterior omega1_posterior(std::span<const double> e1, const BglModel& model);

// Per-level bivariate conditioning composed with the supplied distribution of
// omega1 given the data: mean = -(Q_22)^-1 Q_21 * omega1_mean, variance =
// (Q_22)^-1 + ((Q_22)^-1 Q_21)^2 * omega1_var.
CoefficientPrediction condition_omega2(std::span<const double> omega1_mean,
                                       std::span<const double> omega1_var,
                                       const BglModel& model);

struct MonthPrediction {
  std::vector<double> mean;  // n: trend + Phi omega2_mean + psi nu2
  std::vector<double> sd;    // n: sqrt(sum_l phi_l^2 var_l [+ tau2^2])
  CoefficientPrediction coeffs;
};

MonthPrediction downscale_month(std::span<const double> trend_row,
                                std::span<const double> e1_row,
                                const BglModel& model, bool nugget_in_sd = true);

// Residual-only predictive mean Phi omega2_mean + psi nu2 (cross-validation
// scoring path).
std::vector<double> predict_e2(std::span<const double> e1_row, const BglModel& model);

}  // namespace bgld
