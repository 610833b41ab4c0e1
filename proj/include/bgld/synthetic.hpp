#pragma once

#include "bgld/bgl.hpp"
#include "bgld/grid.hpp"

// Ground-truth scenario generator following the pipeline's own generative
// assumptions: an additive trend, a shared smooth stochastic basis with
// correlated per-level coefficient pairs, and white observation/model noise.
// The coarse field is the block average of a fine model-world field, so the
// downscaling chain has real cross-scale signal to recover. Also hosts the
// dense conditioning oracle used by tests and acceptance criteria.

namespace bgld {

struct ScenarioSpec {
  int coarse_ncols = 6, coarse_nrows = 6;
  int fine_factor = 4;          // fine pixels per coarse cell and axis
  int start_year = 2002;
  int train_years = 10;         // full calendar years from start_year
  int future_years = 3;         // directly after the training years
  int l_true = 6;               // stochastic basis columns
  double coeff_var = 8.0;       // per-level coefficient variance (level 1)
  double coeff_var_decay = 0.0; // var_l = coeff_var / (1 + decay * (l-1))
  double cross_corr = 0.9;      // corr(omega_1l, omega_2l)
  double tau2_model = 0.0025;
  double tau2_obs = 0.01;
  double basis_smooth_cells = 1.0;  // Gaussian sigma in coarse cells; 0 = white
  double bias_amp = 0.5;            // coarse-model bias field amplitude
  double warming_per_decade = 0.3;
  double seasonal_amp = 2.0;
  double mask_fraction = 0.0;       // randomly masked fine pixels
  std::uint64_t seed = 1;

  void validate() const;
};

struct ScenarioTruth {
  Matrix phi;                    // [L x n] orthonormal rows
  std::vector<Matrix> q_blocks;  // true per-level precisions
  std::vector<double> tau2;      // {model, obs}
  FineField fine_model;          // field whose block means are the coarse field
  SeasonMap seasons;
};

struct SyntheticData {
  CoarseField coarse;       // training + future months
  FineField obs;            // training months
  FineField truth_future;   // future months, for hold-out scoring
  ScenarioTruth truth;
};

SyntheticData generate(const ScenarioSpec& spec);

// Block mean of the fine field over each coarse cell (cells with no active
// fine pixel are masked in the result).
CoarseField block_average(const FineField& fine, const GridSpec& coarse_spec);

// Exact joint-Gaussian conditioning of (E1, omega2) by Schur complement on a
// dense n x n covariance; reference for the Stage-2 prediction path (small n).
struct JointSpec {
  Matrix phi;                    // [L x n]
  std::vector<Matrix> q_blocks;  // L of 2x2
  double tau2_1 = 1.0;
  double tau2_2 = 1.0;
};

struct ConditionalMoments {
  std::vector<double> mean;  // L
  Matrix cov;                // L x L
};

ConditionalMoments dense_conditional_oracle(const JointSpec& joint,
                                            std::span<const double> e1);

}  // namespace bgld
