#pragma once

#include <optional>

#include "bgld/grid.hpp"

// Stage 1: large-scale mean component. Per-group temporal means, bilinear
// interpolation of coarse anomalies to the fine grid, and the trend
// composition (obs climatology + interpolated model anomaly). Stage-1-only
// prediction is exactly this trend.

namespace bgld {

enum class Grouping { calendar_month, season };

struct Climatology {
  GridSpec grid;
  Grouping group = Grouping::calendar_month;
  SeasonMap seasons;            // relevant when group == season
  std::vector<int> group_ids;   // months 1..12 or season ids 0..3, ascending
  Matrix means;                 // [group_ids.size() x n_active]

  int row_of(int group_id) const;  // -1 if absent
  bool operator==(const Climatology&) const = default;
};

// Per-group temporal means over entries <= window_end (all entries when
// unset). Throws EmptyGroup when the window leaves nothing to average.
Climatology climatology(const Field& field, Grouping group,
                        const SeasonMap& seasons,
                        std::optional<YearMonth> window_end = {});

struct BilinearOpts {
  // Masked neighbors: renormalize the bilinear weights over the unmasked ones
  // (coastline rule). When off, any masked needed neighbor is an error.
  bool renormalize_masked = true;
};

// Precomputed 4-point interpolation stencil from a coarse grid onto the
// active pixels of a fine grid. Fine pixels may sit up to half a coarse cell
// outside the outermost cell centers (clamped); farther is OutOfDomain.
struct BilinearStencil {
  std::vector<std::int32_t> idx;  // 4 per fine active pixel, coarse active index
  std::vector<double> w;          // 4 per fine active pixel

  static BilinearStencil build(const GridSpec& coarse, const GridSpec& fine,
                               const BilinearOpts& opts = {});
  void apply(std::span<const double> coarse_row, std::span<double> fine_row) const;
};

FineField interpolate_bilinear(const CoarseField& coarse, const GridSpec& fine_spec,
                               const BilinearOpts& opts = {});

// mu_hat(t) = obs_clim[group(t)] + Interp(model(t) - model_clim[group(t)])
// for every time entry of `model` (including months past the training
// window).
FineField estimate_trend(const CoarseField& model, const Climatology& obs_clim,
                         const Climatology& model_clim, const GridSpec& fine_spec,
                         const BilinearOpts& opts = {});

}  // namespace bgld
