#include "bgld/trend.hpp"

#include <algorithm>
#include <cmath>

#include "bgld/kernels.hpp"

namespace bgld {

int Climatology::row_of(int group_id) const {
  for (std::size_t i = 0; i < group_ids.size(); ++i)
    if (group_ids[i] == group_id) return static_cast<int>(i);
  return -1;
}

Climatology climatology(const Field& field, Grouping group,
                        const SeasonMap& seasons,
                        std::optional<YearMonth> window_end) {
  field.validate();
  seasons.validate();

  std::vector<int> times;
  for (int t = 0; t < field.time.size(); ++t)
    if (!window_end || !(field.time.entries[t] > *window_end)) times.push_back(t);
  if (times.empty())
    fail(ErrorCode::EmptyGroup, "training window contains no time entries");

  std::vector<int> ids;
  for (int t : times) {
    const int m = field.time.entries[t].month;
    const int id = group == Grouping::calendar_month ? m : seasons.season_of(m);
    if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());

  const std::size_t n = field.values.cols();
  Climatology clim;
  clim.grid = field.spec;
  clim.group = group;
  clim.seasons = seasons;
  clim.group_ids = ids;
  clim.means = Matrix(ids.size(), n);

  std::vector<int> counts(ids.size(), 0);
  for (int t : times) {
    const int m = field.time.entries[t].month;
    const int id = group == Grouping::calendar_month ? m : seasons.season_of(m);
    const int g = clim.row_of(id);
    kern::axpy(1.0, field.values.row(t).data(), clim.means.row(g).data(), n);
    ++counts[g];
  }
  for (std::size_t g = 0; g < ids.size(); ++g) {
    const double inv = 1.0 / counts[g];
    for (std::size_t p = 0; p < n; ++p) clim.means(g, p) *= inv;
  }
  return clim;
}

BilinearStencil BilinearStencil::build(const GridSpec& coarse, const GridSpec& fine,
                                       const BilinearOpts& opts) {
  coarse.validate();
  fine.validate();
  const auto cactive = coarse.active_index();

  BilinearStencil st;
  st.idx.reserve(4 * fine.n_active());
  st.w.reserve(4 * fine.n_active());

  // margin: half a coarse cell beyond the outermost centers, plus a sliver of
  // slack so boundary pixels are not lost to rounding
  const double margin = 0.5 + 1e-9;

  for (int r = 0; r < fine.nrows; ++r) {
    for (int c = 0; c < fine.ncols; ++c) {
      if (!fine.active(r, c)) continue;
      const double x = fine.lon_of_col(c);
      const double y = fine.lat_of_row(r);
      double fc = (x - coarse.lon0) / coarse.dlon;
      double fr = (y - coarse.lat0) / coarse.dlat;
      if (fc < -margin || fc > coarse.ncols - 1 + margin || fr < -margin ||
          fr > coarse.nrows - 1 + margin)
        fail(ErrorCode::OutOfDomain,
             "fine pixel (" + std::to_string(r) + "," + std::to_string(c) +
                 ") at lon=" + std::to_string(x) + " lat=" + std::to_string(y) +
                 " beyond the extrapolation margin");
      fc = std::clamp(fc, 0.0, static_cast<double>(coarse.ncols - 1));
      fr = std::clamp(fr, 0.0, static_cast<double>(coarse.nrows - 1));

      int j0 = std::min(static_cast<int>(std::floor(fc)), coarse.ncols - 2);
      int i0 = std::min(static_cast<int>(std::floor(fr)), coarse.nrows - 2);
      j0 = std::max(j0, 0);
      i0 = std::max(i0, 0);
      const int j1 = std::min(j0 + 1, coarse.ncols - 1);
      const int i1 = std::min(i0 + 1, coarse.nrows - 1);
      const double tx = coarse.ncols == 1 ? 0.0 : fc - j0;
      const double ty = coarse.nrows == 1 ? 0.0 : fr - i0;

      const int cells[4] = {i0 * coarse.ncols + j0, i0 * coarse.ncols + j1,
                            i1 * coarse.ncols + j0, i1 * coarse.ncols + j1};
      double wt[4] = {(1 - ty) * (1 - tx), (1 - ty) * tx, ty * (1 - tx), ty * tx};

      double wsum = 0.0;
      int navail = 0;
      for (int k = 0; k < 4; ++k) {
        if (cactive[cells[k]] < 0) {
          if (!opts.renormalize_masked)
            fail(ErrorCode::MissingNeighbor,
                 "coarse cell " + std::to_string(cells[k]) +
                     " needed by fine pixel (" + std::to_string(r) + "," +
                     std::to_string(c) + ") is masked");
          wt[k] = 0.0;
        } else {
          wsum += wt[k];
          ++navail;
        }
      }
      if (navail == 0)
        fail(ErrorCode::OutOfDomain,
             "all four coarse neighbors of fine pixel (" + std::to_string(r) +
                 "," + std::to_string(c) + ") are masked");
      if (wsum > 1e-12) {
        for (double& v : wt) v /= wsum;
      } else {
        // the only positively-weighted corners are masked; fall back to an
        // even split over the available neighbors
        for (int k = 0; k < 4; ++k)
          wt[k] = cactive[cells[k]] >= 0 ? 1.0 / navail : 0.0;
      }
      for (int k = 0; k < 4; ++k) {
        st.idx.push_back(cactive[cells[k]] >= 0 ? cactive[cells[k]] : 0);
        st.w.push_back(cactive[cells[k]] >= 0 ? wt[k] : 0.0);
      }
    }
  }
  return st;
}

void BilinearStencil::apply(std::span<const double> coarse_row,
                            std::span<double> fine_row) const {
  kern::stencil4_apply(idx.data(), w.data(), fine_row.size(), coarse_row.data(),
                       fine_row.data());
}

FineField interpolate_bilinear(const CoarseField& coarse, const GridSpec& fine_spec,
                               const BilinearOpts& opts) {
  const BilinearStencil st = BilinearStencil::build(coarse.spec, fine_spec, opts);
  FineField out;
  out.spec = fine_spec;
  out.spec.kind = GridKind::fine;
  out.time = coarse.time;
  out.values = Matrix(coarse.values.rows(), fine_spec.n_active());
  for (std::size_t t = 0; t < coarse.values.rows(); ++t)
    st.apply(coarse.values.row(t), out.values.row(t));
  return out;
}

FineField estimate_trend(const CoarseField& model, const Climatology& obs_clim,
                         const Climatology& model_clim, const GridSpec& fine_spec,
                         const BilinearOpts& opts) {
  if (obs_clim.group != model_clim.group ||
      (obs_clim.group == Grouping::season && obs_clim.seasons != model_clim.seasons))
    fail(ErrorCode::GroupMismatch, "climatologies use different groupings");
  if (!model_clim.grid.same_geometry(model.spec))
    fail(ErrorCode::GroupMismatch, "model climatology grid differs from model grid");
  if (!obs_clim.grid.same_geometry(fine_spec))
    fail(ErrorCode::GroupMismatch, "obs climatology grid differs from fine grid");

  const std::size_t nk = model.values.cols();
  CoarseField anomaly = model;
  for (int t = 0; t < model.time.size(); ++t) {
    const int m = model.time.entries[t].month;
    const int id = model_clim.group == Grouping::calendar_month
                       ? m
                       : model_clim.seasons.season_of(m);
    const int g = model_clim.row_of(id);
    if (g < 0)
      fail(ErrorCode::GroupMismatch,
           "model climatology has no group for month " +
               format_year_month(model.time.entries[t]));
    if (obs_clim.row_of(id) < 0)
      fail(ErrorCode::GroupMismatch,
           "obs climatology has no group for month " +
               format_year_month(model.time.entries[t]));
    kern::subtract(model.values.row(t).data(), model_clim.means.row(g).data(),
                   anomaly.values.row(t).data(), nk);
  }

  FineField trend = interpolate_bilinear(anomaly, fine_spec, opts);
  const std::size_t n = trend.values.cols();
  for (int t = 0; t < trend.time.size(); ++t) {
    const int m = trend.time.entries[t].month;
    const int id = obs_clim.group == Grouping::calendar_month
                       ? m
                       : obs_clim.seasons.season_of(m);
    kern::axpy(1.0, obs_clim.means.row(obs_clim.row_of(id)).data(),
               trend.values.row(t).data(), n);
  }
  return trend;
}

}  // namespace bgld
