#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bgld/errors.hpp"
#include "bgld/linalg.hpp"

namespace bgld {

enum class GridKind { coarse, fine };

// Regular lon/lat cell-center grid with a boolean activity mask. (lon0, lat0)
// is the center of cell (row 0, col 0); dlat may be negative (north-up grids)
// or positive. Active-cell order is row-major with masked cells skipped, and
// that order is the payload order everywhere.
struct GridSpec {
  GridKind kind = GridKind::fine;
  double lon0 = 0.0, lat0 = 0.0;
  double dlon = 1.0, dlat = 1.0;
  int ncols = 1, nrows = 1;
  std::vector<std::uint8_t> mask;  // ncols*nrows, 1 = active; empty means all active

  int n_cells() const { return ncols * nrows; }
  int n_active() const;
  bool active(int r, int c) const {
    return mask.empty() || mask[static_cast<std::size_t>(r) * ncols + c] != 0;
  }
  double lon_of_col(int c) const { return lon0 + dlon * c; }
  double lat_of_row(int r) const { return lat0 + dlat * r; }

  // flat row-major cell index -> active index, -1 for masked cells
  std::vector<std::int32_t> active_index() const;
  // active index -> flat row-major cell index
  std::vector<std::int32_t> active_cells() const;

  void validate() const;
  bool same_geometry(const GridSpec& o) const;

  bool operator==(const GridSpec&) const = default;
};

struct YearMonth {
  int year = 0;
  int month = 1;  // 1..12

  auto operator<=>(const YearMonth&) const = default;
};

std::string format_year_month(YearMonth ym);
YearMonth parse_year_month(const std::string& s);  // throws MalformedInput

// Fixed season names in reporting order; the month assignment is
// configurable. Default is the Southern-Hemisphere split with summer
// spanning the year boundary (Dec-Feb).
inline constexpr std::array<const char*, 4> kSeasonNames = {"summer", "autumn",
                                                            "winter", "spring"};

struct SeasonMap {
  std::array<int, 12> season_of_month{};  // index month-1 -> season id 0..3

  static SeasonMap southern_default();
  int season_of(int month) const { return season_of_month[month - 1]; }
  void validate() const;  // every season exactly 3 months
  std::string to_string() const;
  static SeasonMap parse(const std::string& s);

  bool operator==(const SeasonMap&) const = default;
};

struct TimeIndex {
  std::vector<YearMonth> entries;  // strictly increasing

  int size() const { return static_cast<int>(entries.size()); }
  int find(YearMonth ym) const;  // -1 if absent
  void validate() const;

  bool operator==(const TimeIndex&) const = default;
};

// Gridded space-time values: one row per time entry, one column per active
// cell. CoarseField / FineField are the same container tagged by spec.kind.
struct Field {
  GridSpec spec;
  TimeIndex time;
  Matrix values;  // [ntime x n_active]

  void validate() const;

  bool operator==(const Field&) const = default;
};

using CoarseField = Field;
using FineField = Field;

}  // namespace bgld
