#include "bgld/grid.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

namespace bgld {

int GridSpec::n_active() const {
  if (mask.empty()) return n_cells();
  int n = 0;
  for (auto m : mask) n += m != 0;
  return n;
}

std::vector<std::int32_t> GridSpec::active_index() const {
  std::vector<std::int32_t> idx(n_cells(), -1);
  std::int32_t a = 0;
  for (int i = 0; i < n_cells(); ++i)
    if (mask.empty() || mask[i]) idx[i] = a++;
  return idx;
}

std::vector<std::int32_t> GridSpec::active_cells() const {
  std::vector<std::int32_t> cells;
  cells.reserve(n_active());
  for (int i = 0; i < n_cells(); ++i)
    if (mask.empty() || mask[i]) cells.push_back(i);
  return cells;
}

void GridSpec::validate() const {
  if (!(dlon > 0.0)) fail(ErrorCode::MalformedInput, "dlon must be > 0");
  if (dlat == 0.0) fail(ErrorCode::MalformedInput, "dlat must be nonzero");
  if (ncols < 1 || nrows < 1)
    fail(ErrorCode::MalformedInput, "grid must have at least one cell");
  if (!mask.empty() && static_cast<int>(mask.size()) != n_cells())
    fail(ErrorCode::DimensionMismatch,
         "mask length " + std::to_string(mask.size()) + " != ncols*nrows " +
             std::to_string(n_cells()));
  if (!std::isfinite(lon0) || !std::isfinite(lat0) || !std::isfinite(dlon) ||
      !std::isfinite(dlat))
    fail(ErrorCode::NonFiniteValue, "grid origin/step");
}

bool GridSpec::same_geometry(const GridSpec& o) const {
  return lon0 == o.lon0 && lat0 == o.lat0 && dlon == o.dlon && dlat == o.dlat &&
         ncols == o.ncols && nrows == o.nrows && mask == o.mask;
}

std::string format_year_month(YearMonth ym) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d", ym.year, ym.month);
  return buf;
}

YearMonth parse_year_month(const std::string& s) {
  if (s.size() != 7 || s[4] != '-')
    fail(ErrorCode::MalformedInput, "expected YYYY-MM, got '" + s + "'");
  YearMonth ym;
  auto r1 = std::from_chars(s.data(), s.data() + 4, ym.year);
  auto r2 = std::from_chars(s.data() + 5, s.data() + 7, ym.month);
  if (r1.ec != std::errc{} || r2.ec != std::errc{} || r1.ptr != s.data() + 4 ||
      r2.ptr != s.data() + 7)
    fail(ErrorCode::MalformedInput, "expected YYYY-MM, got '" + s + "'");
  if (ym.month < 1 || ym.month > 12)
    fail(ErrorCode::MalformedInput, "month out of range in '" + s + "'");
  return ym;
}

SeasonMap SeasonMap::southern_default() {
  SeasonMap m;
  // summer Dec-Feb, autumn Mar-May, winter Jun-Aug, spring Sep-Nov
  const int by_month[12] = {0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3, 0};
  for (int i = 0; i < 12; ++i) m.season_of_month[i] = by_month[i];
  return m;
}

void SeasonMap::validate() const {
  std::array<int, 4> count{};
  for (int i = 0; i < 12; ++i) {
    const int s = season_of_month[i];
    if (s < 0 || s > 3)
      fail(ErrorCode::MalformedInput,
           "month " + std::to_string(i + 1) + " has invalid season id");
    ++count[s];
  }
  for (int s = 0; s < 4; ++s)
    if (count[s] != 3)
      fail(ErrorCode::MalformedInput, std::string(kSeasonNames[s]) +
                                          " has " + std::to_string(count[s]) +
                                          " months, expected 3");
}

std::string SeasonMap::to_string() const {
  std::string out;
  for (int s = 0; s < 4; ++s) {
    if (s) out += ';';
    out += kSeasonNames[s];
    out += ':';
    bool first = true;
    for (int m = 1; m <= 12; ++m) {
      if (season_of_month[m - 1] != s) continue;
      if (!first) out += ',';
      out += std::to_string(m);
      first = false;
    }
  }
  return out;
}

SeasonMap SeasonMap::parse(const std::string& s) {
  SeasonMap m;
  m.season_of_month.fill(-1);
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t semi = s.find(';', pos);
    if (semi == std::string::npos) semi = s.size();
    const std::string part = s.substr(pos, semi - pos);
    const std::size_t colon = part.find(':');
    if (colon == std::string::npos)
      fail(ErrorCode::MalformedInput, "season entry '" + part + "'");
    const std::string name = part.substr(0, colon);
    int sid = -1;
    for (int k = 0; k < 4; ++k)
      if (name == kSeasonNames[k]) sid = k;
    if (sid < 0) fail(ErrorCode::MalformedInput, "unknown season '" + name + "'");
    std::size_t p = colon + 1;
    while (p < part.size()) {
      std::size_t comma = part.find(',', p);
      if (comma == std::string::npos) comma = part.size();
      int month = 0;
      auto rc = std::from_chars(part.data() + p, part.data() + comma, month);
      if (rc.ec != std::errc{} || month < 1 || month > 12)
        fail(ErrorCode::MalformedInput, "bad month in '" + part + "'");
      if (m.season_of_month[month - 1] != -1)
        fail(ErrorCode::MalformedInput,
             "month " + std::to_string(month) + " assigned twice");
      m.season_of_month[month - 1] = sid;
      p = comma + 1;
    }
    pos = semi + 1;
  }
  for (int i = 0; i < 12; ++i)
    if (m.season_of_month[i] < 0)
      fail(ErrorCode::MalformedInput,
           "month " + std::to_string(i + 1) + " unassigned");
  m.validate();
  return m;
}

int TimeIndex::find(YearMonth ym) const {
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i] == ym) return static_cast<int>(i);
  return -1;
}

void TimeIndex::validate() const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].month < 1 || entries[i].month > 12)
      fail(ErrorCode::MalformedInput,
           "entry " + std::to_string(i) + " month out of range");
    if (i > 0 && !(entries[i - 1] < entries[i]))
      fail(ErrorCode::MalformedInput,
           "time entries not strictly increasing at " + std::to_string(i));
  }
}

void Field::validate() const {
  spec.validate();
  time.validate();
  const std::size_t n = static_cast<std::size_t>(spec.n_active());
  if (values.rows() != time.entries.size() || values.cols() != n)
    fail(ErrorCode::DimensionMismatch,
         "values " + std::to_string(values.rows()) + "x" +
             std::to_string(values.cols()) + ", expected " +
             std::to_string(time.entries.size()) + "x" + std::to_string(n));
  for (std::size_t t = 0; t < values.rows(); ++t)
    for (std::size_t p = 0; p < values.cols(); ++p)
      if (!std::isfinite(values(t, p)))
        fail(ErrorCode::NonFiniteValue,
             "value at time " + format_year_month(time.entries[t]) +
                 ", active pixel " + std::to_string(p));
}

const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::MalformedInput: return "MalformedInput";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::EmptyGroup: return "EmptyGroup";
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::MissingNeighbor: return "MissingNeighbor";
    case ErrorCode::GroupMismatch: return "GroupMismatch";
    case ErrorCode::InvalidRule: return "InvalidRule";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::WindowTooLarge: return "WindowTooLarge";
    case ErrorCode::MaskedPixel: return "MaskedPixel";
    case ErrorCode::ModelMissing: return "ModelMissing";
    case ErrorCode::MonthOutOfRange: return "MonthOutOfRange";
  }
  return "Error";
}

}  // namespace bgld
