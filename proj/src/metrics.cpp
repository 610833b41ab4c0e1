#include "bgld/metrics.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "bgld/kernels.hpp"

namespace bgld {

namespace {

void check_compatible(const Field& pred, const Field& truth) {
  if (!pred.spec.same_geometry(truth.spec))
    fail(ErrorCode::ShapeMismatch, "prediction and truth grids differ");
  if (!(pred.time == truth.time))
    fail(ErrorCode::ShapeMismatch, "prediction and truth time indices differ");
}

}  // namespace

double mse_overall(const Field& pred, const Field& truth) {
  check_compatible(pred, truth);
  const std::size_t n = pred.values.cols();
  double s = 0.0;
  for (std::size_t t = 0; t < pred.values.rows(); ++t)
    s += kern::sum_sq_diff(pred.values.row(t).data(), truth.values.row(t).data(), n);
  return s / (static_cast<double>(pred.values.rows()) * n);
}

std::array<double, 4> mse_seasonal(const Field& pred, const Field& truth,
                                   const SeasonMap& seasons) {
  check_compatible(pred, truth);
  const std::size_t n = pred.values.cols();
  std::array<double, 4> sums{};
  std::array<int, 4> counts{};
  for (int t = 0; t < pred.time.size(); ++t) {
    const int s = seasons.season_of(pred.time.entries[t].month);
    sums[s] +=
        kern::sum_sq_diff(pred.values.row(t).data(), truth.values.row(t).data(), n);
    ++counts[s];
  }
  std::array<double, 4> out{};
  for (int s = 0; s < 4; ++s)
    out[s] = counts[s] ? sums[s] / (static_cast<double>(counts[s]) * n)
                       : std::numeric_limits<double>::quiet_NaN();
  return out;
}

std::vector<double> mse_pixel(const Field& pred, const Field& truth) {
  check_compatible(pred, truth);
  const std::size_t n = pred.values.cols();
  const std::size_t nt = pred.values.rows();
  std::vector<double> out(n, 0.0);
  for (std::size_t t = 0; t < nt; ++t) {
    const double* a = pred.values.row(t).data();
    const double* b = truth.values.row(t).data();
    for (std::size_t p = 0; p < n; ++p) {
      const double d = a[p] - b[p];
      out[p] += d * d;
    }
  }
  for (double& v : out) v /= static_cast<double>(nt);
  return out;
}

std::vector<double> mse_ratio_map(std::span<const double> a,
                                  std::span<const double> b,
                                  std::vector<std::uint8_t>* inf_flags) {
  if (a.size() != b.size())
    fail(ErrorCode::ShapeMismatch, "ratio maps of different lengths");
  std::vector<double> out(a.size());
  if (inf_flags) inf_flags->assign(a.size(), 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (b[i] > 0.0) {
      out[i] = a[i] / b[i];
    } else if (a[i] == 0.0) {
      out[i] = 1.0;
    } else {
      out[i] = std::numeric_limits<double>::infinity();
      if (inf_flags) (*inf_flags)[i] = 1;
    }
  }
  return out;
}

double ssim(const Matrix& pred_map, const Matrix& truth_map,
            const SsimParams& params) {
  if (pred_map.rows() != truth_map.rows() || pred_map.cols() != truth_map.cols())
    fail(ErrorCode::ShapeMismatch, "ssim maps of different shape");
  const int rows = static_cast<int>(pred_map.rows());
  const int cols = static_cast<int>(pred_map.cols());
  const int w = params.window;
  if (w < 1 || w > rows || w > cols)
    fail(ErrorCode::WindowTooLarge, "window " + std::to_string(w) + " on " +
                                        std::to_string(rows) + "x" +
                                        std::to_string(cols) + " map");

  double lo = truth_map(0, 0), hi = truth_map(0, 0);
  for (std::size_t k = 0; k < truth_map.rows() * truth_map.cols(); ++k) {
    lo = std::min(lo, truth_map.data()[k]);
    hi = std::max(hi, truth_map.data()[k]);
  }
  if (params.pooled_range) {
    for (std::size_t k = 0; k < pred_map.rows() * pred_map.cols(); ++k) {
      lo = std::min(lo, pred_map.data()[k]);
      hi = std::max(hi, pred_map.data()[k]);
    }
  }
  const double r = hi - lo;
  const double c1 = (params.k1 * r) * (params.k1 * r);
  const double c2 = (params.k2 * r) * (params.k2 * r);

  const double inv_n = 1.0 / (static_cast<double>(w) * w);
  double total = 0.0;
  int windows = 0;
  for (int r0 = 0; r0 + w <= rows; ++r0) {
    for (int c0 = 0; c0 + w <= cols; ++c0) {
      double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
      for (int i = r0; i < r0 + w; ++i)
        for (int j = c0; j < c0 + w; ++j) {
          const double x = pred_map(i, j);
          const double y = truth_map(i, j);
          sx += x;
          sy += y;
          sxx += x * x;
          syy += y * y;
          sxy += x * y;
        }
      const double mx = sx * inv_n, my = sy * inv_n;
      const double vx = std::max(sxx * inv_n - mx * mx, 0.0);
      const double vy = std::max(syy * inv_n - my * my, 0.0);
      const double cxy = sxy * inv_n - mx * my;

      const double lnum = 2.0 * mx * my + c1;
      const double lden = mx * mx + my * my + c1;
      const double snum = 2.0 * cxy + c2;
      const double sden = vx + vy + c2;
      const double lum = lden > 0.0 ? lnum / lden : 1.0;
      const double cs = sden > 0.0 ? snum / sden : 1.0;
      total += lum * cs;
      ++windows;
    }
  }
  return total / windows;
}

Matrix extract_window(const Field& f, int t, int r0, int c0, int r1, int c1) {
  if (t < 0 || t >= f.time.size())
    fail(ErrorCode::MonthOutOfRange, "time slice " + std::to_string(t));
  if (r0 < 0 || c0 < 0 || r1 > f.spec.nrows || c1 > f.spec.ncols || r0 >= r1 ||
      c0 >= c1)
    fail(ErrorCode::ShapeMismatch, "window bounds outside grid");
  const auto aidx = f.spec.active_index();
  Matrix out(r1 - r0, c1 - c0);
  for (int r = r0; r < r1; ++r)
    for (int c = c0; c < c1; ++c) {
      const std::int32_t a = aidx[static_cast<std::size_t>(r) * f.spec.ncols + c];
      if (a < 0)
        fail(ErrorCode::MaskedPixel, "masked pixel (" + std::to_string(r) + "," +
                                         std::to_string(c) + ") inside window");
      out(r - r0, c - c0) = f.values(t, a);
    }
  return out;
}

std::optional<Rect> largest_active_rect(const GridSpec& spec) {
  const int rows = spec.nrows, cols = spec.ncols;
  std::vector<int> height(cols, 0);
  Rect best;
  long long best_area = 0;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c)
      height[c] = spec.active(r, c) ? height[c] + 1 : 0;
    // largest rectangle in histogram, monotonic stack
    std::vector<int> stack;
    for (int c = 0; c <= cols; ++c) {
      const int h = c < cols ? height[c] : 0;
      int left = c;
      while (!stack.empty() && height[stack.back()] >= h) {
        const int idx = stack.back();
        stack.pop_back();
        const int width = stack.empty() ? c : c - stack.back() - 1;
        const long long area = static_cast<long long>(height[idx]) * width;
        left = stack.empty() ? 0 : stack.back() + 1;
        if (area > best_area) {
          best_area = area;
          best = Rect{r - height[idx] + 1, left, r + 1, left + width};
        }
      }
      stack.push_back(c);
    }
  }
  if (best_area == 0) return std::nullopt;
  return best;
}

void write_pgm(const std::string& path, const GridSpec& spec,
               std::span<const double> active_values) {
  if (active_values.size() != static_cast<std::size_t>(spec.n_active()))
    fail(ErrorCode::DimensionMismatch, "pgm values != active count");
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (double v : active_values) {
    if (!std::isfinite(v)) continue;
    if (first) {
      lo = hi = v;
      first = false;
    } else {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  const double span = hi > lo ? hi - lo : 1.0;

  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::IoFailure, "cannot open '" + path + "'");
  out << "P2\n" << spec.ncols << " " << spec.nrows << "\n255\n";
  std::size_t a = 0;
  for (int r = 0; r < spec.nrows; ++r) {
    for (int c = 0; c < spec.ncols; ++c) {
      int level = 0;
      if (spec.active(r, c)) {
        const double v = active_values[a++];
        level = std::isfinite(v)
                    ? 1 + static_cast<int>(254.0 * (v - lo) / span + 0.5)
                    : 255;
        level = std::clamp(level, 1, 255);
      }
      out << level << (c + 1 < spec.ncols ? ' ' : '\n');
    }
  }
  if (!out) fail(ErrorCode::IoFailure, "write error on '" + path + "'");
}

}  // namespace bgld
