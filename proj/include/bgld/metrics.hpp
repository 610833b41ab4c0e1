#pragma once

#include <array>
#include <optional>

#include "bgld/grid.hpp"

namespace bgld {

// Mean squared differences at the requested grouping. Seasonal entries are
// NaN when the time index has no months in that season.
double mse_overall(const Field& pred, const Field& truth);
std::array<double, 4> mse_seasonal(const Field& pred, const Field& truth,
                                   const SeasonMap& seasons);
std::vector<double> mse_pixel(const Field& pred, const Field& truth);

// Elementwise a/b. By convention 0/0 = 1; x/0 with x > 0 flags the pixel and
// yields +inf.
std::vector<double> mse_ratio_map(std::span<const double> a,
                                  std::span<const double> b,
                                  std::vector<std::uint8_t>* inf_flags = nullptr);

struct SsimParams {
  int window = 8;   // square sliding window, stride 1
  double k1 = 0.01;
  double k2 = 0.03;
  // R defaults to the data range of the truth (second) argument; with
  // pooled_range the range is taken over both maps, which makes the score
  // symmetric in its arguments.
  bool pooled_range = false;
};

// Mean over sliding windows of
//   (2 mx my + C1)(2 sxy + C2) / ((mx^2 + my^2 + C1)(sx^2 + sy^2 + C2))
// with population moments, C1 = (k1 R)^2, C2 = (k2 R)^2. Degenerate 0/0
// factors (constant maps with R = 0) count as 1.
double ssim(const Matrix& pred_map, const Matrix& truth_map,
            const SsimParams& params = {});

// Rectangular window [r0,r1) x [c0,c1) of one time slice as a dense matrix;
// every pixel inside must be active.
Matrix extract_window(const Field& f, int t, int r0, int c0, int r1, int c1);

struct Rect {
  int r0 = 0, c0 = 0, r1 = 0, c1 = 0;  // half-open
  int rows() const { return r1 - r0; }
  int cols() const { return c1 - c0; }
};

// Largest axis-aligned all-active rectangle of the grid (max-rectangle over
// the mask histogram); nullopt when no cell is active.
std::optional<Rect> largest_active_rect(const GridSpec& spec);

// Plain ASCII PGM (P2) heatmap of one active-pixel map; masked cells render
// as 0, the active range maps linearly onto 1..255.
void write_pgm(const std::string& path, const GridSpec& spec,
               std::span<const double> active_values);

}  // namespace bgld
