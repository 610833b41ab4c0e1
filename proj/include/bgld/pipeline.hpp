#pragma once

#include <array>
#include <map>
#include <optional>

#include "bgld/bgl.hpp"
#include "bgld/metrics.hpp"
#include "bgld/predict.hpp"
#include "bgld/synthetic.hpp"
#include "bgld/trend.hpp"

// End-to-end orchestration: a key=value config file drives simulate / fit /
// predict / validate. All artifacts are deterministic functions of the config
// and seed; reruns produce byte-identical model files and reports.

namespace bgld {

struct PipelineConfig {
  std::string coarse_path, obs_path, output_dir;
  std::optional<YearMonth> train_end;
  std::optional<YearMonth> holdout_start, holdout_end;
  SeasonMap seasons = SeasonMap::southern_default();
  EofSource eof_source = EofSource::obs;
  SplitRule split = SplitRule::variance(0.95);
  double lambda = 0.1, rho = 0.0;
  std::vector<std::pair<double, double>> penalty_grid;  // empty: fixed lambda/rho
  int cv_folds = 5;
  bool stage2 = true;
  bool nugget_in_sd = true;
  int ssim_window = 8;
  std::optional<Rect> ssim_rect;
  std::uint64_t seed = 1;
  int threads = 1;
  BglOptions bgl;
  ScenarioSpec scenario;

  void validate() const;
};

PipelineConfig load_config(const std::string& path);
PipelineConfig parse_config_text(const std::string& text);

// Per-season training residuals plus everything needed to form e1 rows for
// arbitrary months of that season.
struct SeasonResiduals {
  ResidualPair pair;
  std::vector<double> pooled_coarse_mean;  // over the season's training months
};

SeasonResiduals build_season_residuals(const CoarseField& coarse,
                                       const FineField& obs,
                                       const FineField& trend, int season,
                                       const PipelineConfig& cfg,
                                       const BilinearStencil& stencil);

// Persistence of fitted artifacts inside output_dir.
void save_climatology(const Climatology& clim, const std::string& path);
Climatology load_climatology(const std::string& path);
void save_basis(const BasisSet& basis, int season, const GridSpec& grid,
                const std::string& path);
BasisSet load_basis(const std::string& path, GridSpec* grid_out = nullptr,
                    int* season_out = nullptr);
void save_model(const BglModel& model, const std::string& basis_file,
                const SeasonMap& seasons, const std::string& path);
BglModel load_model(const std::string& path, const std::string& dir);

void cmd_simulate(const PipelineConfig& cfg);
void cmd_fit(const PipelineConfig& cfg);
void cmd_predict(const PipelineConfig& cfg, const std::vector<YearMonth>& months);

struct ValidationReport {
  // methods: 0 = gcm (interpolated model), 1 = standard (stage-1 only),
  // 2 = bgl; columns: 4 seasons then overall. NaN marks unavailable entries.
  std::array<std::array<double, 5>, 3> mse{};
  std::array<std::array<double, 5>, 3> ssim{};
  std::array<std::vector<double>, 3> mse_pixel{};
  bool has_bgl = false;
};

std::string report_csv(const ValidationReport& report);
ValidationReport cmd_validate(const PipelineConfig& cfg);

inline constexpr std::array<const char*, 3> kMethodNames = {"gcm", "standard",
                                                            "bgl"};

}  // namespace bgld
