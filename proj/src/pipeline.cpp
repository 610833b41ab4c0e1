#include "bgld/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "bgld/gsf.hpp"
#include "bgld/kernels.hpp"
#include "bgld/parallel.hpp"

namespace bgld {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  std::size_t e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  fail(ErrorCode::MalformedInput, key + "='" + v + "' is not on/off");
}

std::vector<std::pair<double, double>> parse_grid(const std::string& s) {
  std::vector<std::pair<double, double>> grid;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t semi = s.find(';', pos);
    if (semi == std::string::npos) semi = s.size();
    const std::string part = s.substr(pos, semi - pos);
    const std::size_t comma = part.find(',');
    if (comma == std::string::npos)
      fail(ErrorCode::MalformedInput, "penalty grid entry '" + part + "'");
    grid.emplace_back(gsf::parse_double(trim(part.substr(0, comma))),
                      gsf::parse_double(trim(part.substr(comma + 1))));
    pos = semi + 1;
  }
  return grid;
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t comma = s.find(',', pos);
    if (comma == std::string::npos) comma = s.size();
    out.push_back(gsf::parse_double(trim(s.substr(pos, comma - pos))));
    pos = comma + 1;
  }
  return out;
}

std::string join_doubles(std::span<const double> v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += gsf::format_double(v[i]);
  }
  return out;
}

void emit_grid(gsf::Document& doc, const GridSpec& spec) {
  doc.header.emplace_back("gkind",
                          spec.kind == GridKind::coarse ? "coarse" : "fine");
  doc.header.emplace_back("lon0", gsf::format_double(spec.lon0));
  doc.header.emplace_back("lat0", gsf::format_double(spec.lat0));
  doc.header.emplace_back("dlon", gsf::format_double(spec.dlon));
  doc.header.emplace_back("dlat", gsf::format_double(spec.dlat));
  doc.header.emplace_back("ncols", std::to_string(spec.ncols));
  doc.header.emplace_back("nrows", std::to_string(spec.nrows));
  doc.header.emplace_back("mask", gsf::encode_mask_rle(spec.mask, spec.n_cells()));
}

GridSpec parse_grid_header(const gsf::Document& doc) {
  GridSpec spec;
  const std::string& gk = doc.require("gkind");
  if (gk == "coarse")
    spec.kind = GridKind::coarse;
  else if (gk == "fine")
    spec.kind = GridKind::fine;
  else
    fail(ErrorCode::MalformedHeader, "gkind='" + gk + "'");
  spec.lon0 = gsf::parse_double(doc.require("lon0"));
  spec.lat0 = gsf::parse_double(doc.require("lat0"));
  spec.dlon = gsf::parse_double(doc.require("dlon"));
  spec.dlat = gsf::parse_double(doc.require("dlat"));
  spec.ncols = static_cast<int>(std::stol(doc.require("ncols")));
  spec.nrows = static_cast<int>(std::stol(doc.require("nrows")));
  spec.mask = gsf::decode_mask_rle(doc.require("mask"), spec.n_cells());
  spec.validate();
  return spec;
}

std::string season_file(const std::string& stem, int season) {
  return stem + "_" + kSeasonNames[season] + ".gsf";
}

Field restrict_months(const Field& f, const std::vector<YearMonth>& months) {
  Field out;
  out.spec = f.spec;
  out.values = Matrix(months.size(), f.values.cols());
  for (std::size_t i = 0; i < months.size(); ++i) {
    const int t = f.time.find(months[i]);
    if (t < 0)
      fail(ErrorCode::MonthOutOfRange,
           format_year_month(months[i]) + " not present in field");
    out.time.entries.push_back(months[i]);
    std::copy_n(f.values.row(t).data(), f.values.cols(), out.values.row(i).data());
  }
  return out;
}

}  // namespace

void PipelineConfig::validate() const {
  seasons.validate();
  if (train_end && holdout_start && !(*train_end < *holdout_start))
    fail(ErrorCode::MalformedInput, "hold-out window overlaps the training window");
  if (holdout_start && holdout_end && !(*holdout_start <= *holdout_end))
    fail(ErrorCode::MalformedInput, "holdout_start after holdout_end");
  if (cv_folds < 2) fail(ErrorCode::MalformedInput, "cv_folds must be >= 2");
  if (threads < 1) fail(ErrorCode::MalformedInput, "threads must be >= 1");
  if (ssim_window < 1) fail(ErrorCode::MalformedInput, "ssim_window must be >= 1");
  if (lambda < 0 || rho < 0)
    fail(ErrorCode::MalformedInput, "penalties must be nonnegative");
}

PipelineConfig parse_config_text(const std::string& text) {
  PipelineConfig cfg;
  bool scenario_seed_set = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    if (line.empty() || line[0] == '#') {
      if (nl == text.size()) break;
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorCode::MalformedInput, "config line without '=': " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));

    if (key == "coarse") cfg.coarse_path = val;
    else if (key == "obs") cfg.obs_path = val;
    else if (key == "output_dir") cfg.output_dir = val;
    else if (key == "train_end") cfg.train_end = parse_year_month(val);
    else if (key == "holdout_start") cfg.holdout_start = parse_year_month(val);
    else if (key == "holdout_end") cfg.holdout_end = parse_year_month(val);
    else if (key == "seasons") cfg.seasons = SeasonMap::parse(val);
    else if (key == "eof_source")
      cfg.eof_source = val == "pooled" ? EofSource::pooled : EofSource::obs;
    else if (key == "split_rule") cfg.split = SplitRule::parse(val);
    else if (key == "lambda") cfg.lambda = gsf::parse_double(val);
    else if (key == "rho") cfg.rho = gsf::parse_double(val);
    else if (key == "penalty_grid") cfg.penalty_grid = parse_grid(val);
    else if (key == "cv_folds") cfg.cv_folds = std::stoi(val);
    else if (key == "stage2") cfg.stage2 = parse_bool(val, key);
    else if (key == "nugget_in_sd") cfg.nugget_in_sd = parse_bool(val, key);
    else if (key == "ssim_window") cfg.ssim_window = std::stoi(val);
    else if (key == "ssim_rect") {
      const auto v = parse_double_list(val);
      if (v.size() != 4)
        fail(ErrorCode::MalformedInput, "ssim_rect needs r0,c0,r1,c1");
      cfg.ssim_rect = Rect{static_cast<int>(v[0]), static_cast<int>(v[1]),
                           static_cast<int>(v[2]), static_cast<int>(v[3])};
    } else if (key == "seed") cfg.seed = std::stoull(val);
    else if (key == "threads") cfg.threads = std::stoi(val);
    else if (key == "bgl_tol") cfg.bgl.tol = gsf::parse_double(val);
    else if (key == "bgl_max_outer") cfg.bgl.max_outer = std::stoi(val);
    else if (key == "bgl_inner_tol") cfg.bgl.inner_tol = gsf::parse_double(val);
    else if (key == "bgl_max_inner") cfg.bgl.max_inner = std::stoi(val);
    else if (key == "bgl_eig_floor") cfg.bgl.eig_floor = gsf::parse_double(val);
    else if (key == "bgl_tau_floor") cfg.bgl.tau_floor_rel = gsf::parse_double(val);
    else if (key == "bgl_init_reg") cfg.bgl.init_diag_reg = gsf::parse_double(val);
    else if (key == "scenario.coarse_ncols") cfg.scenario.coarse_ncols = std::stoi(val);
    else if (key == "scenario.coarse_nrows") cfg.scenario.coarse_nrows = std::stoi(val);
    else if (key == "scenario.fine_factor") cfg.scenario.fine_factor = std::stoi(val);
    else if (key == "scenario.start_year") cfg.scenario.start_year = std::stoi(val);
    else if (key == "scenario.train_years") cfg.scenario.train_years = std::stoi(val);
    else if (key == "scenario.future_years") cfg.scenario.future_years = std::stoi(val);
    else if (key == "scenario.l_true") cfg.scenario.l_true = std::stoi(val);
    else if (key == "scenario.coeff_var") cfg.scenario.coeff_var = gsf::parse_double(val);
    else if (key == "scenario.coeff_var_decay")
      cfg.scenario.coeff_var_decay = gsf::parse_double(val);
    else if (key == "scenario.cross_corr") cfg.scenario.cross_corr = gsf::parse_double(val);
    else if (key == "scenario.tau2_model") cfg.scenario.tau2_model = gsf::parse_double(val);
    else if (key == "scenario.tau2_obs") cfg.scenario.tau2_obs = gsf::parse_double(val);
    else if (key == "scenario.basis_smooth_cells")
      cfg.scenario.basis_smooth_cells = gsf::parse_double(val);
    else if (key == "scenario.bias_amp") cfg.scenario.bias_amp = gsf::parse_double(val);
    else if (key == "scenario.warming_per_decade")
      cfg.scenario.warming_per_decade = gsf::parse_double(val);
    else if (key == "scenario.seasonal_amp")
      cfg.scenario.seasonal_amp = gsf::parse_double(val);
    else if (key == "scenario.mask_fraction")
      cfg.scenario.mask_fraction = gsf::parse_double(val);
    else if (key == "scenario.seed") {
      cfg.scenario.seed = std::stoull(val);
      scenario_seed_set = true;
    } else {
      fail(ErrorCode::MalformedInput, "unknown config key '" + key + "'");
    }
  }
  if (!scenario_seed_set) cfg.scenario.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoFailure, "cannot open config '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_config_text(text);
}

namespace {

void write_config_echo(const PipelineConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::IoFailure, "cannot open '" + path + "'");
  out << "coarse=" << cfg.coarse_path << "\n";
  out << "obs=" << cfg.obs_path << "\n";
  out << "output_dir=" << cfg.output_dir << "\n";
  if (cfg.train_end) out << "train_end=" << format_year_month(*cfg.train_end) << "\n";
  if (cfg.holdout_start)
    out << "holdout_start=" << format_year_month(*cfg.holdout_start) << "\n";
  if (cfg.holdout_end)
    out << "holdout_end=" << format_year_month(*cfg.holdout_end) << "\n";
  out << "seasons=" << cfg.seasons.to_string() << "\n";
  out << "eof_source=" << (cfg.eof_source == EofSource::obs ? "obs" : "pooled") << "\n";
  out << "split_rule=" << cfg.split.to_string() << "\n";
  out << "lambda=" << gsf::format_double(cfg.lambda) << "\n";
  out << "rho=" << gsf::format_double(cfg.rho) << "\n";
  if (!cfg.penalty_grid.empty()) {
    out << "penalty_grid=";
    for (std::size_t i = 0; i < cfg.penalty_grid.size(); ++i) {
      if (i) out << ";";
      out << gsf::format_double(cfg.penalty_grid[i].first) << ","
          << gsf::format_double(cfg.penalty_grid[i].second);
    }
    out << "\n";
  }
  out << "cv_folds=" << cfg.cv_folds << "\n";
  out << "stage2=" << (cfg.stage2 ? "on" : "off") << "\n";
  out << "nugget_in_sd=" << (cfg.nugget_in_sd ? "on" : "off") << "\n";
  out << "ssim_window=" << cfg.ssim_window << "\n";
  if (cfg.ssim_rect)
    out << "ssim_rect=" << cfg.ssim_rect->r0 << "," << cfg.ssim_rect->c0 << ","
        << cfg.ssim_rect->r1 << "," << cfg.ssim_rect->c1 << "\n";
  out << "seed=" << cfg.seed << "\n";
  out << "threads=" << cfg.threads << "\n";
}

}  // namespace

SeasonResiduals build_season_residuals(const CoarseField& coarse,
                                       const FineField& obs,
                                       const FineField& trend, int season,
                                       const PipelineConfig& cfg,
                                       const BilinearStencil& stencil) {
  if (!cfg.train_end) fail(ErrorCode::MalformedInput, "train_end is required");
  std::vector<int> obs_rows, model_rows;
  std::vector<YearMonth> months;
  for (int t = 0; t < obs.time.size(); ++t) {
    const YearMonth ym = obs.time.entries[t];
    if (ym > *cfg.train_end) continue;
    if (cfg.seasons.season_of(ym.month) != season) continue;
    const int mt = coarse.time.find(ym);
    if (mt < 0) continue;
    obs_rows.push_back(t);
    model_rows.push_back(mt);
    months.push_back(ym);
  }
  if (obs_rows.size() < 2)
    fail(ErrorCode::InsufficientData,
         std::string(kSeasonNames[season]) + " has " +
             std::to_string(obs_rows.size()) + " training months");

  const int t_train = static_cast<int>(obs_rows.size());
  const std::size_t nk = coarse.values.cols();
  const std::size_t n = obs.values.cols();

  SeasonResiduals sr;
  sr.pooled_coarse_mean.assign(nk, 0.0);
  for (int mt : model_rows)
    kern::axpy(1.0, coarse.values.row(mt).data(), sr.pooled_coarse_mean.data(), nk);
  for (double& v : sr.pooled_coarse_mean) v /= t_train;

  sr.pair.season = season;
  sr.pair.t_train = t_train;
  sr.pair.months = months;
  sr.pair.e1 = Matrix(t_train, n);
  sr.pair.e2 = Matrix(t_train, n);
  std::vector<double> anom(nk);
  for (int i = 0; i < t_train; ++i) {
    kern::subtract(coarse.values.row(model_rows[i]).data(),
                   sr.pooled_coarse_mean.data(), anom.data(), nk);
    stencil.apply({anom.data(), nk}, sr.pair.e1.row(i));
    kern::subtract(obs.values.row(obs_rows[i]).data(),
                   trend.values.row(model_rows[i]).data(), sr.pair.e2.row(i).data(),
                   n);
  }
  return sr;
}

void save_climatology(const Climatology& clim, const std::string& path) {
  gsf::Document doc;
  doc.header.emplace_back("kind", "climatology");
  emit_grid(doc, clim.grid);
  doc.header.emplace_back("group",
                          clim.group == Grouping::calendar_month ? "month" : "season");
  doc.header.emplace_back("seasonmap", clim.seasons.to_string());
  std::string groups;
  for (std::size_t i = 0; i < clim.group_ids.size(); ++i) {
    if (i) groups += ',';
    groups += std::to_string(clim.group_ids[i]);
  }
  doc.header.emplace_back("groups", groups);
  doc.payload.assign(clim.means.data(),
                     clim.means.data() + clim.means.rows() * clim.means.cols());
  gsf::write_document(doc, path);
}

Climatology load_climatology(const std::string& path) {
  const gsf::Document doc = gsf::read_document(path);
  if (doc.require("kind") != "climatology")
    fail(ErrorCode::MalformedHeader, "'" + path + "' is not a climatology file");
  Climatology clim;
  clim.grid = parse_grid_header(doc);
  clim.group = doc.require("group") == "season" ? Grouping::season
                                                : Grouping::calendar_month;
  clim.seasons = SeasonMap::parse(doc.require("seasonmap"));
  const std::string& groups = doc.require("groups");
  std::size_t pos = 0;
  while (pos < groups.size()) {
    std::size_t comma = groups.find(',', pos);
    if (comma == std::string::npos) comma = groups.size();
    clim.group_ids.push_back(std::stoi(groups.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  const std::size_t n = clim.grid.n_active();
  if (doc.payload.size() != clim.group_ids.size() * n)
    fail(ErrorCode::DimensionMismatch, "climatology payload size");
  clim.means = Matrix(clim.group_ids.size(), n);
  std::memcpy(clim.means.data(), doc.payload.data(),
              doc.payload.size() * sizeof(double));
  return clim;
}

void save_basis(const BasisSet& basis, int season, const GridSpec& grid,
                const std::string& path) {
  gsf::Document doc;
  doc.header.emplace_back("kind", "basis");
  emit_grid(doc, grid);
  doc.header.emplace_back("season", std::to_string(season));
  doc.header.emplace_back("ncomp", std::to_string(basis.T()));
  doc.header.emplace_back("lstoch", std::to_string(basis.L()));
  doc.header.emplace_back("rankdef", basis.rank_deficient ? "1" : "0");
  doc.header.emplace_back("singvals", join_doubles(basis.singular_values));
  const std::size_t n = basis.n();
  doc.payload.reserve(static_cast<std::size_t>(basis.T()) * n);
  for (int k = 0; k < basis.T(); ++k) {
    const auto col = basis.column(k);
    doc.payload.insert(doc.payload.end(), col.begin(), col.end());
  }
  gsf::write_document(doc, path);
}

BasisSet load_basis(const std::string& path, GridSpec* grid_out, int* season_out) {
  const gsf::Document doc = gsf::read_document(path);
  if (doc.require("kind") != "basis")
    fail(ErrorCode::MalformedHeader, "'" + path + "' is not a basis file");
  const GridSpec grid = parse_grid_header(doc);
  if (grid_out) *grid_out = grid;
  if (season_out) *season_out = std::stoi(doc.require("season"));
  const int t = std::stoi(doc.require("ncomp"));
  const int l = std::stoi(doc.require("lstoch"));
  if (l < 0 || l > t) fail(ErrorCode::MalformedHeader, "lstoch outside [0, ncomp]");
  BasisSet basis;
  basis.rank_deficient = doc.require("rankdef") == "1";
  basis.singular_values = parse_double_list(doc.require("singvals"));
  if (static_cast<int>(basis.singular_values.size()) != t)
    fail(ErrorCode::MalformedHeader, "singvals length != ncomp");
  const std::size_t n = grid.n_active();
  if (doc.payload.size() != static_cast<std::size_t>(t) * n)
    fail(ErrorCode::DimensionMismatch, "basis payload size");
  basis.phi = Matrix(l, n);
  basis.psi = Matrix(t - l, n);
  std::memcpy(basis.phi.data(), doc.payload.data(), static_cast<std::size_t>(l) * n * 8);
  std::memcpy(basis.psi.data(), doc.payload.data() + static_cast<std::size_t>(l) * n,
              static_cast<std::size_t>(t - l) * n * 8);
  return basis;
}

void save_model(const BglModel& model, const std::string& basis_file,
                const SeasonMap& seasons, const std::string& path) {
  gsf::Document doc;
  doc.header.emplace_back("kind", "bgl-model");
  doc.header.emplace_back("season", std::to_string(model.season));
  doc.header.emplace_back("p", std::to_string(model.p() == 0 ? 2 : model.p()));
  doc.header.emplace_back("nlevels", std::to_string(model.levels()));
  doc.header.emplace_back("lambda", gsf::format_double(model.lambda));
  doc.header.emplace_back("rho", gsf::format_double(model.rho));
  doc.header.emplace_back("tau2", join_doubles(model.tau2));
  doc.header.emplace_back("nu_cols", std::to_string(model.det.nu.cols()));
  doc.header.emplace_back("basis_file", basis_file);
  doc.header.emplace_back("seasonmap", seasons.to_string());
  const int p = model.p() == 0 ? 2 : model.p();
  for (const Matrix& q : model.q_blocks)
    doc.payload.insert(doc.payload.end(), q.data(), q.data() + p * p);
  doc.payload.insert(doc.payload.end(), model.det.nu.data(),
                     model.det.nu.data() + model.det.nu.rows() * model.det.nu.cols());
  gsf::write_document(doc, path);
}

BglModel load_model(const std::string& path, const std::string& dir) {
  const gsf::Document doc = gsf::read_document(path);
  if (doc.require("kind") != "bgl-model")
    fail(ErrorCode::MalformedHeader, "'" + path + "' is not a model file");
  BglModel model;
  model.season = std::stoi(doc.require("season"));
  const int p = std::stoi(doc.require("p"));
  const int levels = std::stoi(doc.require("nlevels"));
  model.lambda = gsf::parse_double(doc.require("lambda"));
  model.rho = gsf::parse_double(doc.require("rho"));
  model.tau2 = parse_double_list(doc.require("tau2"));
  const int nu_cols = std::stoi(doc.require("nu_cols"));

  const std::string basis_path =
      (fs::path(dir) / doc.require("basis_file")).string();
  if (!fs::exists(basis_path))
    fail(ErrorCode::ModelMissing, "referenced basis '" + basis_path + "' missing");
  model.basis = std::make_shared<BasisSet>(load_basis(basis_path));

  const std::size_t expected =
      static_cast<std::size_t>(levels) * p * p + 2 * static_cast<std::size_t>(nu_cols);
  if (doc.payload.size() != expected)
    fail(ErrorCode::DimensionMismatch, "model payload size");
  std::size_t off = 0;
  for (int l = 0; l < levels; ++l) {
    Matrix q(p, p);
    std::memcpy(q.data(), doc.payload.data() + off, static_cast<std::size_t>(p) * p * 8);
    model.q_blocks.push_back(std::move(q));
    off += static_cast<std::size_t>(p) * p;
  }
  model.det.nu = Matrix(2, nu_cols);
  std::memcpy(model.det.nu.data(), doc.payload.data() + off,
              static_cast<std::size_t>(2) * nu_cols * 8);
  model.validate();
  return model;
}

void cmd_simulate(const PipelineConfig& cfg) {
  if (cfg.output_dir.empty())
    fail(ErrorCode::MalformedInput, "output_dir is required");
  fs::create_directories(cfg.output_dir);
  const SyntheticData data = generate(cfg.scenario);
  const fs::path dir(cfg.output_dir);
  gsf::write_field(data.coarse, (dir / "coarse.gsf").string());
  gsf::write_field(data.obs, (dir / "obs.gsf").string());
  gsf::write_field(data.truth_future, (dir / "truth_future.gsf").string());

  BasisSet truth_basis;
  truth_basis.phi = data.truth.phi;
  truth_basis.singular_values.assign(data.truth.phi.rows(), 0.0);
  save_basis(truth_basis, -1, data.obs.spec, (dir / "truth_basis.gsf").string());

  std::ofstream meta((dir / "truth.meta").string(), std::ios::trunc);
  meta << "kind=scenario-truth\n";
  meta << "seed=" << cfg.scenario.seed << "\n";
  meta << "l_true=" << cfg.scenario.l_true << "\n";
  meta << "tau2=" << join_doubles(data.truth.tau2) << "\n";
  for (std::size_t l = 0; l < data.truth.q_blocks.size(); ++l) {
    const Matrix& q = data.truth.q_blocks[l];
    meta << "q" << l << "=" << join_doubles({q.data(), q.rows() * q.cols()}) << "\n";
  }
  if (!meta) fail(ErrorCode::IoFailure, "write error on truth.meta");
}

void cmd_fit(const PipelineConfig& cfg) {
  if (!cfg.train_end) fail(ErrorCode::MalformedInput, "train_end is required");
  if (cfg.output_dir.empty())
    fail(ErrorCode::MalformedInput, "output_dir is required");
  const CoarseField coarse = gsf::read_field(cfg.coarse_path);
  const FineField obs = gsf::read_field(cfg.obs_path);
  if (coarse.spec.kind != GridKind::coarse)
    fail(ErrorCode::MalformedInput, "coarse input is not kind=coarse");
  if (obs.spec.kind != GridKind::fine)
    fail(ErrorCode::MalformedInput, "obs input is not kind=fine");

  const Climatology obs_clim =
      climatology(obs, Grouping::calendar_month, cfg.seasons, cfg.train_end);
  const Climatology model_clim =
      climatology(coarse, Grouping::calendar_month, cfg.seasons, cfg.train_end);
  const FineField trend = estimate_trend(coarse, obs_clim, model_clim, obs.spec);
  const BilinearStencil stencil = BilinearStencil::build(coarse.spec, obs.spec);

  fs::create_directories(cfg.output_dir);
  const fs::path dir(cfg.output_dir);
  save_climatology(obs_clim, (dir / "climatology_obs.gsf").string());
  save_climatology(model_clim, (dir / "climatology_model.gsf").string());
  write_config_echo(cfg, (dir / "config_used.cfg").string());
  if (!cfg.stage2) return;

  struct SeasonOut {
    BasisSet basis;
    BglModel model;
    FitInfo info;
    std::pair<double, double> penalties;
  };
  std::array<SeasonOut, 4> results;
  parallel_for(4, cfg.threads, [&](int season) {
    const SeasonResiduals sr =
        build_season_residuals(coarse, obs, trend, season, cfg, stencil);
    const BasisSet full = compute_eofs(sr.pair, cfg.eof_source);
    auto basis = std::make_shared<BasisSet>(split_basis(full, cfg.split));
    const DeterministicFit det = fit_deterministic(sr.pair, *basis);
    std::pair<double, double> pen{cfg.lambda, cfg.rho};
    if (!cfg.penalty_grid.empty())
      pen = select_penalties(sr.pair, basis, cfg.penalty_grid, cfg.bgl, cfg.cv_folds);
    FitInfo info;
    BglModel model =
        fit(sr.pair, basis, pen.first, pen.second, cfg.bgl, det, &info);
    results[season] = SeasonOut{*basis, std::move(model), std::move(info), pen};
  });

  std::ofstream log((dir / "fit_log.txt").string(), std::ios::trunc);
  for (int season = 0; season < 4; ++season) {
    SeasonOut& r = results[season];
    const std::string basis_name = season_file("basis", season);
    save_basis(r.basis, season, obs.spec, (dir / basis_name).string());
    save_model(r.model, basis_name, cfg.seasons,
               (dir / season_file("model", season)).string());
    log << "season=" << kSeasonNames[season]
        << " lambda=" << gsf::format_double(r.penalties.first)
        << " rho=" << gsf::format_double(r.penalties.second)
        << " L=" << r.model.levels() << " outer=" << r.info.outer_iterations
        << " objective=" << join_doubles(r.info.objective) << "\n";
  }
  if (!log) fail(ErrorCode::IoFailure, "write error on fit_log.txt");
}

namespace {

struct LoadedArtifacts {
  Climatology obs_clim, model_clim;
  std::array<std::shared_ptr<BglModel>, 4> models;  // null until needed
};

LoadedArtifacts load_artifacts(const PipelineConfig& cfg, bool need_models) {
  const fs::path dir(cfg.output_dir);
  const std::string obs_clim_path = (dir / "climatology_obs.gsf").string();
  if (!fs::exists(obs_clim_path))
    fail(ErrorCode::ModelMissing,
         "no fitted artifacts in '" + cfg.output_dir + "' (run fit first)");
  LoadedArtifacts art;
  art.obs_clim = load_climatology(obs_clim_path);
  art.model_clim = load_climatology((dir / "climatology_model.gsf").string());
  if (need_models) {
    for (int season = 0; season < 4; ++season) {
      const std::string path = (dir / season_file("model", season)).string();
      if (!fs::exists(path))
        fail(ErrorCode::ModelMissing, "model file '" + path + "' missing");
      art.models[season] = std::make_shared<BglModel>(
          load_model(path, cfg.output_dir));
    }
  }
  return art;
}

std::vector<double> pooled_season_mean(const CoarseField& coarse, int season,
                                       const PipelineConfig& cfg) {
  std::vector<double> mean(coarse.values.cols(), 0.0);
  int count = 0;
  for (int t = 0; t < coarse.time.size(); ++t) {
    const YearMonth ym = coarse.time.entries[t];
    if (ym > *cfg.train_end) continue;
    if (cfg.seasons.season_of(ym.month) != season) continue;
    kern::axpy(1.0, coarse.values.row(t).data(), mean.data(), mean.size());
    ++count;
  }
  if (count == 0)
    fail(ErrorCode::InsufficientData,
         std::string(kSeasonNames[season]) + " has no training months");
  for (double& v : mean) v /= count;
  return mean;
}

FineField one_month_field(const GridSpec& spec, YearMonth ym,
                          std::span<const double> values) {
  FineField f;
  f.spec = spec;
  f.spec.kind = GridKind::fine;
  f.time.entries = {ym};
  f.values = Matrix(1, values.size());
  std::copy(values.begin(), values.end(), f.values.row(0).data());
  return f;
}

}  // namespace

void cmd_predict(const PipelineConfig& cfg, const std::vector<YearMonth>& months) {
  if (months.empty()) fail(ErrorCode::MalformedInput, "no months requested");
  if (!cfg.train_end) fail(ErrorCode::MalformedInput, "train_end is required");
  const CoarseField coarse = gsf::read_field(cfg.coarse_path);
  const LoadedArtifacts art = load_artifacts(cfg, cfg.stage2);
  const GridSpec& fine_spec = art.obs_clim.grid;

  const CoarseField sub = restrict_months(coarse, months);
  const FineField trend =
      estimate_trend(sub, art.obs_clim, art.model_clim, fine_spec);
  const BilinearStencil stencil = BilinearStencil::build(coarse.spec, fine_spec);

  std::array<std::vector<double>, 4> pooled;
  if (cfg.stage2)
    for (int season = 0; season < 4; ++season)
      pooled[season] = pooled_season_mean(coarse, season, cfg);

  const fs::path dir(cfg.output_dir);
  const std::size_t nk = coarse.values.cols();
  parallel_for(static_cast<int>(months.size()), cfg.threads, [&](int i) {
    const YearMonth ym = months[i];
    const std::string tag = format_year_month(ym);
    if (!cfg.stage2) {
      gsf::write_field(one_month_field(fine_spec, ym, trend.values.row(i)),
                       (dir / ("pred_mean_" + tag + ".gsf")).string());
      return;
    }
    const int season = cfg.seasons.season_of(ym.month);
    const BglModel& model = *art.models[season];
    std::vector<double> anom(nk);
    kern::subtract(sub.values.row(i).data(), pooled[season].data(), anom.data(), nk);
    std::vector<double> e1(fine_spec.n_active());
    stencil.apply({anom.data(), nk}, {e1.data(), e1.size()});
    const MonthPrediction mp =
        downscale_month(trend.values.row(i), e1, model, cfg.nugget_in_sd);
    gsf::write_field(one_month_field(fine_spec, ym, mp.mean),
                     (dir / ("pred_mean_" + tag + ".gsf")).string());
    gsf::write_field(one_month_field(fine_spec, ym, mp.sd),
                     (dir / ("pred_sd_" + tag + ".gsf")).string());
    std::ofstream meta((dir / ("pred_" + tag + ".meta")).string(), std::ios::trunc);
    meta << "month=" << tag << "\n"
         << "season=" << kSeasonNames[season] << "\n"
         << "model_file=" << season_file("model", season) << "\n"
         << "lambda=" << gsf::format_double(model.lambda) << "\n"
         << "rho=" << gsf::format_double(model.rho) << "\n"
         << "levels=" << model.levels() << "\n"
         << "tau2=" << join_doubles(model.tau2) << "\n"
         << "nugget_in_sd=" << (cfg.nugget_in_sd ? "on" : "off") << "\n"
         << "seed=" << cfg.seed << "\n";
  });
}

std::string report_csv(const ValidationReport& report) {
  std::string csv = "method,season,mse,ssim\n";
  const char* cols[5] = {kSeasonNames[0], kSeasonNames[1], kSeasonNames[2],
                         kSeasonNames[3], "overall"};
  const int nmethods = report.has_bgl ? 3 : 2;
  for (int m = 0; m < nmethods; ++m)
    for (int c = 0; c < 5; ++c) {
      csv += kMethodNames[m];
      csv += ',';
      csv += cols[c];
      csv += ',';
      csv += gsf::format_double(report.mse[m][c]);
      csv += ',';
      csv += gsf::format_double(report.ssim[m][c]);
      csv += '\n';
    }
  return csv;
}

ValidationReport cmd_validate(const PipelineConfig& cfg) {
  if (!cfg.train_end) fail(ErrorCode::MalformedInput, "train_end is required");
  if (!cfg.holdout_start || !cfg.holdout_end)
    fail(ErrorCode::MalformedInput, "holdout window is required");
  const CoarseField coarse = gsf::read_field(cfg.coarse_path);
  const FineField obs = gsf::read_field(cfg.obs_path);

  std::vector<YearMonth> months;
  for (const YearMonth& ym : obs.time.entries)
    if (!(ym < *cfg.holdout_start) && !(*cfg.holdout_end < ym) &&
        coarse.time.find(ym) >= 0)
      months.push_back(ym);
  if (months.empty())
    fail(ErrorCode::InsufficientData, "hold-out window has no scored months");

  const FineField truth = restrict_months(obs, months);
  const CoarseField sub = restrict_months(coarse, months);

  // same artifacts and code paths as prediction
  const Climatology obs_clim =
      climatology(obs, Grouping::calendar_month, cfg.seasons, cfg.train_end);
  const Climatology model_clim =
      climatology(coarse, Grouping::calendar_month, cfg.seasons, cfg.train_end);
  const FineField trend = estimate_trend(sub, obs_clim, model_clim, obs.spec);
  const BilinearStencil stencil = BilinearStencil::build(coarse.spec, obs.spec);

  std::array<FineField, 3> pred;
  pred[0] = interpolate_bilinear(sub, obs.spec);  // raw interpolated model
  pred[1] = trend;                                // stage-1 only

  ValidationReport report;
  report.has_bgl = cfg.stage2;
  if (cfg.stage2) {
    const LoadedArtifacts art = load_artifacts(cfg, true);
    std::array<std::vector<double>, 4> pooled;
    for (int season = 0; season < 4; ++season)
      pooled[season] = pooled_season_mean(coarse, season, cfg);
    FineField bgl = trend;
    const std::size_t nk = coarse.values.cols();
    parallel_for(static_cast<int>(months.size()), cfg.threads, [&](int i) {
      const int season = cfg.seasons.season_of(months[i].month);
      std::vector<double> anom(nk);
      kern::subtract(sub.values.row(i).data(), pooled[season].data(), anom.data(), nk);
      std::vector<double> e1(obs.spec.n_active());
      stencil.apply({anom.data(), nk}, {e1.data(), e1.size()});
      const MonthPrediction mp = downscale_month(
          trend.values.row(i), e1, *art.models[season], cfg.nugget_in_sd);
      std::copy(mp.mean.begin(), mp.mean.end(), bgl.values.row(i).data());
    });
    pred[2] = std::move(bgl);
  }

  // SSIM window
  std::optional<Rect> rect = cfg.ssim_rect;
  if (!rect) rect = largest_active_rect(obs.spec);
  const int nmethods = cfg.stage2 ? 3 : 2;
  for (int m = 0; m < nmethods; ++m) {
    const auto seasonal = mse_seasonal(pred[m], truth, cfg.seasons);
    for (int s = 0; s < 4; ++s) report.mse[m][s] = seasonal[s];
    report.mse[m][4] = mse_overall(pred[m], truth);
    report.mse_pixel[m] = mse_pixel(pred[m], truth);

    std::array<double, 4> ssum{};
    std::array<int, 4> scount{};
    double stotal = 0.0;
    SsimParams sp;
    sp.window = cfg.ssim_window;
    for (std::size_t i = 0; i < months.size(); ++i) {
      const Matrix pw = extract_window(pred[m], static_cast<int>(i), rect->r0,
                                       rect->c0, rect->r1, rect->c1);
      const Matrix tw = extract_window(truth, static_cast<int>(i), rect->r0,
                                       rect->c0, rect->r1, rect->c1);
      const double v = ssim(pw, tw, sp);
      const int season = cfg.seasons.season_of(months[i].month);
      ssum[season] += v;
      ++scount[season];
      stotal += v;
    }
    for (int s = 0; s < 4; ++s)
      report.ssim[m][s] = scount[s] ? ssum[s] / scount[s]
                                    : std::numeric_limits<double>::quiet_NaN();
    report.ssim[m][4] = stotal / months.size();
  }

  // emit artifacts
  fs::create_directories(cfg.output_dir);
  const fs::path dir(cfg.output_dir);
  {
    std::ofstream out((dir / "report.csv").string(), std::ios::trunc);
    out << report_csv(report);
    if (!out) fail(ErrorCode::IoFailure, "write error on report.csv");
  }
  const YearMonth map_tag{1, 1};  // nominal timestamp for time-less maps
  for (int m = 0; m < nmethods; ++m) {
    const std::string name = std::string("mse_") + kMethodNames[m];
    gsf::write_field(one_month_field(obs.spec, map_tag, report.mse_pixel[m]),
                     (dir / (name + ".gsf")).string());
    write_pgm((dir / (name + ".pgm")).string(), obs.spec, report.mse_pixel[m]);
  }
  if (cfg.stage2) {
    for (int m : {0, 1}) {
      auto ratio = mse_ratio_map(report.mse_pixel[2], report.mse_pixel[m]);
      write_pgm((dir / (std::string("mse_ratio_bgl_") + kMethodNames[m] + ".pgm"))
                    .string(),
                obs.spec, ratio);
      // the container cannot carry inf; clamp flagged pixels for the map file
      for (double& v : ratio)
        if (!std::isfinite(v)) v = 1e300;
      gsf::write_field(
          one_month_field(obs.spec, map_tag, ratio),
          (dir / (std::string("mse_ratio_bgl_") + kMethodNames[m] + ".gsf")).string());
    }
  }
  return report;
}

}  // namespace bgld
