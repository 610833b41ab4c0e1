// bgld: two-stage statistical downscaling driver.
//   bgld simulate --config cfg   generate a synthetic coarse/obs/truth dataset
//   bgld fit      --config cfg   fit trend climatologies and seasonal models
//   bgld predict  --config cfg --months 2023-01[,..]   downscale months
//   bgld validate --config cfg   score hold-out months, write report + maps

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bgld/pipeline.hpp"

namespace {

std::vector<bgld::YearMonth> parse_month_list(const std::string& s) {
  std::vector<bgld::YearMonth> months;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t comma = s.find(',', pos);
    if (comma == std::string::npos) comma = s.size();
    months.push_back(bgld::parse_year_month(s.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return months;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-stage statistical downscaling with basis graphical lasso"};
  app.require_subcommand(1);

  std::string config_path;
  std::string months_arg;
  std::uint64_t seed = 0;
  int threads = 0;
  bool seed_set = false, threads_set = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "pipeline config file")->required();
    cmd->add_option("--seed", seed, "override the config seed")
        ->each([&](const std::string&) { seed_set = true; });
    cmd->add_option("--threads", threads, "override the config thread count")
        ->each([&](const std::string&) { threads_set = true; });
  };

  CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  add_common(sim);
  CLI::App* fit = app.add_subcommand("fit", "fit climatologies and seasonal models");
  add_common(fit);
  CLI::App* predict = app.add_subcommand("predict", "downscale requested months");
  add_common(predict);
  predict->add_option("--months", months_arg, "comma-separated YYYY-MM list")
      ->required();
  CLI::App* validate = app.add_subcommand("validate", "score the hold-out window");
  add_common(validate);

  CLI11_PARSE(app, argc, argv);

  try {
    bgld::PipelineConfig cfg = bgld::load_config(config_path);
    if (seed_set) {
      cfg.seed = seed;
      cfg.scenario.seed = seed;
    }
    if (threads_set) cfg.threads = threads;

    if (sim->parsed()) {
      bgld::cmd_simulate(cfg);
    } else if (fit->parsed()) {
      bgld::cmd_fit(cfg);
    } else if (predict->parsed()) {
      bgld::cmd_predict(cfg, parse_month_list(months_arg));
    } else if (validate->parsed()) {
      const bgld::ValidationReport report = bgld::cmd_validate(cfg);
      std::fputs(bgld::report_csv(report).c_str(), stdout);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "bgld: %s\n", e.what());
    return 1;
  }
  return 0;
}
