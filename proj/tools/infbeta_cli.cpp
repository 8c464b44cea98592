#include <CLI11.hpp>

#include <iostream>

#include "infbeta/infbeta.hpp"

int main(int argc, char** argv) {
  using namespace infbeta;
  CLI::App app{"Zero-or-one inflated beta regression"};
  app.set_version_flag("--version", std::string("infbeta ") + INFBETA_VERSION);
  app.require_subcommand(1);

  FitCommand fit_cmd;
  std::string warm_start;
  auto* fit_app = app.add_subcommand("fit", "Fit a model to a CSV data file");
  fit_app->add_option("--config", fit_cmd.config, "Model config (JSON)")->required()->check(CLI::ExistingFile);
  fit_app->add_option("--data", fit_cmd.data, "Data file (CSV with header)")->required()->check(CLI::ExistingFile);
  fit_app->add_option("--out", fit_cmd.out, "Output directory")->required();
  fit_app->add_option("--warm-start", warm_start, "Saved model file used as the starting point")
      ->check(CLI::ExistingFile);

  DiagnoseCommand diag_cmd;
  auto* diag_app = app.add_subcommand("diagnose", "Residuals, influence and envelope tables for a saved model");
  diag_app->add_option("--model", diag_cmd.model, "Model file written by fit")->required()->check(CLI::ExistingFile);
  diag_app->add_option("--data", diag_cmd.data, "Data file the model was fitted to")
      ->required()
      ->check(CLI::ExistingFile);
  diag_app->add_option("--seed", diag_cmd.seed, "Seed for randomized residuals and the envelope")->required();
  diag_app->add_option("--out", diag_cmd.out, "Output directory")->required();
  diag_app->add_option("--simulations", diag_cmd.simulations, "Envelope simulations")
      ->default_val(100)
      ->check(CLI::Range(2, 100000));
  diag_app->add_option("--band", diag_cmd.band, "Envelope band level")->default_val(0.95);
  diag_app->add_option("--workers", diag_cmd.workers, "Worker threads (0: all cores)")->default_val(0);

  SimulateCommand sim_cmd;
  unsigned sim_workers = 0;
  auto* sim_app = app.add_subcommand("simulate", "Run a Monte Carlo experiment");
  sim_app->add_option("--config", sim_cmd.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sim_app->add_option("--out", sim_cmd.out, "Output directory")->required();
  auto* workers_opt = sim_app->add_option("--workers", sim_workers, "Worker threads; overrides the config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitSuccess : kExitUsage;
  }

  try {
    if (*fit_app) {
      if (!warm_start.empty()) fit_cmd.warm_start = warm_start;
      return cmd_fit(fit_cmd);
    }
    if (*diag_app) return cmd_diagnose(diag_cmd);
    if (*sim_app) {
      if (*workers_opt) sim_cmd.workers = sim_workers;
      return cmd_simulate(sim_cmd);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kExitUsage;
}
