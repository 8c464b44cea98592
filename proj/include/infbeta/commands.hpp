#pragma once

// The fit, diagnose and simulate commands. Each returns a process exit code
// and writes its artifacts into an output directory.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "infbeta/diagnostics.hpp"
#include "infbeta/error.hpp"
#include "infbeta/fitting.hpp"
#include "infbeta/inference.hpp"
#include "infbeta/io.hpp"
#include "infbeta/simulation.hpp"

namespace infbeta {

enum ExitCode : int {
  kExitSuccess = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitData = 3,
  kExitNonConvergence = 4,
};

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const VersionError*>(&e)) return kExitUsage;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const DegenerateDataError*>(&e) ||
      dynamic_cast<const DomainError*>(&e)) {
    return kExitData;
  }
  if (dynamic_cast<const NonConvergenceError*>(&e) || dynamic_cast<const EstimationError*>(&e)) {
    return kExitNonConvergence;
  }
  return kExitFailure;
}

namespace detail {

inline void prepare_out_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw UsageError("cannot create output directory '" + dir.string() + "'");
  }
}

inline Vector index_column(Eigen::Index n) {
  return Vector::LinSpaced(n, 1.0, static_cast<double>(n));
}

inline Vector interior_index_column(const Dataset& data) {
  Vector v(static_cast<Eigen::Index>(data.interior().size()));
  for (std::size_t i = 0; i < data.interior().size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = static_cast<double>(data.interior()[i] + 1);
  }
  return v;
}

inline Vector at_interior(const Vector& full, const Dataset& data) {
  Vector v(static_cast<Eigen::Index>(data.interior().size()));
  for (std::size_t i = 0; i < data.interior().size(); ++i) v[static_cast<Eigen::Index>(i)] = full[data.interior()[i]];
  return v;
}

inline void write_coefficients(const std::filesystem::path& path, const FittedModel& f, double varsigma) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + path.string() + "'");
  out << "component,term,estimate,std_error,z,p_value,lower,upper\n";
  if (f.converged()) {
    for (const auto& r : inference_summary(f, varsigma)) {
      out << to_string(r.component) << ',' << csv_quote(r.name) << ',' << format_double(r.estimate) << ','
          << format_double(r.std_error) << ',' << format_double(r.z) << ',' << format_double(r.p_value) << ','
          << format_double(r.lower) << ',' << format_double(r.upper) << '\n';
    }
    return;
  }
  // Partial fit: estimates only, since standard errors need both components.
  const auto& s = f.spec;
  const Vector theta = f.theta_hat.flat();
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    Component comp = j < s.p() ? Component::alpha : j < s.p() + s.k() ? Component::mu : Component::phi;
    const std::string& name = comp == Component::alpha ? s.names_alpha[static_cast<std::size_t>(j)]
                              : comp == Component::mu  ? s.names_mu[static_cast<std::size_t>(j - s.p())]
                                                       : s.names_phi[static_cast<std::size_t>(j - s.p() - s.k())];
    out << to_string(comp) << ',' << csv_quote(name) << ',' << format_double(theta[j]);
    for (int i = 0; i < 5; ++i) out << ',' << format_double(nan);
    out << '\n';
  }
}

inline Json component_summary(const ComponentFit& c) {
  return {{"converged", c.converged},
          {"iterations", c.iterations},
          {"score_norm", number_json(c.score_norm)},
          {"message", c.message}};
}

} // namespace detail

struct FitCommand {
  std::filesystem::path config;
  std::filesystem::path data;
  std::filesystem::path out;
  std::optional<std::filesystem::path> warm_start;  // a saved model file
};

// Writes model.json, coefficients.csv and fit_summary.json.
inline int cmd_fit(const FitCommand& cmd, std::ostream& log = std::cerr) {
  const ModelConfig cfg = load_model_config(cmd.config);
  LoadedData loaded = load_csv_dataset(cmd.data, cfg);
  detail::prepare_out_dir(cmd.out);
  std::optional<ParameterVector> init;
  if (cmd.warm_start) init = load_model(*cmd.warm_start).fitted.theta_hat;

  const FittedModel f = fit(loaded.spec, loaded.data, {}, init);
  save_model(f, cmd.out / "model.json", cfg);
  detail::write_coefficients(cmd.out / "coefficients.csv", f, 1.0 - cfg.confidence);

  Json summary;
  summary["converged"] = f.converged();
  summary["n"] = f.data.size();
  summary["n_at_c"] = f.data.count_at_c();
  summary["loglik"] = detail::number_json(f.loglik);
  summary["discrete"] = detail::component_summary(f.discrete);
  summary["continuous"] = detail::component_summary(f.continuous);
  if (f.converged()) {
    const auto r2 = pseudo_r2(f);
    summary["pseudo_r2"] = {{"corr", detail::number_json(r2.corr)},
                            {"mcfadden", detail::number_json(r2.mcfadden)},
                            {"cox_snell", detail::number_json(r2.cox_snell)},
                            {"warning", r2.warning}};
    const auto ic = information_criteria(f);
    summary["criteria"] = {{"AIC", ic.aic}, {"SBC", ic.sbc}, {"CAIC", ic.caic}};
  }
  write_json_file(cmd.out / "fit_summary.json", summary);

  if (!f.converged()) {
    log << "fit did not converge\n";
    if (!f.discrete.converged) {
      log << "  " << f.discrete.message << " (score sup-norm " << format_double(f.discrete.score_norm) << ")\n";
    }
    if (!f.continuous.converged) {
      log << "  " << f.continuous.message << " (score sup-norm " << format_double(f.continuous.score_norm)
          << ")\n";
    }
    return kExitNonConvergence;
  }
  return kExitSuccess;
}

struct DiagnoseCommand {
  std::filesystem::path model;
  std::filesystem::path data;
  std::uint64_t seed = 1;
  std::filesystem::path out;
  int simulations = 100;
  double band = 0.95;
  unsigned workers = 0;
};

// Plot-ready tables: quantile residuals (four realizations), the simulated
// envelope, discrete and continuous Pearson residuals with leverages, and
// both Cook-style statistics, plus diagnostics.json.
inline int cmd_diagnose(const DiagnoseCommand& cmd, std::ostream& log = std::cerr) {
  const SavedModel saved = load_model(cmd.model);
  const FittedModel& f = saved.fitted;
  if (!saved.config) throw UsageError("model file has no config echo; cannot rebuild designs from the data");
  const LoadedData loaded = load_csv_dataset(cmd.data, *saved.config);
  if (loaded.data.size() != f.data.size()) {
    throw UsageError("data has " + std::to_string(loaded.data.size()) + " rows but the model was fitted to " +
                     std::to_string(f.data.size()));
  }
  if (data_hash(loaded.spec, loaded.data) != data_hash(f.spec, f.data)) {
    throw UsageError("data do not match the data the model was fitted to (hash mismatch)");
  }
  detail::require_converged(f);
  detail::prepare_out_dir(cmd.out);
  const unsigned workers = cmd.workers == 0 ? default_workers() : cmd.workers;

  const DiagnosticsReport rep = diagnose(f, cmd.seed);
  const Eigen::Index n = f.data.size();
  const Vector index = detail::index_column(n);

  std::vector<std::string> header{"index", "y"};
  std::vector<Vector> cols{index, f.data.y()};
  for (std::size_t j = 0; j < rep.r_q.size(); ++j) {
    header.push_back("r_q" + std::to_string(j + 1));
    cols.push_back(rep.r_q[j]);
  }
  write_numeric_csv(cmd.out / "quantile_residuals.csv", header, cols);

  const Envelope env = simulated_envelope(f, cmd.seed, cmd.simulations, cmd.band, workers);
  Vector observed = rep.r_q.front();
  std::sort(observed.begin(), observed.end());
  const Vector ranks = detail::index_column(n);
  Vector expected(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    expected[i] = normal_quantile((static_cast<double>(i) + 0.625) / (static_cast<double>(n) + 0.25));
  }
  write_numeric_csv(cmd.out / "envelope.csv", {"rank", "normal_quantile", "observed", "lower", "median", "upper"},
                    {ranks, expected, observed, env.lower, env.median, env.upper});

  write_numeric_csv(cmd.out / "pearson_discrete.csv", {"index", "alpha_hat", "r_pD", "h_tt"},
                    {index, f.alpha, rep.r_pD, rep.h_tt});
  const Vector interior = detail::interior_index_column(f.data);
  write_numeric_csv(cmd.out / "pearson_continuous.csv", {"index", "mu_hat", "r_pC", "P_tt"},
                    {interior, detail::at_interior(f.mu, f.data), rep.r_pC, rep.P_tt});
  write_numeric_csv(cmd.out / "cook_discrete.csv", {"index", "c_D"}, {index, rep.c_D});
  write_numeric_csv(cmd.out / "cook_continuous.csv", {"index", "c_C"}, {interior, rep.c_C});

  Json j;
  j["seed"] = cmd.seed;
  j["pseudo_r2"] = {{"corr", detail::number_json(rep.pseudo_r2.corr)},
                    {"mcfadden", detail::number_json(rep.pseudo_r2.mcfadden)},
                    {"cox_snell", detail::number_json(rep.pseudo_r2.cox_snell)},
                    {"warning", rep.pseudo_r2.warning}};
  j["criteria"] = {{"AIC", rep.criteria.aic}, {"SBC", rep.criteria.sbc}, {"CAIC", rep.criteria.caic}};
  j["envelope"] = {{"simulations", env.simulations},
                   {"failures", env.failures},
                   {"band", cmd.band},
                   {"coverage", envelope_coverage(env, rep.r_q.front())}};
  j["note"] = rep.note;
  write_json_file(cmd.out / "diagnostics.json", j);
  if (!rep.pseudo_r2.warning.empty()) log << "warning: " << rep.pseudo_r2.warning << '\n';
  return kExitSuccess;
}

struct SimulateCommand {
  std::filesystem::path config;
  std::filesystem::path out;
  std::optional<unsigned> workers;  // overrides the config
};

// Writes simulation.csv (one row per sample size and coefficient) and
// simulation.json with failure counts.
inline int cmd_simulate(const SimulateCommand& cmd, std::ostream& log = std::cerr) {
  ExperimentConfig cfg = load_experiment_config(cmd.config);
  if (cmd.workers) cfg.workers = *cmd.workers;
  detail::prepare_out_dir(cmd.out);
  const auto cells = run_experiment(cfg);

  std::ofstream out(cmd.out / "simulation.csv", std::ios::binary);
  if (!out) throw UsageError("cannot write simulation.csv");
  out << "n,parameter,true,mean,bias,rmse,converged,failures\n";
  Json j;
  j["name"] = cfg.name;
  j["replications"] = cfg.replications;
  j["seed"] = cfg.seed;
  j["cells"] = Json::array();
  for (const auto& cell : cells) {
    const int ok = cell.replications - cell.failures;
    for (const auto& p : cell.parameters) {
      out << cell.n << ',' << p.name << ',' << format_double(p.truth) << ',' << format_double(p.mean) << ','
          << format_double(p.bias) << ',' << format_double(p.rmse) << ',' << ok << ',' << cell.failures << '\n';
    }
    Json failures = Json::array();
    for (std::size_t r = 0; r < cell.outcomes.size(); ++r) {
      if (!cell.outcomes[r].converged) failures.push_back({{"replication", r}, {"message", cell.outcomes[r].message}});
    }
    j["cells"].push_back({{"n", cell.n},
                          {"replications", cell.replications},
                          {"failures", cell.failures},
                          {"failure_rate", static_cast<double>(cell.failures) / cell.replications},
                          {"failed", failures}});
    log << "n = " << cell.n << ": " << cell.failures << " of " << cell.replications
        << " replications failed to converge\n";
  }
  write_json_file(cmd.out / "simulation.json", j);
  return kExitSuccess;
}

} // namespace infbeta
