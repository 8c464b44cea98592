#pragma once

// Monte Carlo experiments: simulate designs and responses from known
// parameters, refit, and summarize bias and root mean squared error.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "infbeta/distribution.hpp"
#include "infbeta/error.hpp"
#include "infbeta/fitting.hpp"
#include "infbeta/io.hpp"
#include "infbeta/parallel.hpp"

namespace infbeta {

enum class CovariateKind { normal, poisson, binomial };

inline std::string_view to_string(CovariateKind k) noexcept {
  switch (k) {
  case CovariateKind::normal: return "normal";
  case CovariateKind::poisson: return "poisson";
  case CovariateKind::binomial: return "binomial";
  }
  return "?";
}

// normal: N(0, 1); poisson: Poisson(1); binomial: 5 trials with success
// probability 0.2.
inline CovariateKind parse_covariate(const std::string& name) {
  if (name == "normal") return CovariateKind::normal;
  if (name == "poisson") return CovariateKind::poisson;
  if (name == "binomial") return CovariateKind::binomial;
  throw UsageError("unknown covariate generator '" + name + "' (expected normal, poisson or binomial)");
}

struct PredictorDesign {
  LinkKind link = LinkKind::logit;
  Vector truth;  // intercept first
  std::vector<CovariateKind> covariates;
};

struct ExperimentConfig {
  std::string name = "experiment";
  int c = 0;
  PredictorDesign alpha{LinkKind::logit, Vector(), {}};
  PredictorDesign mu{LinkKind::logit, Vector(), {}};
  PredictorDesign phi{LinkKind::log, Vector(), {}};
  std::vector<int> sample_sizes;
  int replications = 1;
  std::uint64_t seed = 1;
  unsigned workers = 0;  // 0: one per hardware thread
};

namespace detail {

inline PredictorDesign parse_design(const Json& j, const char* key, LinkKind default_link) {
  if (!j.contains(key)) throw UsageError(std::string("experiment config needs '") + key + "'");
  const Json& s = j.at(key);
  PredictorDesign d;
  d.link = s.contains("link") ? parse_link(s.at("link").get<std::string>()) : default_link;
  const auto truth = s.at("true").get<std::vector<double>>();
  d.truth = Eigen::Map<const Vector>(truth.data(), static_cast<Eigen::Index>(truth.size()));
  if (s.contains("covariates")) {
    for (const auto& name : s.at("covariates").get<std::vector<std::string>>()) {
      d.covariates.push_back(parse_covariate(name));
    }
  }
  if (d.truth.size() != static_cast<Eigen::Index>(d.covariates.size()) + 1) {
    throw UsageError(std::string("'") + key + ".true' needs one value for the intercept plus one per covariate");
  }
  return d;
}

inline Json design_json(const PredictorDesign& d) {
  Json j;
  j["link"] = std::string(to_string(d.link));
  j["true"] = std::vector<double>(d.truth.data(), d.truth.data() + d.truth.size());
  Json cov = Json::array();
  for (auto k : d.covariates) cov.push_back(std::string(to_string(k)));
  j["covariates"] = cov;
  return j;
}

} // namespace detail

inline ExperimentConfig parse_experiment_config(const Json& j) {
  try {
    ExperimentConfig cfg;
    cfg.name = j.value("name", std::string("experiment"));
    cfg.c = j.value("c", 0);
    if (cfg.c != 0 && cfg.c != 1) throw UsageError("experiment field 'c' must be 0 or 1");
    cfg.alpha = detail::parse_design(j, "alpha", LinkKind::logit);
    cfg.mu = detail::parse_design(j, "mu", LinkKind::logit);
    cfg.phi = detail::parse_design(j, "phi", LinkKind::log);
    if (!is_unit_link(cfg.alpha.link) || !is_unit_link(cfg.mu.link)) {
      throw UsageError("alpha and mu need a link for (0, 1)");
    }
    cfg.sample_sizes = j.at("sample_sizes").get<std::vector<int>>();
    if (cfg.sample_sizes.empty()) throw UsageError("experiment needs at least one sample size");
    for (int n : cfg.sample_sizes) {
      if (n < 2) throw UsageError("sample sizes must be at least 2");
    }
    cfg.replications = j.value("replications", 1);
    if (cfg.replications < 1) throw UsageError("replication count must be at least 1");
    cfg.seed = j.value("seed", std::uint64_t{1});
    cfg.workers = j.value("workers", 0u);
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("malformed experiment config: ") + e.what());
  }
}

inline Json to_json(const ExperimentConfig& cfg) {
  Json j;
  j["name"] = cfg.name;
  j["c"] = cfg.c;
  j["alpha"] = detail::design_json(cfg.alpha);
  j["mu"] = detail::design_json(cfg.mu);
  j["phi"] = detail::design_json(cfg.phi);
  j["sample_sizes"] = cfg.sample_sizes;
  j["replications"] = cfg.replications;
  j["seed"] = cfg.seed;
  j["workers"] = cfg.workers;
  return j;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_config(read_json_file(path));
}

// Per-replication random streams. Each replication owns three streams keyed
// by (sample size, replication index), so results do not depend on how work
// is split across threads. Indicators and beta draws use separate streams
// and a beta variate is drawn for every observation, which keeps the
// continuous draws common to experiments that differ only in alpha.
enum class StreamKind : std::uint64_t { covariates = 0, indicators = 1, responses = 2 };

inline std::uint64_t replication_stream(int n, int replication, StreamKind kind) {
  return (static_cast<std::uint64_t>(n) << 40) | (static_cast<std::uint64_t>(replication) << 2) |
         static_cast<std::uint64_t>(kind);
}

inline Matrix generate_design(RngStream& rng, Eigen::Index n, const std::vector<CovariateKind>& kinds) {
  Matrix A(n, static_cast<Eigen::Index>(kinds.size()) + 1);
  A.col(0).setOnes();
  std::poisson_distribution<int> poisson(1.0);
  std::binomial_distribution<int> binomial(5, 0.2);
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(kinds.size()); ++j) {
    for (Eigen::Index t = 0; t < n; ++t) {
      switch (kinds[static_cast<std::size_t>(j)]) {
      case CovariateKind::normal: A(t, j + 1) = rng.normal(); break;
      case CovariateKind::poisson: A(t, j + 1) = poisson(rng.engine()); break;
      case CovariateKind::binomial: A(t, j + 1) = binomial(rng.engine()); break;
      }
    }
  }
  return A;
}

inline std::vector<std::string> coefficient_names(const char* prefix, Eigen::Index count) {
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < count; ++j) names.push_back(prefix + std::to_string(j));
  return names;
}

struct SimulatedSample {
  ModelSpec spec;
  Vector y;
};

inline SimulatedSample simulate_sample(const ExperimentConfig& cfg, int n, int replication) {
  RngStream cov(cfg.seed, replication_stream(n, replication, StreamKind::covariates));
  RngStream ind(cfg.seed, replication_stream(n, replication, StreamKind::indicators));
  RngStream resp(cfg.seed, replication_stream(n, replication, StreamKind::responses));
  SimulatedSample s;
  s.spec.c = cfg.c;
  s.spec.link_alpha = cfg.alpha.link;
  s.spec.link_mu = cfg.mu.link;
  s.spec.link_phi = cfg.phi.link;
  s.spec.V = generate_design(cov, n, cfg.alpha.covariates);
  s.spec.X = generate_design(cov, n, cfg.mu.covariates);
  s.spec.Z = generate_design(cov, n, cfg.phi.covariates);
  s.spec.names_alpha = coefficient_names("rho", s.spec.p());
  s.spec.names_mu = coefficient_names("beta", s.spec.k());
  s.spec.names_phi = coefficient_names("gamma", s.spec.m());
  const Vector eta_a = s.spec.V * cfg.alpha.truth;
  const Vector eta_m = s.spec.X * cfg.mu.truth;
  const Vector eta_p = s.spec.Z * cfg.phi.truth;
  s.y.resize(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    const double alpha = link_inverse(cfg.alpha.link, eta_a[t]);
    const double mu = link_inverse(cfg.mu.link, eta_m[t]);
    const double phi = link_inverse(cfg.phi.link, eta_p[t]);
    const bool inflated = ind.uniform() < alpha;
    const double draw = beta_sample(resp, mu * phi, (1.0 - mu) * phi);
    s.y[t] = inflated ? static_cast<double>(cfg.c) : draw;
  }
  return s;
}

struct ReplicationOutcome {
  bool converged = false;
  Vector estimate;  // (rho, beta, gamma)
  std::string message;
};

inline ReplicationOutcome run_replication(const ExperimentConfig& cfg, int n, int replication,
                                          const FitOptions& opt = {}) {
  ReplicationOutcome out;
  try {
    const SimulatedSample s = simulate_sample(cfg, n, replication);
    const FittedModel f = fit(s.spec, Dataset(s.y, cfg.c), opt);
    out.converged = f.converged();
    out.estimate = f.theta_hat.flat();
    if (!out.converged) {
      out.message = f.discrete.converged ? f.continuous.message : f.discrete.message;
    }
  } catch (const Error& e) {
    out.message = e.what();
  }
  return out;
}

struct ParameterSummary {
  std::string name;
  double truth;
  double mean;
  double bias;
  double rmse;
};

struct SimulationCell {
  int n = 0;
  int replications = 0;
  int failures = 0;
  std::vector<ParameterSummary> parameters;
  std::vector<ReplicationOutcome> outcomes;
};

inline Vector true_theta(const ExperimentConfig& cfg) {
  Vector theta(cfg.alpha.truth.size() + cfg.mu.truth.size() + cfg.phi.truth.size());
  theta << cfg.alpha.truth, cfg.mu.truth, cfg.phi.truth;
  return theta;
}

// Bias = mean(estimate) - truth and RMSE = sqrt(mean((estimate - truth)^2))
// over converged replications, accumulated in replication order. With a
// constant alpha an extra "alpha" row summarizes the implied mass.
inline SimulationCell summarize_cell(const ExperimentConfig& cfg, int n,
                                     std::vector<ReplicationOutcome> outcomes) {
  SimulationCell cell;
  cell.n = n;
  cell.replications = static_cast<int>(outcomes.size());
  const Vector truth = true_theta(cfg);
  std::vector<std::string> names;
  for (auto* group : {&cfg.alpha, &cfg.mu, &cfg.phi}) {
    const char* prefix = group == &cfg.alpha ? "rho" : group == &cfg.mu ? "beta" : "gamma";
    for (const auto& s : coefficient_names(prefix, group->truth.size())) names.push_back(s);
  }
  const bool constant_alpha = cfg.alpha.covariates.empty();
  const Eigen::Index extra = constant_alpha ? 1 : 0;
  const Eigen::Index d = truth.size();
  Vector sum = Vector::Zero(d + extra);
  Vector sum_sq = Vector::Zero(d + extra);
  Vector target(d + extra);
  target.head(d) = truth;
  if (constant_alpha) target[d] = link_inverse(cfg.alpha.link, truth[0]);
  int ok = 0;
  for (const auto& o : outcomes) {
    if (!o.converged) {
      ++cell.failures;
      continue;
    }
    ++ok;
    Vector est(d + extra);
    est.head(d) = o.estimate;
    if (constant_alpha) est[d] = link_inverse(cfg.alpha.link, o.estimate[0]);
    const Vector err = est - target;
    sum += est;
    sum_sq += err.cwiseProduct(err);
  }
  if (constant_alpha) names.push_back("alpha");
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  for (Eigen::Index j = 0; j < d + extra; ++j) {
    const double mean = ok ? sum[j] / ok : nan;
    cell.parameters.push_back(
        {names[static_cast<std::size_t>(j)], target[j], mean, mean - target[j], ok ? std::sqrt(sum_sq[j] / ok) : nan});
  }
  cell.outcomes = std::move(outcomes);
  return cell;
}

inline std::vector<SimulationCell> run_experiment(const ExperimentConfig& cfg, const FitOptions& opt = {}) {
  const unsigned workers = cfg.workers == 0 ? default_workers() : cfg.workers;
  std::vector<SimulationCell> cells;
  for (int n : cfg.sample_sizes) {
    std::vector<ReplicationOutcome> outcomes(static_cast<std::size_t>(cfg.replications));
    parallel_for(outcomes.size(), workers, [&](std::size_t r) {
      outcomes[r] = run_replication(cfg, n, static_cast<int>(r), opt);
    });
    cells.push_back(summarize_cell(cfg, n, std::move(outcomes)));
  }
  return cells;
}

} // namespace infbeta
