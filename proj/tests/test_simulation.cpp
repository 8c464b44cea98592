#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "infbeta/simulation.hpp"

using namespace infbeta;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_experiment() {
  auto cfg = load_experiment_config(fs::path(INFBETA_CONFIGS) / "second_experiment.json");
  cfg.sample_sizes = {60, 120};
  cfg.replications = 24;
  return cfg;
}

} // namespace

TEST(ExperimentConfig, ShippedConfigsParse) {
  for (const char* name : {"second_experiment.json", "first_experiment_alpha_18.json", "first_experiment_alpha_32.json",
                           "first_experiment_alpha_68.json", "first_experiment_alpha_82.json"}) {
    const auto cfg = load_experiment_config(fs::path(INFBETA_CONFIGS) / name);
    EXPECT_EQ(cfg.mu.truth.size(), 4) << name;
    EXPECT_GE(cfg.replications, 1);
    const auto back = parse_experiment_config(to_json(cfg));
    EXPECT_EQ(to_json(back).dump(), to_json(cfg).dump());
  }
}

TEST(ExperimentConfig, FirstExperimentAlphaValues) {
  const std::pair<const char*, double> cases[] = {{"first_experiment_alpha_18.json", 0.18},
                                                  {"first_experiment_alpha_32.json", 0.32},
                                                  {"first_experiment_alpha_68.json", 0.68},
                                                  {"first_experiment_alpha_82.json", 0.82}};
  for (const auto& [name, alpha] : cases) {
    const auto cfg = load_experiment_config(fs::path(INFBETA_CONFIGS) / name);
    EXPECT_TRUE(cfg.alpha.covariates.empty());
    EXPECT_NEAR(link_inverse(cfg.alpha.link, cfg.alpha.truth[0]), alpha, 1e-12) << name;
  }
}

TEST(ExperimentConfig, RejectsInvalidInput) {
  const auto base = to_json(small_experiment());
  auto bad = base;
  bad["replications"] = 0;
  EXPECT_THROW(parse_experiment_config(bad), UsageError);
  bad = base;
  bad["mu"]["covariates"][0] = "uniform";
  EXPECT_THROW(parse_experiment_config(bad), UsageError);
  bad = base;
  bad["phi"]["true"] = {1.0, 2.0};
  EXPECT_THROW(parse_experiment_config(bad), UsageError);
  bad = base;
  bad["sample_sizes"] = Json::array();
  EXPECT_THROW(parse_experiment_config(bad), UsageError);
  bad = base;
  bad.erase("alpha");
  EXPECT_THROW(parse_experiment_config(bad), UsageError);
  bad = base;
  bad["c"] = 3;
  EXPECT_THROW(parse_experiment_config(bad), UsageError);
}

TEST(Covariates, GeneratorMoments) {
  RngStream rng(3, 3);
  const Eigen::Index n = 200000;
  const Matrix A = generate_design(
      rng, n, {CovariateKind::normal, CovariateKind::poisson, CovariateKind::binomial});
  EXPECT_EQ(A.col(0), Vector::Ones(n));
  const double means[] = {0.0, 1.0, 1.0};
  const double vars[] = {1.0, 1.0, 0.8};
  for (int j = 0; j < 3; ++j) {
    const Vector x = A.col(j + 1);
    const double mean = x.mean();
    const double var = (x.array() - mean).square().sum() / static_cast<double>(n - 1);
    EXPECT_NEAR(mean, means[j], 4.0 * std::sqrt(vars[j] / n)) << j;
    EXPECT_NEAR(var, vars[j], 0.02) << j;
  }
  EXPECT_GE(A.col(3).minCoeff(), 0.0);
  EXPECT_LE(A.col(3).maxCoeff(), 5.0);
  EXPECT_EQ(A.col(2), A.col(2).array().round().matrix());
}

TEST(SimulateSample, DeterministicAndKeyedByReplication) {
  const auto cfg = small_experiment();
  const auto a = simulate_sample(cfg, 60, 3);
  const auto b = simulate_sample(cfg, 60, 3);
  EXPECT_EQ(a.y, b.y);
  EXPECT_EQ(a.spec.V, b.spec.V);
  const auto c = simulate_sample(cfg, 60, 4);
  EXPECT_NE(a.y, c.y);
  EXPECT_NE(a.spec.X, c.spec.X);
  const auto d = simulate_sample(cfg, 61, 3);
  EXPECT_NE(a.y.head(60), d.y.head(60));
  for (double y : a.y) EXPECT_TRUE(y == 0.0 || (y > 0.0 && y < 1.0));
  EXPECT_EQ(a.spec.names_phi.back(), "gamma3");
}

TEST(SimulateSample, StreamKeysAreDistinct) {
  std::set<std::uint64_t> keys;
  for (int n : {50, 150, 300}) {
    for (int r = 0; r < 500; ++r) {
      for (auto k : {StreamKind::covariates, StreamKind::indicators, StreamKind::responses}) {
        keys.insert(replication_stream(n, r, k));
      }
    }
  }
  EXPECT_EQ(keys.size(), 3u * 3u * 500u);
}

TEST(SimulateSample, ExperimentsDifferingInAlphaShareContinuousDraws) {
  auto lo = load_experiment_config(fs::path(INFBETA_CONFIGS) / "first_experiment_alpha_18.json");
  auto hi = load_experiment_config(fs::path(INFBETA_CONFIGS) / "first_experiment_alpha_82.json");
  hi.seed = lo.seed;
  const auto a = simulate_sample(lo, 150, 0);
  const auto b = simulate_sample(hi, 150, 0);
  EXPECT_EQ(a.spec.X, b.spec.X);
  int shared = 0;
  for (Eigen::Index t = 0; t < 150; ++t) {
    if (a.y[t] > 0.0 && b.y[t] > 0.0) {
      EXPECT_EQ(a.y[t], b.y[t]);
      ++shared;
    }
    // The same uniform decides inflation, so a higher alpha only adds zeros.
    if (a.y[t] == 0.0) EXPECT_EQ(b.y[t], 0.0);
  }
  EXPECT_GT(shared, 0);
}

TEST(SimulateSample, InflationFrequencyMatchesAlpha) {
  auto cfg = load_experiment_config(fs::path(INFBETA_CONFIGS) / "first_experiment_alpha_32.json");
  int zeros = 0, total = 0;
  for (int r = 0; r < 50; ++r) {
    const auto s = simulate_sample(cfg, 400, r);
    zeros += static_cast<int>((s.y.array() == 0.0).count());
    total += 400;
  }
  EXPECT_NEAR(zeros / static_cast<double>(total), 0.32, 4.0 * std::sqrt(0.32 * 0.68 / total));
}

TEST(RunExperiment, WorkerCountDoesNotChangeResults) {
  auto cfg = small_experiment();
  cfg.workers = 1;
  const auto serial = run_experiment(cfg);
  cfg.workers = 5;
  const auto parallel = run_experiment(cfg);
  ASSERT_EQ(serial.size(), parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    EXPECT_EQ(serial[i].failures, parallel[i].failures);
    ASSERT_EQ(serial[i].parameters.size(), parallel[i].parameters.size());
    for (std::size_t j = 0; j < serial[i].parameters.size(); ++j) {
      const auto& s = serial[i].parameters[j];
      const auto& p = parallel[i].parameters[j];
      EXPECT_EQ(s.name, p.name);
      EXPECT_EQ(s.bias, p.bias);
      EXPECT_EQ(s.rmse, p.rmse);
    }
  }
}

TEST(RunExperiment, SummaryDefinitions) {
  const auto cfg = small_experiment();
  std::vector<ReplicationOutcome> outcomes(3);
  const Vector truth = true_theta(cfg);
  outcomes[0] = {true, truth.array() + 0.1, ""};
  outcomes[1] = {true, truth.array() - 0.3, ""};
  outcomes[2] = {false, Vector::Constant(truth.size(), 1e6), "diverged"};
  const auto cell = summarize_cell(cfg, 50, outcomes);
  EXPECT_EQ(cell.replications, 3);
  EXPECT_EQ(cell.failures, 1);
  ASSERT_EQ(cell.parameters.size(), static_cast<std::size_t>(truth.size()));
  for (const auto& p : cell.parameters) {
    EXPECT_NEAR(p.bias, -0.1, 1e-12) << p.name;
    EXPECT_NEAR(p.rmse, std::sqrt((0.01 + 0.09) / 2.0), 1e-12) << p.name;
    EXPECT_NEAR(p.mean, p.truth - 0.1, 1e-12);
  }
  EXPECT_EQ(cell.parameters[0].name, "rho0");
  EXPECT_EQ(cell.parameters[4].name, "beta0");
}

TEST(RunExperiment, ConstantAlphaAddsImpliedMassRow) {
  auto cfg = load_experiment_config(fs::path(INFBETA_CONFIGS) / "first_experiment_alpha_68.json");
  cfg.replications = 10;
  cfg.workers = 2;
  const auto cells = run_experiment(cfg);
  ASSERT_EQ(cells.size(), 1u);
  const auto& rows = cells[0].parameters;
  EXPECT_EQ(rows.back().name, "alpha");
  EXPECT_NEAR(rows.back().truth, 0.68, 1e-12);
  EXPECT_LT(std::abs(rows.back().bias), 0.05);
}

TEST(RunExperiment, EstimatesAreCloseToTruth) {
  auto cfg = small_experiment();
  cfg.sample_sizes = {300};
  cfg.replications = 40;
  const auto cells = run_experiment(cfg);
  const auto& cell = cells[0];
  EXPECT_LE(cell.failures, 2);
  for (const auto& p : cell.parameters) {
    // Mean over 40 replications is within a few RMSE/sqrt(R) of the truth.
    EXPECT_LT(std::abs(p.bias), 4.0 * p.rmse / std::sqrt(38.0) + 0.01) << p.name;
  }
}
