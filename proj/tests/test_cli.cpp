#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "infbeta/commands.hpp"
#include "support/oracles.hpp"

using namespace infbeta;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs{INFBETA_CONFIGS};

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("infbeta_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct RunResult {
  int code;
  std::string output;
};

// Runs the CLI with stdout and stderr captured together.
RunResult run_cli(const std::string& args) {
  const auto log = fs::temp_directory_path() / ("infbeta_cli_log_" + std::to_string(::getpid()));
  const std::string cmd = std::string("\"") + INFBETA_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::ostringstream ss;
  ss << in.rdbuf();
  fs::remove(log);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) { std::ofstream(path, std::ios::binary) << text; }

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

std::string fit_args(const fs::path& config, const fs::path& data, const fs::path& out) {
  return "fit --config " + q(config) + " --data " + q(data) + " --out " + q(out);
}

CsvTable coefficients(const fs::path& dir) { return read_csv(dir / "coefficients.csv"); }

std::size_t data_rows(const fs::path& path) { return read_csv(path).rows.size(); }

// Writes a CSV with columns y, v, x, z from a fixture with one covariate per
// predictor.
void write_fixture_csv(const oracle::Fixture& fx, const fs::path& path) {
  std::ofstream out(path);
  out << "y,v,x,z\n";
  for (Eigen::Index t = 0; t < fx.data.size(); ++t) {
    out << format_double(fx.data.y()[t]) << ',' << format_double(fx.spec.V(t, 1)) << ','
        << format_double(fx.spec.X(t, 1)) << ',' << format_double(fx.spec.Z(t, 1)) << '\n';
  }
}

const char* kFixtureConfig = R"({"c": 0, "alpha": {"terms": ["v"]}, "mu": {"terms": ["x"]},
                                 "phi": {"terms": ["z"]}, "confidence": 0.95, "seed": 5})";

} // namespace

TEST(Cli, VersionAndHelp) {
  const auto v = run_cli("--version");
  EXPECT_EQ(v.code, 0);
  EXPECT_NE(v.output.find(std::string("infbeta ") + INFBETA_VERSION), std::string::npos);
  const auto h = run_cli("--help");
  EXPECT_EQ(h.code, 0);
  EXPECT_NE(h.output.find("simulate"), std::string::npos);
}

TEST(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run_cli("").code, kExitUsage);
  EXPECT_EQ(run_cli("bogus").code, kExitUsage);
  EXPECT_EQ(run_cli("fit --config " + q(kConfigs / "application_fit.json")).code, kExitUsage);
  EXPECT_EQ(run_cli("fit --config /nonexistent.json --data /nonexistent.csv --out /tmp/x").code, kExitUsage);
  const auto dir = scratch("usage");
  write_text(dir / "bad.json", R"({"c": 5})");
  EXPECT_EQ(run_cli(fit_args(dir / "bad.json", kConfigs / "application_synthetic.csv", dir / "out")).code,
            kExitUsage);
  write_text(dir / "broken.json", "{");
  EXPECT_EQ(run_cli(fit_args(dir / "broken.json", kConfigs / "application_synthetic.csv", dir / "out")).code,
            kExitUsage);
  fs::remove_all(dir);
}

TEST(Cli, DataErrorsExitWithThree) {
  const auto dir = scratch("data");
  write_text(dir / "cfg.json", "{}");
  write_text(dir / "extreme.csv", "y\n0\n0.2\n1\n0.5\n");
  const auto r = run_cli(fit_args(dir / "cfg.json", dir / "extreme.csv", dir / "out"));
  EXPECT_EQ(r.code, kExitData);
  EXPECT_NE(r.output.find("rows 3"), std::string::npos) << r.output;
  write_text(dir / "text.csv", "y\n0\nabc\n");
  EXPECT_EQ(run_cli(fit_args(dir / "cfg.json", dir / "text.csv", dir / "out")).code, kExitData);
  fs::remove_all(dir);
}

TEST(Cli, NonConvergenceExitsWithFourAndKeepsPartialArtifacts) {
  const auto dir = scratch("nonconv");
  write_text(dir / "cfg.json", "{}");
  write_text(dir / "nozeros.csv", "y\n0.1\n0.4\n0.35\n0.8\n0.6\n0.2\n");
  const auto r = run_cli(fit_args(dir / "cfg.json", dir / "nozeros.csv", dir / "out"));
  EXPECT_EQ(r.code, kExitNonConvergence);
  EXPECT_NE(r.output.find("score sup-norm"), std::string::npos) << r.output;
  EXPECT_TRUE(fs::exists(dir / "out" / "model.json"));
  EXPECT_EQ(data_rows(dir / "out" / "coefficients.csv"), 3u);
  const auto summary = Json::parse(slurp(dir / "out" / "fit_summary.json"));
  EXPECT_FALSE(summary["converged"].get<bool>());
  EXPECT_TRUE(summary["continuous"]["converged"].get<bool>());
  fs::remove_all(dir);
}

TEST(Cli, FitWritesArtifactsAndWarmStartIsAFixedPoint) {
  const auto dir = scratch("fit");
  const auto cfg = kConfigs / "application_fit.json";
  const auto data = kConfigs / "application_synthetic.csv";
  ASSERT_EQ(run_cli(fit_args(cfg, data, dir / "a")).code, 0);
  const auto table = coefficients(dir / "a");
  EXPECT_EQ(table.rows.size(), 12u);
  EXPECT_EQ(table.header[3], "std_error");
  const auto loaded = load_model(dir / "a" / "model.json");
  EXPECT_TRUE(loaded.fitted.converged());
  const auto r = run_cli(fit_args(cfg, data, dir / "b") + " --warm-start " + q(dir / "a" / "model.json"));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto summary = Json::parse(slurp(dir / "b" / "fit_summary.json"));
  EXPECT_LE(summary["discrete"]["iterations"].get<int>(), 2);
  EXPECT_LE(summary["continuous"]["iterations"].get<int>(), 2);
  const auto warm = load_model(dir / "b" / "model.json").fitted;
  EXPECT_LT((warm.theta_hat.flat() - loaded.fitted.theta_hat.flat()).cwiseAbs().maxCoeff(), 1e-6);
  fs::remove_all(dir);
}

TEST(Cli, InterceptOnlyStandardErrorIsBinomial) {
  const auto dir = scratch("intercept");
  write_text(dir / "cfg.json", "{}");
  std::string csv = "y\n";
  RngStream rng(4, 4);
  int zeros = 0;
  const int n = 200;
  for (int t = 0; t < n; ++t) {
    const bool zero = t % 4 == 0;
    zeros += zero;
    csv += zero ? "0\n" : format_double(0.1 + 0.8 * rng.uniform()) + "\n";
  }
  write_text(dir / "d.csv", csv);
  ASSERT_EQ(run_cli(fit_args(dir / "cfg.json", dir / "d.csv", dir / "out")).code, 0);
  const auto table = coefficients(dir / "out");
  const double a = static_cast<double>(zeros) / n;
  const double est = std::stod(table.rows[0][2]);
  const double se = std::stod(table.rows[0][3]);
  EXPECT_NEAR(1.0 / (1.0 + std::exp(-est)), a, 1e-8);
  // s.e. of the sample proportion divided by dalpha/deta = a (1 - a).
  EXPECT_NEAR(se, std::sqrt(a * (1 - a) / n) / (a * (1 - a)), 1e-8);
  fs::remove_all(dir);
}

TEST(Cli, FitRecoversKnownParameters) {
  const auto dir = scratch("consistency");
  const auto fx = oracle::simple_fixture(808, 5000);
  write_fixture_csv(fx, dir / "d.csv");
  write_text(dir / "cfg.json", kFixtureConfig);
  ASSERT_EQ(run_cli(fit_args(dir / "cfg.json", dir / "d.csv", dir / "out")).code, 0);
  const auto table = coefficients(dir / "out");
  const Vector truth = fx.theta.flat();
  ASSERT_EQ(table.rows.size(), static_cast<std::size_t>(truth.size()));
  for (std::size_t j = 0; j < table.rows.size(); ++j) {
    const double est = std::stod(table.rows[j][2]);
    const double se = std::stod(table.rows[j][3]);
    EXPECT_LT(std::abs(est - truth[static_cast<Eigen::Index>(j)]), 4.0 * se) << table.rows[j][1];
  }
  fs::remove_all(dir);
}

TEST(Cli, DiagnoseTablesAndDeterminism) {
  const auto dir = scratch("diagnose");
  auto fx = oracle::simple_fixture(809, 120, 0, (Vector(2) << -1.0, 0.5).finished(),
                                   (Vector(2) << 0.3, -0.5).finished(), (Vector(2) << 3.0, 0.0).finished());
  const auto planted = oracle::plant_outlier(fx, 809);
  write_fixture_csv(fx, dir / "d.csv");
  write_text(dir / "cfg.json", kFixtureConfig);
  ASSERT_EQ(run_cli(fit_args(dir / "cfg.json", dir / "d.csv", dir / "fit")).code, 0);
  const std::string base = "diagnose --model " + q(dir / "fit" / "model.json") + " --data " + q(dir / "d.csv") +
                           " --seed 42 --simulations 30";
  ASSERT_EQ(run_cli(base + " --workers 1 --out " + q(dir / "a")).code, 0);
  ASSERT_EQ(run_cli(base + " --workers 3 --out " + q(dir / "b")).code, 0);

  const std::size_t n = 120, ni = fx.data.interior().size();
  EXPECT_EQ(data_rows(dir / "a" / "quantile_residuals.csv"), n);
  EXPECT_EQ(read_csv(dir / "a" / "quantile_residuals.csv").header.size(), 6u);
  EXPECT_EQ(data_rows(dir / "a" / "envelope.csv"), n);
  EXPECT_EQ(data_rows(dir / "a" / "pearson_discrete.csv"), n);
  EXPECT_EQ(data_rows(dir / "a" / "cook_discrete.csv"), n);
  EXPECT_EQ(data_rows(dir / "a" / "pearson_continuous.csv"), ni);
  EXPECT_EQ(data_rows(dir / "a" / "cook_continuous.csv"), ni);

  for (const auto& entry : fs::directory_iterator(dir / "a")) {
    EXPECT_EQ(slurp(entry.path()), slurp(dir / "b" / entry.path().filename())) << entry.path().filename();
  }

  // The planted case has the largest continuous Cook statistic.
  const auto cook = read_csv(dir / "a" / "cook_continuous.csv");
  double best = -1.0;
  long best_index = -1;
  for (const auto& row : cook.rows) {
    const double v = parse_table_value(row[1]);
    if (v > best) {
      best = v;
      best_index = std::lround(std::stod(row[0]));
    }
  }
  EXPECT_EQ(best_index, planted + 1);

  const auto diag = Json::parse(slurp(dir / "a" / "diagnostics.json"));
  EXPECT_EQ(diag["envelope"]["simulations"].get<int>(), 30);
  EXPECT_EQ(diag["envelope"]["band"].get<double>(), 0.95);
  fs::remove_all(dir);
}

TEST(Cli, DiagnoseDefaultsToHundredSimulations) {
  const auto dir = scratch("diag_default");
  const auto fx = oracle::simple_fixture(810, 80);
  write_fixture_csv(fx, dir / "d.csv");
  write_text(dir / "cfg.json", kFixtureConfig);
  ASSERT_EQ(run_cli(fit_args(dir / "cfg.json", dir / "d.csv", dir / "fit")).code, 0);
  ASSERT_EQ(run_cli("diagnose --model " + q(dir / "fit" / "model.json") + " --data " + q(dir / "d.csv") +
                    " --seed 1 --out " + q(dir / "out"))
                .code,
            0);
  const auto diag = Json::parse(slurp(dir / "out" / "diagnostics.json"));
  EXPECT_EQ(diag["envelope"]["simulations"].get<int>(), 100);
  fs::remove_all(dir);
}

TEST(Cli, DiagnoseRejectsMismatchedData) {
  const auto dir = scratch("mismatch");
  const auto fx = oracle::simple_fixture(811, 80);
  write_fixture_csv(fx, dir / "d.csv");
  write_text(dir / "cfg.json", kFixtureConfig);
  ASSERT_EQ(run_cli(fit_args(dir / "cfg.json", dir / "d.csv", dir / "fit")).code, 0);
  // Same row count, one covariate changed.
  auto other = fx;
  other.spec.Z(5, 1) += 0.25;
  write_fixture_csv(other, dir / "e.csv");
  const auto model = q(dir / "fit" / "model.json");
  auto r = run_cli("diagnose --model " + model + " --data " + q(dir / "e.csv") + " --seed 1 --out " + q(dir / "o"));
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.output.find("hash"), std::string::npos);
  const auto shorter = oracle::simple_fixture(811, 79);
  write_fixture_csv(shorter, dir / "f.csv");
  r = run_cli("diagnose --model " + model + " --data " + q(dir / "f.csv") + " --seed 1 --out " + q(dir / "o"));
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.output.find("rows"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Cli, SimulateIsDeterministicAcrossWorkerCounts) {
  const auto dir = scratch("simulate");
  auto j = read_json_file(kConfigs / "second_experiment.json");
  j["sample_sizes"] = {50, 100};
  j["replications"] = 16;
  write_json_file(dir / "exp.json", j);
  ASSERT_EQ(run_cli("simulate --config " + q(dir / "exp.json") + " --workers 1 --out " + q(dir / "a")).code, 0);
  ASSERT_EQ(run_cli("simulate --config " + q(dir / "exp.json") + " --workers 4 --out " + q(dir / "b")).code, 0);
  EXPECT_EQ(slurp(dir / "a" / "simulation.csv"), slurp(dir / "b" / "simulation.csv"));
  EXPECT_EQ(slurp(dir / "a" / "simulation.json"), slurp(dir / "b" / "simulation.json"));
  EXPECT_EQ(data_rows(dir / "a" / "simulation.csv"), 2u * 12u);
  fs::remove_all(dir);
}

TEST(Cli, FitIsDeterministic) {
  const auto dir = scratch("fit_det");
  const auto cfg = kConfigs / "application_full.json";
  const auto data = kConfigs / "application_synthetic.csv";
  const int a = run_cli(fit_args(cfg, data, dir / "a")).code;
  const int b = run_cli(fit_args(cfg, data, dir / "b")).code;
  EXPECT_EQ(a, b);
  for (const char* name : {"model.json", "coefficients.csv", "fit_summary.json"}) {
    EXPECT_EQ(slurp(dir / "a" / name), slurp(dir / "b" / name)) << name;
  }
  fs::remove_all(dir);
}

TEST(Commands, ExitCodeMapping) {
  EXPECT_EQ(exit_code_for(UsageError("x")), kExitUsage);
  EXPECT_EQ(exit_code_for(VersionError("x")), kExitUsage);
  EXPECT_EQ(exit_code_for(DataError("x")), kExitData);
  EXPECT_EQ(exit_code_for(NonConvergenceError("x")), kExitNonConvergence);
  EXPECT_EQ(exit_code_for(std::runtime_error("x")), kExitFailure);
}
