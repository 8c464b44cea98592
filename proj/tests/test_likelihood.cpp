#include <gtest/gtest.h>

#include <cmath>

#include "support/oracles.hpp"

using namespace infbeta;

namespace {

ModelSpec intercept_spec(Eigen::Index n, int c = 0) {
  ModelSpec spec;
  spec.c = c;
  spec.V = Matrix::Ones(n, 1);
  spec.X = Matrix::Ones(n, 1);
  spec.Z = Matrix::Ones(n, 1);
  return spec;
}

ParameterVector scalar_theta(double rho, double beta, double gamma) {
  return {Vector::Constant(1, rho), Vector::Constant(1, beta), Vector::Constant(1, gamma)};
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Log-likelihood summed observation by observation from the mixture density,
// for logit/logit/log links.
double naive_log_likelihood(const oracle::Fixture& fx, const ParameterVector& theta) {
  double ll = 0.0;
  for (Eigen::Index t = 0; t < fx.data.size(); ++t) {
    const double a = logistic(fx.spec.V.row(t).dot(theta.rho));
    const double mu = logistic(fx.spec.X.row(t).dot(theta.beta));
    const double phi = std::exp(fx.spec.Z.row(t).dot(theta.gamma));
    const double y = fx.data.y()[t];
    ll += y == fx.spec.c ? std::log(a) : std::log(1.0 - a) + oracle::beta_log_pdf(y, mu * phi, (1.0 - mu) * phi);
  }
  return ll;
}

oracle::Objective loglik_of(const oracle::Fixture& fx) {
  const auto p = fx.spec.p(), k = fx.spec.k(), m = fx.spec.m();
  return [&fx, p, k, m](const Vector& th) {
    return log_likelihood(fx.spec, fx.data, ParameterVector::from_flat(th, p, k, m));
  };
}

ParameterVector perturbed(const ParameterVector& theta, RngStream& rng, double scale) {
  Vector th = theta.flat();
  for (Eigen::Index j = 0; j < th.size(); ++j) th[j] += scale * (rng.uniform() - 0.5);
  return ParameterVector::from_flat(th, theta.rho.size(), theta.beta.size(), theta.gamma.size());
}

struct LinkCase {
  LinkKind alpha, mu, phi;
  int c;
};

const LinkCase kLinkCases[] = {
    {LinkKind::logit, LinkKind::logit, LinkKind::log, 0},
    {LinkKind::probit, LinkKind::cloglog, LinkKind::sqrt, 1},
    {LinkKind::cloglog, LinkKind::loglog, LinkKind::log, 0},
    {LinkKind::loglog, LinkKind::probit, LinkKind::sqrt, 1},
};

} // namespace

TEST(Dataset, DerivedQuantities) {
  const Vector y = (Vector(4) << 0.0, 0.25, 0.5, 0.0).finished();
  const Dataset d(y, 0);
  EXPECT_EQ(d.count_at_c(), 2);
  ASSERT_EQ(d.interior().size(), 2u);
  EXPECT_EQ(d.interior()[0], 1);
  EXPECT_EQ(d.at_c()[0], 1.0);
  EXPECT_EQ(d.at_c()[1], 0.0);
  EXPECT_EQ(d.y_star()[0], 0.0);
  EXPECT_EQ(d.y_dagger()[3], 0.0);
  EXPECT_NEAR(d.y_star()[1], std::log(0.25 / 0.75), 1e-15);
  EXPECT_NEAR(d.y_dagger()[2], std::log(0.5), 1e-15);
}

TEST(Dataset, RejectsNonInflatedExtreme) {
  EXPECT_THROW(Dataset((Vector(2) << 0.5, 1.0).finished(), 0), DataError);
  EXPECT_THROW(Dataset((Vector(2) << 0.0, 0.5).finished(), 1), DataError);
  EXPECT_THROW(Dataset((Vector(1) << 1.2).finished(), 1), DataError);
  EXPECT_THROW(Dataset((Vector(1) << 0.5).finished(), 2), DomainError);
}

TEST(ModelSpec, ValidateChecksShapeAndRank) {
  auto spec = intercept_spec(3);
  EXPECT_THROW(validate(spec), UsageError);  // p + k + m = n
  spec = intercept_spec(10);
  spec.X = Matrix::Ones(10, 2);
  EXPECT_THROW(validate(spec), EstimationError);
  spec = intercept_spec(10);
  spec.Z = Matrix::Ones(9, 1);
  EXPECT_THROW(validate(spec), UsageError);
  spec = intercept_spec(10);
  spec.link_phi = LinkKind::logit;
  EXPECT_THROW(validate(spec), UsageError);
  spec = intercept_spec(10);
  validate(spec);
  EXPECT_EQ(spec.names_mu.size(), 1u);
}

TEST(LogLikelihood, SingleObservationExamples) {
  const auto spec = intercept_spec(1);
  const double rho = std::log(0.25 / 0.75);
  EXPECT_NEAR(log_likelihood(spec, Dataset(Vector::Zero(1), 0), scalar_theta(rho, 0.0, std::log(2.0))),
              std::log(0.25), 1e-14);
  EXPECT_NEAR(log_likelihood(spec, Dataset(Vector::Constant(1, 0.5), 0), scalar_theta(rho, 0.0, std::log(2.0))),
              std::log(0.75), 1e-14);
  EXPECT_NEAR(std::log(0.25), -1.386294, 1e-6);
  EXPECT_NEAR(std::log(0.75), -0.287682, 1e-6);
}

TEST(LogLikelihood, MatchesNaiveSummation) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto fx = oracle::random_fixture(seed, 50, 2, 3, 2);
    RngStream rng(seed, 1);
    for (int rep = 0; rep < 5; ++rep) {
      const auto theta = perturbed(fx.theta, rng, 0.4);
      const double expected = naive_log_likelihood(fx, theta);
      EXPECT_NEAR(log_likelihood(fx.spec, fx.data, theta), expected, 1e-10 * std::abs(expected));
    }
  }
}

TEST(LogLikelihood, IsSeparable) {
  const auto fx = oracle::random_fixture(5, 40, 2, 2, 2);
  EXPECT_NEAR(log_likelihood(fx.spec, fx.data, fx.theta),
              discrete_log_likelihood(fx.spec, fx.data, fx.theta.rho) +
                  continuous_log_likelihood(fx.spec, fx.data, fx.theta.beta, fx.theta.gamma),
              1e-12);
}

TEST(Score, MatchesFiniteDifferencesAcrossLinks) {
  for (const auto& lc : kLinkCases) {
    const auto fx = oracle::random_fixture(11 + lc.c, 60, 3, 3, 3, lc.c, lc.alpha, lc.mu, lc.phi);
    const auto f = loglik_of(fx);
    RngStream rng(99, static_cast<std::uint64_t>(lc.alpha));
    for (int rep = 0; rep < 20; ++rep) {
      const auto theta = rep == 0 ? fx.theta : perturbed(fx.theta, rng, 0.3);
      const Vector analytic = score(fx.spec, fx.data, theta);
      const Vector numeric = oracle::gradient(f, theta.flat());
      EXPECT_LT(oracle::max_relative_error(analytic, numeric), 1e-6)
          << to_string(lc.alpha) << "/" << to_string(lc.mu) << "/" << to_string(lc.phi) << " rep " << rep;
    }
  }
}

TEST(Score, DiscretePartIgnoresContinuousParameters) {
  const auto fx = oracle::random_fixture(21, 50, 2, 2, 2);
  auto other = fx.theta;
  other.beta.array() += 0.7;
  other.gamma.array() -= 0.3;
  const Vector u1 = score(fx.spec, fx.data, fx.theta);
  const Vector u2 = score(fx.spec, fx.data, other);
  EXPECT_EQ(u1.head(2), u2.head(2));
}

TEST(Score, ZeroAtClosedFormInterceptMle) {
  Vector y = Vector::Constant(10, 0.4);
  y.head(3).setZero();
  const auto spec = intercept_spec(10);
  const double rho = std::log(0.3 / 0.7);
  EXPECT_NEAR(discrete_score(spec, Dataset(y, 0), Vector::Constant(1, rho))[0], 0.0, 1e-12);
}

TEST(Score, NoInflatedObservations) {
  auto fx = oracle::random_fixture(23, 40, 2, 2, 2);
  Vector y = fx.data.y();
  for (Eigen::Index t = 0; t < y.size(); ++t) {
    if (y[t] == 0.0) y[t] = 0.2;
  }
  fx.data = Dataset(y, 0);
  ASSERT_EQ(fx.data.count_at_c(), 0);
  const auto f = loglik_of(fx);
  const Vector analytic = score(fx.spec, fx.data, fx.theta);
  EXPECT_LT(oracle::max_relative_error(analytic, oracle::gradient(f, fx.theta.flat())), 1e-6);
  // Every term pushes alpha down: U_rho = -V' diag(alpha / h1'(alpha) / (alpha (1 - alpha))).
  const auto st = evaluate_discrete(fx.spec, fx.theta.rho);
  const Vector expected =
      -fx.spec.V.transpose() * (st.dalpha.array() / (1.0 - st.alpha.array())).matrix();
  EXPECT_LT((analytic.head(2) - expected).norm(), 1e-10 * expected.norm());
}

TEST(ObservedInformation, MatchesFiniteDifferenceHessian) {
  for (const auto& lc : kLinkCases) {
    const auto fx = oracle::random_fixture(31 + lc.c, 60, 3, 3, 3, lc.c, lc.alpha, lc.mu, lc.phi);
    const Matrix J = observed_information(fx.spec, fx.data, fx.theta);
    const Matrix H = oracle::hessian(loglik_of(fx), fx.theta.flat());
    EXPECT_LT(oracle::max_relative_error(J, -H), 1e-5) << to_string(lc.mu);
    EXPECT_LT((J - J.transpose()).cwiseAbs().maxCoeff(), 1e-10 * J.cwiseAbs().maxCoeff());
    EXPECT_TRUE((J.topRightCorner(3, 6).array() == 0.0).all());
    EXPECT_TRUE((J.bottomLeftCorner(6, 3).array() == 0.0).all());
  }
}

TEST(ObservedInformation, LogitRhoBlockEqualsExpected) {
  const auto fx = oracle::random_fixture(41, 80, 3, 2, 2);
  const Vector rho = fit_discrete(fx.spec, fx.data);
  ParameterVector theta = fx.theta;
  theta.rho = rho;
  const Matrix J = observed_information(fx.spec, fx.data, theta);
  const Matrix K = fisher_information(fx.spec, theta);
  EXPECT_LT((J.topLeftCorner(3, 3) - K.topLeftCorner(3, 3)).cwiseAbs().maxCoeff(),
            1e-10 * K.topLeftCorner(3, 3).cwiseAbs().maxCoeff());
}

TEST(FisherInformation, StructureAndDefiniteness) {
  for (const auto& lc : kLinkCases) {
    const auto fx = oracle::random_fixture(51 + lc.c, 60, 3, 2, 2, lc.c, lc.alpha, lc.mu, lc.phi);
    const Matrix K = fisher_information(fx.spec, fx.theta);
    EXPECT_TRUE((K.topRightCorner(3, 4).array() == 0.0).all());
    EXPECT_TRUE((K.bottomLeftCorner(4, 3).array() == 0.0).all());
    EXPECT_LT((K - K.transpose()).cwiseAbs().maxCoeff(), 1e-12 * K.cwiseAbs().maxCoeff());
    Eigen::SelfAdjointEigenSolver<Matrix> es(K);
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
  }
}

TEST(FisherInformation, SingleObservationLogit) {
  const auto spec = intercept_spec(1);
  const double alpha = 0.3;
  const Matrix K = fisher_information(spec, scalar_theta(std::log(alpha / (1 - alpha)), 0.0, 1.0));
  EXPECT_NEAR(K(0, 0), alpha * (1.0 - alpha), 1e-14);
  // Same value from the general weight (1/(1-a) + 1/a) (1/h1'(a))^2.
  const double h1 = 1.0 / (alpha * (1.0 - alpha));
  EXPECT_NEAR(K(0, 0), (1.0 / (1.0 - alpha) + 1.0 / alpha) / (h1 * h1), 1e-14);
}

TEST(FisherInformation, EqualsMeanObservedInformation) {
  const auto fx = oracle::random_fixture(61, 40, 2, 2, 2);
  const Matrix K = fisher_information(fx.spec, fx.theta);
  const auto ws = evaluate(fx.spec, fx.theta);
  const int R = 200;
  const Eigen::Index d = K.rows();
  Matrix sum = Matrix::Zero(d, d), sum2 = Matrix::Zero(d, d);
  RngStream rng(61, 7);
  for (int r = 0; r < R; ++r) {
    Vector y(fx.data.size());
    for (Eigen::Index t = 0; t < y.size(); ++t) {
      y[t] = sample(rng, InflatedBetaParams(0, ws.discrete.alpha[t], ws.continuous.mu[t], ws.continuous.phi[t]));
    }
    const Matrix J = observed_information(fx.spec, Dataset(y, 0), fx.theta);
    sum += J;
    sum2 += J.cwiseProduct(J);
  }
  const Matrix mean = sum / R;
  const Matrix se = ((sum2 / R - mean.cwiseProduct(mean)) / (R - 1)).cwiseMax(0.0).cwiseSqrt();
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      EXPECT_LE(std::abs(mean(i, j) - K(i, j)), 3.0 * se(i, j) + 1e-10) << i << "," << j;
    }
  }
}

TEST(WorkingState, WeightsArePositiveDefinitePerObservation) {
  const auto fx = oracle::random_fixture(71, 100, 2, 2, 2);
  const auto ws = evaluate(fx.spec, fx.theta);
  const auto w = information_weights(ws.discrete, ws.continuous);
  EXPECT_TRUE((w.w1.array() > 0.0).all());
  for (Eigen::Index t = 0; t < 100; ++t) {
    EXPECT_GT(w.w2[t], 0.0);
    EXPECT_GT(w.w2[t] * w.w4[t] - w.w3[t] * w.w3[t], 0.0);
  }
}
