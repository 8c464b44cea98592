#pragma once

// Residuals, leverages, influence measures, goodness of fit and simulated
// envelopes for a fitted inflated beta regression. Vectors over the
// continuous component are indexed like `fitted.data.interior()`. Entries
// that are undefined (leverage at one) are reported as NaN.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "infbeta/distribution.hpp"
#include "infbeta/error.hpp"
#include "infbeta/fitting.hpp"
#include "infbeta/inference.hpp"
#include "infbeta/parallel.hpp"

namespace infbeta {

namespace detail {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline constexpr double kLeverageCeiling = 1.0 - 1e-10;

// diag of W^{1/2} A (A' W A)^{-1} A' W^{1/2}
inline Vector projection_diagonal(const Matrix& A, const Vector& w) {
  const Matrix B = w.cwiseSqrt().asDiagonal() * A;
  Eigen::HouseholderQR<Matrix> qr(B);
  const Matrix Q = qr.householderQ() * Matrix::Identity(B.rows(), B.cols());
  return Q.rowwise().squaredNorm();
}

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

// Sample quantile with linear interpolation between order statistics.
inline double quantile_sorted(const std::vector<double>& sorted, double prob) {
  if (sorted.empty()) return kMissing;
  const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

} // namespace detail

// Diagonal of the projection H = W1^{1/2} V (V' W1 V)^{-1} V' W1^{1/2}.
inline Vector discrete_leverage(const FittedModel& fitted) {
  detail::require_converged(fitted);
  const auto ds = evaluate_discrete(fitted.spec, fitted.theta_hat.rho);
  return detail::projection_diagonal(fitted.spec.V, discrete_weights(ds));
}

// Weights W2 = (1 - alpha) phi^2 v* / h2'(mu)^2 at the interior observations.
inline Vector continuous_leverage_weights(const FittedModel& fitted) {
  const auto cs = evaluate_continuous(fitted.spec, fitted.theta_hat.beta, fitted.theta_hat.gamma);
  const auto& rows = fitted.data.interior();
  Vector w(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Eigen::Index t = rows[i];
    double w2, w3, w4;
    continuous_unit_weights(cs, t, w2, w3, w4);
    w[static_cast<Eigen::Index>(i)] = (1.0 - fitted.alpha[t]) * w2;
  }
  return w;
}

// Diagonal of the generalized leverage P = W2^{1/2} X (X' W2 X)^{-1} X' W2^{1/2}
// over the interior observations.
inline Vector continuous_leverage(const FittedModel& fitted) {
  detail::require_converged(fitted);
  return detail::projection_diagonal(detail::select_rows(fitted.spec.X, fitted.data.interior()),
                                     continuous_leverage_weights(fitted));
}

inline Vector pearson_discrete_residuals(const FittedModel& fitted) {
  const Vector h = discrete_leverage(fitted);
  const Eigen::Index n = fitted.data.size();
  Vector r(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    const double a = fitted.alpha[t];
    r[t] = h[t] >= detail::kLeverageCeiling
               ? detail::kMissing
               : (fitted.data.at_c()[t] - a) / std::sqrt(a * (1.0 - a) * (1.0 - h[t]));
  }
  return r;
}

inline Vector pearson_continuous_residuals(const FittedModel& fitted) {
  const Vector P = continuous_leverage(fitted);
  const auto& rows = fitted.data.interior();
  Vector r(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Eigen::Index t = rows[i];
    const auto ii = static_cast<Eigen::Index>(i);
    const auto cm = conditional_moments(fitted.mu[t], fitted.phi[t]);
    r[ii] = P[ii] >= detail::kLeverageCeiling
                ? detail::kMissing
                : (fitted.data.y_star()[t] - cm.mu_star) /
                      std::sqrt(cm.v_star * (1.0 - fitted.alpha[t]) * (1.0 - P[ii]));
  }
  return r;
}

// r_t = Phi^{-1}(u_t) with u_t uniform on (BI(y_t-), BI(y_t)]. Randomness
// only enters at observations equal to c.
inline Vector randomized_quantile_residuals(const FittedModel& fitted, RngStream& rng) {
  detail::require_converged(fitted);
  constexpr double clamp = 1e-10;
  const auto& data = fitted.data;
  Vector r(data.size());
  for (Eigen::Index t = 0; t < data.size(); ++t) {
    const InflatedBetaParams params(fitted.spec.c, fitted.alpha[t], fitted.mu[t], fitted.phi[t]);
    const double upper = inflated_cdf(data.y()[t], params);
    double u = upper;
    if (data.at_c()[t] > 0.5) {
      const double lower = upper - params.alpha();
      u = lower + (upper - lower) * rng.uniform();
    }
    r[t] = normal_quantile(std::clamp(u, clamp, 1.0 - clamp));
  }
  return r;
}

struct CookStatistics {
  Vector discrete;    // c_tt^D, length n
  Vector continuous;  // c_tt^C, interior observations
};

inline CookStatistics cook_statistics(const FittedModel& fitted) {
  const Vector h = discrete_leverage(fitted);
  const Vector rd = pearson_discrete_residuals(fitted);
  const Vector P = continuous_leverage(fitted);
  const Vector rc = pearson_continuous_residuals(fitted);
  const double p = static_cast<double>(fitted.spec.p());
  const double km = static_cast<double>(fitted.spec.k() + fitted.spec.m());
  CookStatistics out{Vector(h.size()), Vector(P.size())};
  for (Eigen::Index t = 0; t < h.size(); ++t) {
    out.discrete[t] = h[t] >= detail::kLeverageCeiling ? detail::kMissing
                                                       : h[t] / (p * (1.0 - h[t])) * rd[t] * rd[t];
  }
  for (Eigen::Index i = 0; i < P.size(); ++i) {
    out.continuous[i] = P[i] >= detail::kLeverageCeiling
                            ? detail::kMissing
                            : P[i] / (km * (1.0 - P[i])) * rc[i] * rc[i];
  }
  return out;
}

struct LikelihoodDisplacement {
  Vector discrete;    // LD_t^D, length n
  Vector continuous;  // LD_t^C, interior observations
  int failures = 0;
};

namespace detail {

inline Matrix drop_row(const Matrix& A, Eigen::Index row) {
  Matrix out(A.rows() - 1, A.cols());
  out.topRows(row) = A.topRows(row);
  out.bottomRows(A.rows() - row - 1) = A.bottomRows(A.rows() - row - 1);
  return out;
}

inline Vector drop_entry(const Vector& v, Eigen::Index row) {
  Vector out(v.size() - 1);
  out.head(row) = v.head(row);
  out.tail(v.size() - row - 1) = v.tail(v.size() - row - 1);
  return out;
}

} // namespace detail

// Exact case-deletion likelihood displacement: refit without case t (warm
// started at theta-hat) and evaluate the full-data component log-likelihood
// at the deleted-case estimate.
inline LikelihoodDisplacement exact_likelihood_displacement(const FittedModel& fitted,
                                                            unsigned workers = 1,
                                                            const FitOptions& opt = {}) {
  detail::require_converged(fitted);
  const auto& spec = fitted.spec;
  const auto& data = fitted.data;
  const Eigen::Index n = data.size();
  const double p = static_cast<double>(spec.p());
  const double km = static_cast<double>(spec.k() + spec.m());
  std::vector<Eigen::Index> position(static_cast<std::size_t>(n), -1);
  for (std::size_t i = 0; i < data.interior().size(); ++i) {
    position[static_cast<std::size_t>(data.interior()[i])] = static_cast<Eigen::Index>(i);
  }

  LikelihoodDisplacement out{Vector::Constant(n, detail::kMissing),
                             Vector::Constant(static_cast<Eigen::Index>(data.interior().size()), detail::kMissing)};
  std::vector<int> failed(static_cast<std::size_t>(n), 0);
  parallel_for(static_cast<std::size_t>(n), workers, [&](std::size_t idx) {
    const auto t = static_cast<Eigen::Index>(idx);
    ModelSpec reduced = spec;
    reduced.V = detail::drop_row(spec.V, t);
    reduced.X = detail::drop_row(spec.X, t);
    reduced.Z = detail::drop_row(spec.Z, t);
    try {
      const Dataset rdata(detail::drop_entry(data.y(), t), spec.c);
      const auto disc = run_discrete(reduced, rdata, fitted.theta_hat.rho, opt);
      if (!disc.converged) throw NonConvergenceError(disc.message);
      out.discrete[t] = 2.0 / p *
                        (fitted.loglik_discrete - discrete_log_likelihood(spec, data, disc.estimate));
      if (position[idx] >= 0) {
        const auto cont = run_continuous(
            reduced, rdata, ContinuousEstimate{fitted.theta_hat.beta, fitted.theta_hat.gamma}, opt);
        if (!cont.converged) throw NonConvergenceError(cont.message);
        out.continuous[position[idx]] =
            2.0 / km *
            (fitted.loglik_continuous -
             continuous_log_likelihood(spec, data, cont.estimate.head(spec.k()), cont.estimate.tail(spec.m())));
      }
    } catch (const Error&) {
      failed[idx] = 1;
    }
  });
  for (int f : failed) out.failures += f;
  return out;
}

// ---------------------------------------------------------------------------

struct PseudoR2 {
  double corr = detail::kMissing;       // squared correlation of y and fitted E(y)
  double mcfadden = detail::kMissing;   // 1 - l / l0
  double cox_snell = detail::kMissing;  // 1 - (L0 / L)^{2/n}
  std::string warning;
};

// Intercept-only model for alpha, mu and phi with the same links.
inline FittedModel fit_null_model(const FittedModel& fitted, const FitOptions& opt = {}) {
  ModelSpec null_spec;
  const Eigen::Index n = fitted.spec.n();
  null_spec.c = fitted.spec.c;
  null_spec.link_alpha = fitted.spec.link_alpha;
  null_spec.link_mu = fitted.spec.link_mu;
  null_spec.link_phi = fitted.spec.link_phi;
  null_spec.V = null_spec.X = null_spec.Z = Matrix::Ones(n, 1);
  null_spec.names_alpha = null_spec.names_mu = null_spec.names_phi = {"(Intercept)"};
  return fit(null_spec, fitted.data, opt);
}

inline Vector fitted_mean_response(const FittedModel& fitted) {
  const double c = fitted.spec.c;
  return (c * fitted.alpha.array() + (1.0 - fitted.alpha.array()) * fitted.mu.array()).matrix();
}

inline double squared_correlation(const Vector& a, const Vector& b) {
  const Vector da = (a.array() - a.mean()).matrix();
  const Vector db = (b.array() - b.mean()).matrix();
  const double denom = std::sqrt(da.squaredNorm() * db.squaredNorm());
  if (!(denom > 0.0)) return detail::kMissing;
  const double r = da.dot(db) / denom;
  return r * r;
}

inline PseudoR2 pseudo_r2(const FittedModel& fitted, const FittedModel& null_model) {
  detail::require_converged(fitted);
  PseudoR2 out;
  out.corr = squared_correlation(fitted.data.y(), fitted_mean_response(fitted));
  if (!null_model.converged()) {
    out.warning = "null model did not converge; likelihood-based pseudo R2 unavailable";
    return out;
  }
  const double n = static_cast<double>(fitted.data.size());
  out.cox_snell = 1.0 - std::exp(2.0 / n * (null_model.loglik - fitted.loglik));
  // The ratio form needs negative log-likelihoods; beta densities above one
  // can make them positive.
  if (null_model.loglik < 0.0 && fitted.loglik <= 0.0) {
    out.mcfadden = 1.0 - fitted.loglik / null_model.loglik;
  } else {
    out.warning = "log-likelihood is positive; the McFadden ratio is undefined";
  }
  return out;
}

inline PseudoR2 pseudo_r2(const FittedModel& fitted) {
  detail::require_converged(fitted);
  try {
    return pseudo_r2(fitted, fit_null_model(fitted));
  } catch (const Error& e) {
    PseudoR2 out;
    out.corr = squared_correlation(fitted.data.y(), fitted_mean_response(fitted));
    out.warning = std::string("null model fit failed: ") + e.what();
    return out;
  }
}

struct InformationCriteria {
  double aic;
  double sbc;
  double caic;
  double gaic;
  double penalty;
};

// GAIC = -2 l + d * penalty; AIC, SBC and CAIC use 2, log n and log n + 1.
inline InformationCriteria information_criteria(const FittedModel& fitted,
                                                std::optional<double> penalty = std::nullopt) {
  detail::require_converged(fitted);
  const double d = static_cast<double>(fitted.dim());
  const double log_n = std::log(static_cast<double>(fitted.data.size()));
  const double deviance = -2.0 * fitted.loglik;
  const double pen = penalty.value_or(2.0);
  return {deviance + 2.0 * d, deviance + log_n * d, deviance + (log_n + 1.0) * d,
          deviance + pen * d, pen};
}

// ---------------------------------------------------------------------------

struct Envelope {
  Vector lower;
  Vector median;
  Vector upper;
  int simulations = 0;
  int failures = 0;
};

// Draws one response vector from the fitted distribution.
inline Vector simulate_responses(const FittedModel& fitted, RngStream& rng) {
  Vector y(fitted.data.size());
  for (Eigen::Index t = 0; t < y.size(); ++t) {
    y[t] = sample(rng, InflatedBetaParams(fitted.spec.c, fitted.alpha[t], fitted.mu[t], fitted.phi[t]));
  }
  return y;
}

// Pointwise band for sorted randomized quantile residuals from `n_sim`
// datasets simulated from the fit and refitted (warm start at theta-hat).
// Simulation s uses RngStream(seed, kEnvelopeStreamBase + s).
inline constexpr std::uint64_t kEnvelopeStreamBase = 1000;

inline Envelope simulated_envelope(const FittedModel& fitted, std::uint64_t seed, int n_sim = 100,
                                   double band = 0.95, unsigned workers = 1,
                                   const FitOptions& opt = {}) {
  detail::require_converged(fitted);
  if (n_sim < 2) throw UsageError("envelope needs at least two simulations");
  if (!(band > 0.0 && band < 1.0)) throw UsageError("envelope band must lie in (0, 1)");
  const Eigen::Index n = fitted.data.size();
  std::vector<std::optional<std::vector<double>>> sims(static_cast<std::size_t>(n_sim));
  parallel_for(static_cast<std::size_t>(n_sim), workers, [&](std::size_t s) {
    RngStream rng(seed, kEnvelopeStreamBase + s);
    try {
      const Dataset sim_data(simulate_responses(fitted, rng), fitted.spec.c);
      const FittedModel refit = fit(fitted.spec, sim_data, opt, fitted.theta_hat);
      if (!refit.converged()) return;
      auto r = detail::to_std(randomized_quantile_residuals(refit, rng));
      std::sort(r.begin(), r.end());
      sims[s] = std::move(r);
    } catch (const Error&) {
    }
  });
  Envelope env;
  env.simulations = n_sim;
  for (const auto& s : sims) env.failures += s ? 0 : 1;
  if (env.failures > n_sim / 5) {
    throw EstimationError("envelope", std::to_string(env.failures) + " of " + std::to_string(n_sim) +
                                          " simulated refits failed");
  }
  env.lower.resize(n);
  env.median.resize(n);
  env.upper.resize(n);
  std::vector<double> column;
  for (Eigen::Index rank = 0; rank < n; ++rank) {
    column.clear();
    for (const auto& s : sims) {
      if (s) column.push_back((*s)[static_cast<std::size_t>(rank)]);
    }
    std::sort(column.begin(), column.end());
    env.lower[rank] = detail::quantile_sorted(column, (1.0 - band) / 2.0);
    env.median[rank] = detail::quantile_sorted(column, 0.5);
    env.upper[rank] = detail::quantile_sorted(column, (1.0 + band) / 2.0);
  }
  return env;
}

// Fraction of ranks whose sorted observed residual lies inside the band.
inline double envelope_coverage(const Envelope& env, Vector residuals) {
  std::sort(residuals.begin(), residuals.end());
  Eigen::Index inside = 0;
  for (Eigen::Index i = 0; i < residuals.size(); ++i) {
    if (residuals[i] >= env.lower[i] && residuals[i] <= env.upper[i]) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(residuals.size());
}

// ---------------------------------------------------------------------------

struct DiagnosticsReport {
  Vector r_pD;
  Vector r_pC;
  std::vector<Vector> r_q;  // independent realizations
  Vector h_tt;
  Vector P_tt;
  Vector c_D;
  Vector c_C;
  PseudoR2 pseudo_r2;
  InformationCriteria criteria;
  std::string note;
};

// Residual realization j uses RngStream(seed, j).
inline DiagnosticsReport diagnose(const FittedModel& fitted, std::uint64_t seed, int realizations = 4) {
  detail::require_converged(fitted);
  DiagnosticsReport rep;
  rep.h_tt = discrete_leverage(fitted);
  rep.P_tt = continuous_leverage(fitted);
  rep.r_pD = pearson_discrete_residuals(fitted);
  rep.r_pC = pearson_continuous_residuals(fitted);
  for (int j = 0; j < realizations; ++j) {
    RngStream rng(seed, static_cast<std::uint64_t>(j));
    rep.r_q.push_back(randomized_quantile_residuals(fitted, rng));
  }
  const auto cook = cook_statistics(fitted);
  rep.c_D = cook.discrete;
  rep.c_C = cook.continuous;
  rep.pseudo_r2 = pseudo_r2(fitted);
  rep.criteria = information_criteria(fitted);
  rep.note =
      "Randomized quantile residuals can be asymmetric; the usual (-2, 2) or (-3, 3) thresholds "
      "should be read with care.";
  return rep;
}

} // namespace infbeta
