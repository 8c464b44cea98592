#pragma once

// Wald inference, mean-response intervals and likelihood ratio tests.

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "infbeta/error.hpp"
#include "infbeta/fitting.hpp"
#include "infbeta/links.hpp"
#include "infbeta/numerics.hpp"

namespace infbeta {

enum class Component { alpha, mu, phi };

inline std::string_view to_string(Component c) noexcept {
  switch (c) {
  case Component::alpha: return "alpha";
  case Component::mu: return "mu";
  case Component::phi: return "phi";
  }
  return "?";
}

struct CoefficientRow {
  Component component;
  std::string name;
  double estimate;
  double std_error;
  double z;
  double p_value;
  double lower;
  double upper;
};

namespace detail {

inline void require_converged(const FittedModel& fitted) {
  if (!fitted.converged()) {
    std::string why = fitted.discrete.converged ? "" : fitted.discrete.message;
    if (!fitted.continuous.converged) why += (why.empty() ? "" : "; ") + fitted.continuous.message;
    throw NonConvergenceError("inference requires a converged fit (" + why + ")");
  }
}

inline double two_sided_normal_p(double z) { return std::erfc(std::abs(z) / std::numbers::sqrt2); }

inline void check_level(double varsigma) {
  if (!(varsigma > 0.0 && varsigma < 0.5)) {
    throw UsageError("significance level must lie in (0, 1/2)");
  }
}

} // namespace detail

// Estimates with standard errors from the inverse expected information,
// Wald z, two-sided normal p-value and the 100(1 - varsigma)% interval.
inline std::vector<CoefficientRow> inference_summary(const FittedModel& fitted, double varsigma = 0.05) {
  detail::require_converged(fitted);
  detail::check_level(varsigma);
  const double zq = normal_quantile(1.0 - varsigma / 2.0);
  const Vector theta = fitted.theta_hat.flat();
  const auto& spec = fitted.spec;
  std::vector<CoefficientRow> rows;
  rows.reserve(static_cast<std::size_t>(theta.size()));
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    Component comp;
    std::string name;
    if (j < spec.p()) {
      comp = Component::alpha;
      name = spec.names_alpha[static_cast<std::size_t>(j)];
    } else if (j < spec.p() + spec.k()) {
      comp = Component::mu;
      name = spec.names_mu[static_cast<std::size_t>(j - spec.p())];
    } else {
      comp = Component::phi;
      name = spec.names_phi[static_cast<std::size_t>(j - spec.p() - spec.k())];
    }
    const double se = std::sqrt(fitted.inv_information(j, j));
    const double z = theta[j] / se;
    rows.push_back({comp, std::move(name), theta[j], se, z, detail::two_sided_normal_p(z),
                    theta[j] - zq * se, theta[j] + zq * se});
  }
  return rows;
}

struct MeanResponseInterval {
  double point;
  double std_error;
  double lower;
  double upper;
};

// Interval for E(y) = c alpha + (1 - alpha) mu at covariates v (alpha) and
// x (mu), by the delta method through the inverse links.
inline MeanResponseInterval mean_response_ci(const FittedModel& fitted, const Vector& v,
                                             const Vector& x, double varsigma = 0.05) {
  detail::require_converged(fitted);
  detail::check_level(varsigma);
  const auto& spec = fitted.spec;
  if (v.size() != spec.p() || x.size() != spec.k()) {
    throw UsageError("covariate vectors do not match the alpha/mu designs");
  }
  const double alpha = link_inverse(spec.link_alpha, v.dot(fitted.theta_hat.rho));
  const double mu = link_inverse(spec.link_mu, x.dot(fitted.theta_hat.beta));
  const double c = spec.c;
  const double point = c * alpha + (1.0 - alpha) * mu;
  const Matrix K_rr = fitted.inv_information.topLeftCorner(spec.p(), spec.p());
  const Matrix K_bb = fitted.inv_information.block(spec.p(), spec.p(), spec.k(), spec.k());
  const double ga = (c - mu) / link_derivatives(spec.link_alpha, alpha).first;
  const double gm = (1.0 - alpha) / link_derivatives(spec.link_mu, mu).first;
  const double se = std::sqrt(ga * ga * v.dot(K_rr * v) + gm * gm * x.dot(K_bb * x));
  const double zq = normal_quantile(1.0 - varsigma / 2.0);
  return {point, se, point - zq * se, point + zq * se};
}

// P(chi^2_df > x)
inline double chi_square_survival(double x, double df) {
  if (df <= 0.0) return 1.0;
  if (x <= 0.0) return 1.0;
  return boost::math::gamma_q(df / 2.0, x / 2.0);
}

struct LikelihoodRatioTest {
  double statistic;
  int df;
  double p_value;
};

namespace detail {

inline void require_subset(const std::vector<std::string>& small, const std::vector<std::string>& big,
                           const char* what) {
  for (const auto& name : small) {
    if (std::find(big.begin(), big.end(), name) == big.end()) {
      throw UsageError(std::string("restricted model is not nested: ") + what + " term '" + name +
                       "' is absent from the full model");
    }
  }
}

} // namespace detail

inline LikelihoodRatioTest likelihood_ratio_test(const FittedModel& full, const FittedModel& restricted) {
  detail::require_converged(full);
  detail::require_converged(restricted);
  const auto& fs = full.spec;
  const auto& rs = restricted.spec;
  if (fs.c != rs.c || fs.n() != rs.n() || fs.link_alpha != rs.link_alpha ||
      fs.link_mu != rs.link_mu || fs.link_phi != rs.link_phi) {
    throw UsageError("models are not nested: inflation point, sample or links differ");
  }
  if (full.data.y() != restricted.data.y()) throw UsageError("models were fitted to different responses");
  detail::require_subset(rs.names_alpha, fs.names_alpha, "alpha");
  detail::require_subset(rs.names_mu, fs.names_mu, "mu");
  detail::require_subset(rs.names_phi, fs.names_phi, "phi");
  const int df = static_cast<int>(fs.dim() - rs.dim());
  if (df < 0) throw UsageError("restricted model has more parameters than the full model");
  const double stat = 2.0 * (full.loglik - restricted.loglik);
  if (stat < -1e-8) {
    throw EstimationError("lr-test", "negative likelihood ratio statistic; one of the fits is not at its maximum");
  }
  const double s = std::max(stat, 0.0);
  return {s, df, chi_square_survival(s, df)};
}

} // namespace infbeta
