#pragma once

// The zero-or-one inflated beta distribution in mean/precision form:
//   bi_c(y) = alpha                 if y == c
//           = (1 - alpha) f(y; mu, phi)  if y in (0, 1)
// with f the beta density with shapes (mu phi, (1 - mu) phi).

#include <cmath>
#include <string>

#include "infbeta/error.hpp"
#include "infbeta/numerics.hpp"

namespace infbeta {

namespace detail {

inline void check_mean_precision(double mu, double phi) {
  if (!(mu > 0.0 && mu < 1.0)) {
    throw DomainError("beta mean mu must lie in (0, 1), got " + std::to_string(mu));
  }
  if (!(phi > 0.0) || !std::isfinite(phi)) {
    throw DomainError("beta precision phi must be positive, got " + std::to_string(phi));
  }
}

} // namespace detail

class InflatedBetaParams {
public:
  InflatedBetaParams(int c, double alpha, double mu, double phi)
      : c_(c), alpha_(alpha), mu_(mu), phi_(phi) {
    if (c != 0 && c != 1) throw DomainError("inflation point c must be 0 or 1");
    if (!(alpha > 0.0 && alpha < 1.0)) {
      throw DomainError("mixture mass alpha must lie in (0, 1), got " + std::to_string(alpha));
    }
    detail::check_mean_precision(mu, phi);
  }

  int c() const noexcept { return c_; }
  double alpha() const noexcept { return alpha_; }
  double mu() const noexcept { return mu_; }
  double phi() const noexcept { return phi_; }
  double shape_a() const noexcept { return mu_ * phi_; }
  double shape_b() const noexcept { return (1.0 - mu_) * phi_; }

private:
  int c_;
  double alpha_;
  double mu_;
  double phi_;
};

// Moments of y* = log(y / (1 - y)) and y-dagger = log(1 - y) given y in (0, 1).
struct ConditionalMoments {
  double mu_star;
  double mu_dagger;
  double v_star;
  double v_dagger;
  double c_star_dagger;
};

inline double beta_log_density(double y, double mu, double phi) {
  detail::check_mean_precision(mu, phi);
  if (!(y > 0.0 && y < 1.0)) throw DomainError("beta density requires y in (0, 1)");
  const double a = mu * phi;
  const double b = (1.0 - mu) * phi;
  return std::lgamma(phi) - std::lgamma(a) - std::lgamma(b) + (a - 1.0) * std::log(y) +
         (b - 1.0) * std::log1p(-y);
}

inline double beta_density(double y, double mu, double phi) {
  return std::exp(beta_log_density(y, mu, phi));
}

// Log of bi_c. y at the non-inflated extreme is a data/model mismatch.
inline double inflated_log_density(double y, const InflatedBetaParams& p) {
  if (y == static_cast<double>(p.c())) return std::log(p.alpha());
  if (y == 0.0 || y == 1.0) {
    throw DomainError("observation at " + std::to_string(static_cast<int>(y)) +
                      " is impossible under a model inflated at " + std::to_string(p.c()));
  }
  if (!(y > 0.0 && y < 1.0)) throw DomainError("observation outside [0, 1]");
  return std::log1p(-p.alpha()) + beta_log_density(y, p.mu(), p.phi());
}

inline double inflated_density(double y, const InflatedBetaParams& p) {
  return std::exp(inflated_log_density(y, p));
}

// BI_c(y) = alpha 1{y >= c} + (1 - alpha) F(y; mu, phi); right-continuous.
inline double inflated_cdf(double y, const InflatedBetaParams& p) {
  if (!(y >= 0.0 && y <= 1.0)) throw DomainError("inflated_cdf requires y in [0, 1]");
  const double jump = (y >= static_cast<double>(p.c())) ? p.alpha() : 0.0;
  return jump + (1.0 - p.alpha()) * regularized_incomplete_beta(y, p.shape_a(), p.shape_b());
}

struct MeanVariance {
  double mean;
  double variance;
};

inline MeanVariance moments(const InflatedBetaParams& p) {
  const double c = p.c();
  const double a = p.alpha();
  const double mu = p.mu();
  const double dev = c - mu;
  return {a * c + (1.0 - a) * mu,
          (1.0 - a) * mu * (1.0 - mu) / (p.phi() + 1.0) + a * (1.0 - a) * dev * dev};
}

// Conditional log-moments. Var(y*) = Var(log y) + Var(log(1-y)) - 2 Cov(...)
// = psi'(a) + psi'(b), hence the plus sign in v_star.
inline ConditionalMoments conditional_moments(double mu, double phi) {
  detail::check_mean_precision(mu, phi);
  const double a = mu * phi;
  const double b = (1.0 - mu) * phi;
  const double dg_b = digamma(b);
  const double tg_a = trigamma(a);
  const double tg_b = trigamma(b);
  return {digamma(a) - dg_b, dg_b - digamma(phi), tg_a + tg_b, tg_b - trigamma(phi), -tg_b};
}

// One draw: exactly c with probability alpha, otherwise Beta(mu phi, (1-mu) phi).
inline double sample(RngStream& rng, const InflatedBetaParams& p) {
  if (rng.uniform() < p.alpha()) return static_cast<double>(p.c());
  return beta_sample(rng, p.shape_a(), p.shape_b());
}

} // namespace infbeta
