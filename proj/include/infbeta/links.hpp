#pragma once

// Link functions for the mixture mass (alpha), the beta mean (mu) and the
// precision (phi). Unit links map (0, 1) to the real line; log and sqrt map
// (0, inf).

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>

#include "infbeta/error.hpp"
#include "infbeta/numerics.hpp"

namespace infbeta {

enum class LinkKind { logit, probit, cloglog, loglog, log, sqrt };

// Inverse-link outputs are kept this far inside the open domain.
inline constexpr double kLinkClamp = 1e-12;

inline bool is_unit_link(LinkKind kind) noexcept {
  return kind != LinkKind::log && kind != LinkKind::sqrt;
}

inline std::string_view to_string(LinkKind kind) noexcept {
  switch (kind) {
  case LinkKind::logit: return "logit";
  case LinkKind::probit: return "probit";
  case LinkKind::cloglog: return "cloglog";
  case LinkKind::loglog: return "loglog";
  case LinkKind::log: return "log";
  case LinkKind::sqrt: return "sqrt";
  }
  return "unknown";
}

inline LinkKind parse_link(std::string_view name) {
  if (name == "logit") return LinkKind::logit;
  if (name == "probit") return LinkKind::probit;
  if (name == "cloglog") return LinkKind::cloglog;
  if (name == "loglog") return LinkKind::loglog;
  if (name == "log") return LinkKind::log;
  if (name == "sqrt") return LinkKind::sqrt;
  throw UsageError("unknown link function '" + std::string(name) + "'");
}

struct LinkDerivatives {
  double first;
  double second;
};

namespace detail {

inline void check_link_domain(LinkKind kind, double x) {
  const bool ok = is_unit_link(kind) ? (x > 0.0 && x < 1.0) : (x > 0.0 && std::isfinite(x));
  if (!ok) {
    throw DomainError(std::string(to_string(kind)) + " link: argument " + std::to_string(x) +
                      " outside the open domain");
  }
}

} // namespace detail

inline double link_apply(LinkKind kind, double x) {
  detail::check_link_domain(kind, x);
  switch (kind) {
  case LinkKind::logit: return std::log(x / (1.0 - x));
  case LinkKind::probit: return normal_quantile(x);
  case LinkKind::cloglog: return std::log(-std::log1p(-x));
  case LinkKind::loglog: return -std::log(-std::log(x));
  case LinkKind::log: return std::log(x);
  case LinkKind::sqrt: return std::sqrt(x);
  }
  return 0.0;
}

inline double link_inverse(LinkKind kind, double eta) {
  if (std::isnan(eta)) throw DomainError("link_inverse: NaN linear predictor");
  double x = 0.0;
  switch (kind) {
  case LinkKind::logit: x = 1.0 / (1.0 + std::exp(-eta)); break;
  case LinkKind::probit: x = normal_cdf(eta); break;
  case LinkKind::cloglog: x = -std::expm1(-std::exp(eta)); break;
  case LinkKind::loglog: x = std::exp(-std::exp(-eta)); break;
  case LinkKind::log: x = std::exp(eta); break;
  case LinkKind::sqrt:
    if (eta < 0.0) throw DomainError("sqrt link: negative linear predictor");
    x = eta * eta;
    break;
  }
  if (is_unit_link(kind)) return std::clamp(x, kLinkClamp, 1.0 - kLinkClamp);
  return std::max(x, kLinkClamp);
}

// h'(x) and h''(x).
inline LinkDerivatives link_derivatives(LinkKind kind, double x) {
  detail::check_link_domain(kind, x);
  switch (kind) {
  case LinkKind::logit: {
    const double v = x * (1.0 - x);
    return {1.0 / v, (2.0 * x - 1.0) / (v * v)};
  }
  case LinkKind::probit: {
    const double z = normal_quantile(x);
    const double dens = normal_pdf(z);
    return {1.0 / dens, z / (dens * dens)};
  }
  case LinkKind::cloglog: {
    const double l = -std::log1p(-x);
    const double q = (1.0 - x) * l;
    return {1.0 / q, (l - 1.0) / (q * q)};
  }
  case LinkKind::loglog: {
    const double l = -std::log(x);
    const double q = x * l;
    return {1.0 / q, -(l - 1.0) / (q * q)};
  }
  case LinkKind::log: return {1.0 / x, -1.0 / (x * x)};
  case LinkKind::sqrt: {
    const double r = std::sqrt(x);
    return {0.5 / r, -0.25 / (x * r)};
  }
  }
  return {0.0, 0.0};
}

} // namespace infbeta
