#pragma once

// Special functions, random streams and the weighted least-squares kernel.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "infbeta/error.hpp"

namespace infbeta {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

namespace detail {

inline void require_positive(double x, const char* fn) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw DomainError(std::string(fn) + ": argument must be positive and finite, got " +
                      std::to_string(x));
  }
}

} // namespace detail

// ln Gamma(x) for x > 0.
inline double log_gamma(double x) {
  detail::require_positive(x, "log_gamma");
  return std::lgamma(x);
}

// psi(x) = d/dx ln Gamma(x). Upward recurrence to x >= 6, then the
// asymptotic expansion in 1/x^2.
inline double digamma(double x) {
  detail::require_positive(x, "digamma");
  double shift = 0.0;
  while (x < 6.0) {
    shift -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Bernoulli terms B_{2k} / (2k x^{2k}), k = 1..7
  const double series =
      inv2 * (1.0 / 12.0 -
              inv2 * (1.0 / 120.0 -
                      inv2 * (1.0 / 252.0 -
                              inv2 * (1.0 / 240.0 -
                                      inv2 * (1.0 / 132.0 -
                                              inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
  return shift + std::log(x) - 0.5 * inv - series;
}

// psi'(x). Same recurrence/asymptotic scheme as digamma; always positive.
inline double trigamma(double x) {
  detail::require_positive(x, "trigamma");
  double shift = 0.0;
  while (x < 6.0) {
    shift += 1.0 / (x * x);
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double series =
      inv * (1.0 +
             inv * (0.5 +
                    inv * (1.0 / 6.0 -
                           inv2 * (1.0 / 30.0 -
                                   inv2 * (1.0 / 42.0 -
                                           inv2 * (1.0 / 30.0 -
                                                   inv2 * (5.0 / 66.0 -
                                                           inv2 * (691.0 / 2730.0 -
                                                                   inv2 * 7.0 / 6.0))))))));
  return shift + series;
}

inline double log_beta_function(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

namespace detail {

// Continued fraction for I_y(a, b), modified Lentz evaluation.
inline double incomplete_beta_cf(double y, double a, double b) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  constexpr int max_iter = 20000;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * y / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= max_iter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * y / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * y / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return h;
}

} // namespace detail

// I_y(a, b), the regularized incomplete beta function (beta CDF).
inline double regularized_incomplete_beta(double y, double a, double b) {
  detail::require_positive(a, "regularized_incomplete_beta");
  detail::require_positive(b, "regularized_incomplete_beta");
  if (!(y >= 0.0 && y <= 1.0)) {
    throw DomainError("regularized_incomplete_beta: y must lie in [0, 1]");
  }
  if (y == 0.0) return 0.0;
  if (y == 1.0) return 1.0;
  const double log_front =
      a * std::log(y) + b * std::log1p(-y) - log_beta_function(a, b);
  if (y > a / (a + b)) {
    const double tail = std::exp(log_front) * detail::incomplete_beta_cf(1.0 - y, b, a) / b;
    return std::clamp(1.0 - tail, 0.0, 1.0);
  }
  return std::clamp(std::exp(log_front) * detail::incomplete_beta_cf(y, a, b) / a, 0.0, 1.0);
}

// Standard normal CDF.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

// Standard normal quantile: Acklam's rational approximation followed by one
// Halley correction against erfc.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("normal_quantile: p must lie in (0, 1)");
  }
  static constexpr std::array<double, 6> a{-3.969683028665376e+01, 2.209460984245205e+02,
                                           -2.759285104469687e+02, 1.383577518672690e+02,
                                           -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr std::array<double, 5> b{-5.447609879822406e+01, 1.615858368580409e+02,
                                           -1.556989798598866e+02, 6.680131188771972e+01,
                                           -1.328068155288572e+01};
  static constexpr std::array<double, 6> c{-7.784894002430293e-03, -3.223964580411365e-01,
                                           -2.400758277161838e+00, -2.549732539343734e+00,
                                           4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr std::array<double, 4> d{7.784695709041462e-03, 3.224671290700398e-01,
                                           2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley step; the error term is taken on the smaller tail for accuracy.
  const double e = (x <= 0.0) ? normal_cdf(x) - p : (1.0 - p) - normal_cdf(-x);
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  if (std::isfinite(u)) x -= u / (1.0 + 0.5 * x * u);
  return x;
}

// Reproducible random stream keyed by (seed, stream id). Streams with
// different ids are seeded through seed_seq and behave as independent
// generators; a stream must not be shared across threads.
class RngStream {
public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id) : seed_(seed), stream_(stream_id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream_id),
                      static_cast<std::uint32_t>(stream_id >> 32), 0x9e3779b9u};
    engine_.seed(seq);
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_; }

  // Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

  double normal() { return normal_(engine_); }

  std::mt19937_64& engine() noexcept { return engine_; }

private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

// log of a Gamma(shape, 1) variate via Marsaglia-Tsang. Shapes below one use
// the boost G(a) = G(a + 1) U^{1/a}, kept in the log domain so tiny shapes
// do not underflow.
inline double log_gamma_sample(RngStream& rng, double shape) {
  detail::require_positive(shape, "gamma_sample");
  double log_boost = 0.0;
  if (shape < 1.0) {
    log_boost = std::log(rng.uniform()) / shape;
    shape += 1.0;
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x;
    double v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2 ||
        std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) {
      return std::log(d * v) + log_boost;
    }
  }
}

inline double gamma_sample(RngStream& rng, double shape) {
  return std::exp(log_gamma_sample(rng, shape));
}

// Beta(a, b) draw as G_a / (G_a + G_b), clamped to [eps, 1 - eps].
inline double beta_sample(RngStream& rng, double a, double b) {
  detail::require_positive(a, "beta_sample");
  detail::require_positive(b, "beta_sample");
  const double lx = log_gamma_sample(rng, a);
  const double ly = log_gamma_sample(rng, b);
  const double y = 1.0 / (1.0 + std::exp(ly - lx));
  constexpr double eps = std::numeric_limits<double>::epsilon();
  return std::clamp(y, eps, 1.0 - eps);
}

// Reciprocal condition below which a least-squares or normal-equation
// system is treated as singular.
inline constexpr double kRcondThreshold = 1e-12;

// Ordinary least squares of an already whitened system via column-pivoted
// QR. `block` names the parameter block for error reporting.
inline Vector solve_least_squares(const Matrix& design, const Vector& response,
                                  const std::string& block) {
  if (design.rows() != response.size()) {
    throw EstimationError(block, "design/response row mismatch");
  }
  if (design.rows() < design.cols()) {
    throw EstimationError(block, "fewer rows than columns");
  }
  if (!design.allFinite() || !response.allFinite()) {
    throw EstimationError(block, "non-finite entries in weighted system");
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  const auto r_diag = qr.matrixR().diagonal().cwiseAbs();
  const double rmax = r_diag.size() ? r_diag.maxCoeff() : 0.0;
  const double rmin = r_diag.size() ? r_diag.minCoeff() : 0.0;
  if (!(rmax > 0.0) || rmin / rmax < kRcondThreshold) {
    throw EstimationError(block, "design is rank deficient or ill-conditioned (collinear columns)");
  }
  return qr.solve(response);
}

// (D' W D)^{-1} D' W r with W diagonal (given as its diagonal).
inline Vector solve_weighted_least_squares(const Matrix& design, const Vector& weights,
                                           const Vector& response,
                                           const std::string& block = "wls") {
  if (weights.size() != design.rows()) {
    throw EstimationError(block, "weight vector length mismatch");
  }
  if ((weights.array() < 0.0).any()) {
    throw EstimationError(block, "negative weights");
  }
  const Vector root = weights.cwiseSqrt();
  return solve_least_squares(root.asDiagonal() * design, root.cwiseProduct(response), block);
}

// Dense positive-(semi)definite weight matrix variant: W = L L', solve the
// system whitened by L'.
inline Vector solve_weighted_least_squares(const Matrix& design, const Matrix& weights,
                                           const Vector& response,
                                           const std::string& block = "wls") {
  if (weights.rows() != design.rows() || weights.cols() != design.rows()) {
    throw EstimationError(block, "weight matrix dimension mismatch");
  }
  Eigen::LDLT<Matrix> ldlt(weights);
  if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() < 0.0).any()) {
    throw EstimationError(block, "weight matrix is not positive semi-definite");
  }
  // W = P' L D L' P  =>  whitening factor D^{1/2} L' P
  const Vector droot = ldlt.vectorD().cwiseSqrt();
  Matrix factor = Matrix(ldlt.matrixU()) * (ldlt.transpositionsP() * Matrix::Identity(design.rows(), design.rows()));
  factor = droot.asDiagonal() * factor;
  return solve_least_squares(factor * design, factor * response, block);
}

} // namespace infbeta
