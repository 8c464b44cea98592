#pragma once

// Model specification, data, parameter vectors and the exact likelihood
// machinery (log-likelihood, score, expected and observed information) for
// zero-or-one inflated beta regression with linear predictors
//   h1(alpha_t) = v_t' rho,  h2(mu_t) = x_t' beta,  h3(phi_t) = z_t' gamma.

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "infbeta/distribution.hpp"
#include "infbeta/error.hpp"
#include "infbeta/links.hpp"
#include "infbeta/numerics.hpp"

namespace infbeta {

// Responses with the derived indicator and log transforms. y_star and
// y_dagger are exact zeros at observations equal to c.
class Dataset {
public:
  Dataset() = default;

  Dataset(Vector y, int c) : y_(std::move(y)), c_(c) {
    if (c != 0 && c != 1) throw DomainError("inflation point c must be 0 or 1");
    const Eigen::Index n = y_.size();
    at_c_.setZero(n);
    y_star_.setZero(n);
    y_dagger_.setZero(n);
    for (Eigen::Index t = 0; t < n; ++t) {
      const double yt = y_[t];
      if (yt == static_cast<double>(c)) {
        at_c_[t] = 1.0;
        continue;
      }
      if (!(yt > 0.0 && yt < 1.0)) {
        throw DataError("observation " + std::to_string(t + 1) + " (y = " + std::to_string(yt) +
                        ") is not in (0, 1) or equal to c = " + std::to_string(c));
      }
      interior_.push_back(t);
      y_star_[t] = std::log(yt / (1.0 - yt));
      y_dagger_[t] = std::log1p(-yt);
    }
  }

  Eigen::Index size() const noexcept { return y_.size(); }
  int c() const noexcept { return c_; }
  const Vector& y() const noexcept { return y_; }
  // 1{y_t = c}
  const Vector& at_c() const noexcept { return at_c_; }
  const Vector& y_star() const noexcept { return y_star_; }
  const Vector& y_dagger() const noexcept { return y_dagger_; }
  const std::vector<Eigen::Index>& interior() const noexcept { return interior_; }
  Eigen::Index count_at_c() const noexcept { return size() - static_cast<Eigen::Index>(interior_.size()); }

private:
  Vector y_;
  int c_ = 0;
  Vector at_c_;
  Vector y_star_;
  Vector y_dagger_;
  std::vector<Eigen::Index> interior_;
};

struct ModelSpec {
  int c = 0;
  LinkKind link_alpha = LinkKind::logit;
  LinkKind link_mu = LinkKind::logit;
  LinkKind link_phi = LinkKind::log;
  Matrix V;
  Matrix X;
  Matrix Z;
  std::vector<std::string> names_alpha;
  std::vector<std::string> names_mu;
  std::vector<std::string> names_phi;

  Eigen::Index n() const noexcept { return V.rows(); }
  Eigen::Index p() const noexcept { return V.cols(); }
  Eigen::Index k() const noexcept { return X.cols(); }
  Eigen::Index m() const noexcept { return Z.cols(); }
  Eigen::Index dim() const noexcept { return p() + k() + m(); }
};

namespace detail {

inline Eigen::Index column_rank(const Matrix& A) {
  if (A.cols() == 0) return 0;
  Eigen::ColPivHouseholderQR<Matrix> qr(A);
  qr.setThreshold(1e-10);
  return qr.rank();
}

inline std::vector<std::string> default_names(const std::string& prefix, Eigen::Index count) {
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < count; ++j) names.push_back(prefix + std::to_string(j));
  return names;
}

} // namespace detail

// Checks dimensions, full column rank and p + k + m < n. Fills missing
// column names.
inline void validate(ModelSpec& spec) {
  if (spec.c != 0 && spec.c != 1) throw UsageError("inflation point c must be 0 or 1");
  const Eigen::Index n = spec.V.rows();
  if (spec.X.rows() != n || spec.Z.rows() != n) {
    throw UsageError("design matrices V, X, Z must have the same number of rows");
  }
  if (spec.p() == 0 || spec.k() == 0 || spec.m() == 0) {
    throw UsageError("each of the alpha, mu and phi predictors needs at least one column");
  }
  if (spec.dim() >= n) throw UsageError("need p + k + m < n");
  if (!is_unit_link(spec.link_alpha) || !is_unit_link(spec.link_mu)) {
    throw UsageError("alpha and mu links must map (0, 1)");
  }
  if (is_unit_link(spec.link_phi)) throw UsageError("phi link must be log or sqrt");
  const auto check_rank = [](const Matrix& A, const char* name) {
    if (!A.allFinite()) throw UsageError(std::string(name) + " design has non-finite entries");
    if (detail::column_rank(A) < A.cols()) {
      throw EstimationError(name, "design matrix does not have full column rank");
    }
  };
  check_rank(spec.V, "rho");
  check_rank(spec.X, "beta");
  check_rank(spec.Z, "gamma");
  if (spec.names_alpha.size() != static_cast<std::size_t>(spec.p())) spec.names_alpha = detail::default_names("v", spec.p());
  if (spec.names_mu.size() != static_cast<std::size_t>(spec.k())) spec.names_mu = detail::default_names("x", spec.k());
  if (spec.names_phi.size() != static_cast<std::size_t>(spec.m())) spec.names_phi = detail::default_names("z", spec.m());
}

inline void check_compatible(const ModelSpec& spec, const Dataset& data) {
  if (spec.n() != data.size()) throw UsageError("design rows do not match the number of responses");
  if (spec.c != data.c()) throw UsageError("model and data use different inflation points");
}

// theta = (rho, beta, gamma).
struct ParameterVector {
  Vector rho;
  Vector beta;
  Vector gamma;

  Eigen::Index size() const noexcept { return rho.size() + beta.size() + gamma.size(); }

  Vector flat() const {
    Vector theta(size());
    theta << rho, beta, gamma;
    return theta;
  }

  static ParameterVector from_flat(const Vector& theta, Eigen::Index p, Eigen::Index k,
                                   Eigen::Index m) {
    if (theta.size() != p + k + m) throw UsageError("parameter vector has the wrong length");
    return {theta.head(p), theta.segment(p, k), theta.tail(m)};
  }
};

inline void check_dimensions(const ModelSpec& spec, const ParameterVector& theta) {
  if (theta.rho.size() != spec.p() || theta.beta.size() != spec.k() ||
      theta.gamma.size() != spec.m()) {
    throw UsageError("parameter dimensions do not match the model specification");
  }
}

// Per-observation quantities at a parameter value. `dalpha` etc. hold the
// reciprocal first link derivatives 1/h'(.) (entries of D, T, H); the
// `*_second` arrays hold h''(.).
struct DiscreteState {
  Vector eta;
  Vector alpha;
  Vector dalpha;
  Vector alpha_second;
};

struct ContinuousState {
  Vector eta_mu;
  Vector eta_phi;
  Vector mu;
  Vector phi;
  Vector dmu;
  Vector dphi;
  Vector mu_second;
  Vector phi_second;
  Vector mu_star;
  Vector mu_dagger;
  Vector v_star;
  Vector v_dagger;
  Vector c_star_dagger;
};

struct WorkingState {
  DiscreteState discrete;
  ContinuousState continuous;
};

inline DiscreteState evaluate_discrete(const ModelSpec& spec, const Vector& rho) {
  if (rho.size() != spec.p()) throw UsageError("rho has the wrong length");
  const Eigen::Index n = spec.n();
  DiscreteState s;
  s.eta = spec.V * rho;
  s.alpha.resize(n);
  s.dalpha.resize(n);
  s.alpha_second.resize(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    if (!std::isfinite(s.eta[t])) throw InvalidParameterError("non-finite alpha predictor");
    const double a = link_inverse(spec.link_alpha, s.eta[t]);
    const auto d = link_derivatives(spec.link_alpha, a);
    s.alpha[t] = a;
    s.dalpha[t] = 1.0 / d.first;
    s.alpha_second[t] = d.second;
  }
  return s;
}

inline ContinuousState evaluate_continuous(const ModelSpec& spec, const Vector& beta,
                                           const Vector& gamma) {
  if (beta.size() != spec.k() || gamma.size() != spec.m()) {
    throw UsageError("beta/gamma have the wrong length");
  }
  const Eigen::Index n = spec.n();
  ContinuousState s;
  s.eta_mu = spec.X * beta;
  s.eta_phi = spec.Z * gamma;
  for (Vector* v : {&s.mu, &s.phi, &s.dmu, &s.dphi, &s.mu_second, &s.phi_second, &s.mu_star,
                    &s.mu_dagger, &s.v_star, &s.v_dagger, &s.c_star_dagger}) {
    v->resize(n);
  }
  for (Eigen::Index t = 0; t < n; ++t) {
    if (!std::isfinite(s.eta_mu[t]) || !std::isfinite(s.eta_phi[t])) {
      throw InvalidParameterError("non-finite mu/phi predictor");
    }
    const double mu = link_inverse(spec.link_mu, s.eta_mu[t]);
    const double phi = link_inverse(spec.link_phi, s.eta_phi[t]);
    if (!std::isfinite(phi)) throw InvalidParameterError("precision overflow");
    const auto dm = link_derivatives(spec.link_mu, mu);
    const auto dp = link_derivatives(spec.link_phi, phi);
    const auto cm = conditional_moments(mu, phi);
    s.mu[t] = mu;
    s.phi[t] = phi;
    s.dmu[t] = 1.0 / dm.first;
    s.dphi[t] = 1.0 / dp.first;
    s.mu_second[t] = dm.second;
    s.phi_second[t] = dp.second;
    s.mu_star[t] = cm.mu_star;
    s.mu_dagger[t] = cm.mu_dagger;
    s.v_star[t] = cm.v_star;
    s.v_dagger[t] = cm.v_dagger;
    s.c_star_dagger[t] = cm.c_star_dagger;
  }
  return s;
}

inline WorkingState evaluate(const ModelSpec& spec, const ParameterVector& theta) {
  check_dimensions(spec, theta);
  return {evaluate_discrete(spec, theta.rho), evaluate_continuous(spec, theta.beta, theta.gamma)};
}

// ---------------------------------------------------------------------------
// Log-likelihood

inline double discrete_log_likelihood(const Dataset& data, const DiscreteState& s) {
  double ll = 0.0;
  for (Eigen::Index t = 0; t < data.size(); ++t) {
    ll += data.at_c()[t] > 0.5 ? std::log(s.alpha[t]) : std::log1p(-s.alpha[t]);
  }
  if (!std::isfinite(ll)) throw InvalidParameterError("discrete log-likelihood is not finite");
  return ll;
}

inline double continuous_log_likelihood(const Dataset& data, const ContinuousState& s) {
  double ll = 0.0;
  for (const Eigen::Index t : data.interior()) {
    const double mu = s.mu[t];
    const double phi = s.phi[t];
    ll += std::lgamma(phi) - std::lgamma(mu * phi) - std::lgamma((1.0 - mu) * phi) +
          (mu * phi - 1.0) * data.y_star()[t] + (phi - 2.0) * data.y_dagger()[t];
  }
  if (!std::isfinite(ll)) throw InvalidParameterError("continuous log-likelihood is not finite");
  return ll;
}

inline double discrete_log_likelihood(const ModelSpec& spec, const Dataset& data, const Vector& rho) {
  check_compatible(spec, data);
  return discrete_log_likelihood(data, evaluate_discrete(spec, rho));
}

inline double continuous_log_likelihood(const ModelSpec& spec, const Dataset& data,
                                        const Vector& beta, const Vector& gamma) {
  check_compatible(spec, data);
  return continuous_log_likelihood(data, evaluate_continuous(spec, beta, gamma));
}

inline double log_likelihood(const ModelSpec& spec, const Dataset& data,
                             const ParameterVector& theta) {
  check_dimensions(spec, theta);
  return discrete_log_likelihood(spec, data, theta.rho) +
         continuous_log_likelihood(spec, data, theta.beta, theta.gamma);
}

// ---------------------------------------------------------------------------
// Score

// d l_t / d eta_1t = (1{y=c} - alpha) / (alpha (1 - alpha)) / h1'(alpha)
inline Vector discrete_eta_score(const Dataset& data, const DiscreteState& s) {
  const auto& a = s.alpha.array();
  return ((data.at_c().array() - a) / (a * (1.0 - a)) * s.dalpha.array()).matrix();
}

// Per-observation derivatives of l_t w.r.t. (eta_2t, eta_3t); zero at y = c.
struct ContinuousEtaScore {
  Vector mu;
  Vector phi;
};

inline ContinuousEtaScore continuous_eta_score(const Dataset& data, const ContinuousState& s) {
  const Eigen::Index n = data.size();
  ContinuousEtaScore g{Vector::Zero(n), Vector::Zero(n)};
  for (const Eigen::Index t : data.interior()) {
    const double rs = data.y_star()[t] - s.mu_star[t];
    const double rd = data.y_dagger()[t] - s.mu_dagger[t];
    g.mu[t] = s.phi[t] * rs * s.dmu[t];
    g.phi[t] = (s.mu[t] * rs + rd) * s.dphi[t];
  }
  return g;
}

inline Vector discrete_score(const ModelSpec& spec, const Dataset& data, const Vector& rho) {
  check_compatible(spec, data);
  return spec.V.transpose() * discrete_eta_score(data, evaluate_discrete(spec, rho));
}

inline Vector continuous_score(const ModelSpec& spec, const Dataset& data, const Vector& beta,
                               const Vector& gamma) {
  check_compatible(spec, data);
  const auto g = continuous_eta_score(data, evaluate_continuous(spec, beta, gamma));
  Vector u(spec.k() + spec.m());
  u << spec.X.transpose() * g.mu, spec.Z.transpose() * g.phi;
  return u;
}

// U(theta) = (U_rho, U_beta, U_gamma).
inline Vector score(const ModelSpec& spec, const Dataset& data, const ParameterVector& theta) {
  check_dimensions(spec, theta);
  Vector u(spec.dim());
  u << discrete_score(spec, data, theta.rho),
      continuous_score(spec, data, theta.beta, theta.gamma);
  return u;
}

// ---------------------------------------------------------------------------
// Information matrices

// Diagonals of the weight matrices W1..W4 of the expected information. The
// continuous weights carry the factor (1 - alpha_t), the probability that
// observation t lands in (0, 1).
struct InformationWeights {
  Vector w1;
  Vector w2;
  Vector w3;
  Vector w4;
};

inline Vector discrete_weights(const DiscreteState& s) {
  const auto& a = s.alpha.array();
  return (s.dalpha.array().square() / (a * (1.0 - a))).matrix();
}

// Conditional (given y_t in (0, 1)) expected weights of the continuous part.
inline void continuous_unit_weights(const ContinuousState& s, Eigen::Index t, double& w2,
                                    double& w3, double& w4) {
  const double mu = s.mu[t];
  const double phi = s.phi[t];
  const double vs = s.v_star[t];
  const double cs = s.c_star_dagger[t];
  w2 = phi * phi * vs * s.dmu[t] * s.dmu[t];
  w3 = phi * (mu * vs + cs) * s.dmu[t] * s.dphi[t];
  w4 = (mu * mu * vs + 2.0 * mu * cs + s.v_dagger[t]) * s.dphi[t] * s.dphi[t];
}

inline InformationWeights information_weights(const DiscreteState& d, const ContinuousState& s) {
  const Eigen::Index n = d.alpha.size();
  InformationWeights w{discrete_weights(d), Vector(n), Vector(n), Vector(n)};
  for (Eigen::Index t = 0; t < n; ++t) {
    double w2, w3, w4;
    continuous_unit_weights(s, t, w2, w3, w4);
    const double q = 1.0 - d.alpha[t];
    w.w2[t] = q * w2;
    w.w3[t] = q * w3;
    w.w4[t] = q * w4;
  }
  if (!w.w1.allFinite() || !w.w2.allFinite() || !w.w3.allFinite() || !w.w4.allFinite()) {
    throw InvalidParameterError("non-finite information weights");
  }
  return w;
}

// Assembles the (k + m) square (beta, gamma) block from weights.
inline Matrix continuous_block(const ModelSpec& spec, const Vector& w2, const Vector& w3,
                               const Vector& w4) {
  const Eigen::Index k = spec.k();
  const Eigen::Index m = spec.m();
  Matrix K(k + m, k + m);
  K.topLeftCorner(k, k) = spec.X.transpose() * w2.asDiagonal() * spec.X;
  K.topRightCorner(k, m) = spec.X.transpose() * w3.asDiagonal() * spec.Z;
  K.bottomLeftCorner(m, k) = K.topRightCorner(k, m).transpose();
  K.bottomRightCorner(m, m) = spec.Z.transpose() * w4.asDiagonal() * spec.Z;
  return K;
}

inline Matrix assemble_information(const ModelSpec& spec, const Matrix& discrete,
                                   const Matrix& continuous) {
  const Eigen::Index p = spec.p();
  Matrix K = Matrix::Zero(spec.dim(), spec.dim());
  K.topLeftCorner(p, p) = discrete;
  K.bottomRightCorner(spec.k() + spec.m(), spec.k() + spec.m()) = continuous;
  return K;
}

// Expected (Fisher) information K(theta). Depends on the design only, not
// on the responses; exactly block-diagonal between rho and (beta, gamma).
inline Matrix fisher_information(const ModelSpec& spec, const WorkingState& state) {
  const auto w = information_weights(state.discrete, state.continuous);
  return assemble_information(spec, spec.V.transpose() * w.w1.asDiagonal() * spec.V,
                              continuous_block(spec, w.w2, w.w3, w.w4));
}

inline Matrix fisher_information(const ModelSpec& spec, const ParameterVector& theta) {
  return fisher_information(spec, evaluate(spec, theta));
}

// Observed information of the continuous component, -d2 l2 / d(beta, gamma)^2.
inline Matrix continuous_observed_block(const ModelSpec& spec, const Dataset& data,
                                        const ContinuousState& s) {
  const Eigen::Index n = spec.n();
  Vector jbb = Vector::Zero(n);
  Vector jbg = Vector::Zero(n);
  Vector jgg = Vector::Zero(n);
  for (const Eigen::Index t : data.interior()) {
    const double mu = s.mu[t];
    const double phi = s.phi[t];
    const double rs = data.y_star()[t] - s.mu_star[t];
    const double rd = data.y_dagger()[t] - s.mu_dagger[t];
    const double vs = s.v_star[t];
    const double cs = s.c_star_dagger[t];
    const double g_mu = phi * rs;
    const double g_phi = mu * rs + rd;
    const double l_mm = -phi * phi * vs;
    const double l_mp = rs - phi * (mu * vs + cs);
    const double l_pp = -(mu * mu * vs + 2.0 * mu * cs + s.v_dagger[t]);
    const double dm = s.dmu[t];
    const double dp = s.dphi[t];
    jbb[t] = -(l_mm * dm * dm - g_mu * s.mu_second[t] * dm * dm * dm);
    jbg[t] = -(l_mp * dm * dp);
    jgg[t] = -(l_pp * dp * dp - g_phi * s.phi_second[t] * dp * dp * dp);
  }
  return continuous_block(spec, jbb, jbg, jgg);
}

// Observed information J(theta) = -Hessian of the log-likelihood for linear
// predictors.
inline Matrix observed_information(const ModelSpec& spec, const Dataset& data,
                                   const ParameterVector& theta) {
  check_compatible(spec, data);
  const auto state = evaluate(spec, theta);
  const auto& d = state.discrete;
  const auto& s = state.continuous;
  const Eigen::Index n = spec.n();

  Vector j1(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    const double a = d.alpha[t];
    const double yc = data.at_c()[t];
    const double l_a = (yc - a) / (a * (1.0 - a));
    const double l_aa = -yc / (a * a) - (1.0 - yc) / ((1.0 - a) * (1.0 - a));
    const double da = d.dalpha[t];
    j1[t] = -(l_aa * da * da - l_a * d.alpha_second[t] * da * da * da);
  }

  return assemble_information(spec, spec.V.transpose() * j1.asDiagonal() * spec.V,
                              continuous_observed_block(spec, data, s));
}

} // namespace infbeta
