#pragma once

// Maximum likelihood fitting. The likelihood factorizes into a discrete part
// in rho and a continuous part in (beta, gamma), so the two components are
// fitted by separate re-weighted least-squares (Fisher scoring) loops.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "infbeta/error.hpp"
#include "infbeta/links.hpp"
#include "infbeta/model.hpp"
#include "infbeta/numerics.hpp"

namespace infbeta {

struct FitOptions {
  int max_iterations = 100;
  double step_tolerance = 1e-8;
  double relative_loglik_tolerance = 1e-10;
  double score_tolerance = 1e-5;
  int max_halvings = 20;
};

// Outcome of one component's scoring loop.
struct ComponentFit {
  Vector estimate;
  int iterations = 0;
  bool converged = false;
  double score_norm = std::numeric_limits<double>::quiet_NaN();
  double loglik = std::numeric_limits<double>::quiet_NaN();
  std::string message;
};

struct ContinuousEstimate {
  Vector beta;
  Vector gamma;
};

namespace detail {

inline double sup_norm(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

inline bool loglik_not_worse(double candidate, double current) {
  return std::isfinite(candidate) && candidate >= current - 1e-12 * (1.0 + std::abs(current));
}

inline bool converged_now(const FitOptions& opt, double step, double ll_old, double ll_new,
                          double score_norm) {
  const double rel = std::abs(ll_new - ll_old) / (std::abs(ll_old) + 1e-10);
  return score_norm < opt.score_tolerance &&
         (step < opt.step_tolerance || rel < opt.relative_loglik_tolerance);
}

inline Matrix select_rows(const Matrix& A, const std::vector<Eigen::Index>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), A.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = A.row(rows[i]);
  return out;
}

// Starting value for rho: least squares of h1 applied to the indicator
// shrunk halfway toward 1/2.
inline Vector initial_rho(const ModelSpec& spec, const Dataset& data) {
  constexpr double shrink = 0.5;
  Vector target(data.size());
  for (Eigen::Index t = 0; t < data.size(); ++t) {
    const double smoothed = (1.0 - shrink) * data.at_c()[t] + shrink * 0.5;
    target[t] = link_apply(spec.link_alpha, smoothed);
  }
  return solve_least_squares(spec.V, target, "rho");
}

// Starting values for (beta, gamma) from the interior observations: OLS of
// h2(y) on X, and a constant precision from the method of moments.
inline ContinuousEstimate initial_continuous(const ModelSpec& sub, const Vector& y) {
  const Eigen::Index n = y.size();
  Vector target(n);
  for (Eigen::Index t = 0; t < n; ++t) target[t] = link_apply(sub.link_mu, y[t]);
  Vector beta = solve_least_squares(sub.X, target, "beta");
  const double mean = y.mean();
  const double var = (n > 1) ? (y.array() - mean).square().sum() / static_cast<double>(n - 1) : 0.0;
  double phi0 = var > 0.0 ? mean * (1.0 - mean) / var - 1.0 : 1e6;
  phi0 = std::clamp(phi0, 0.1, 1e6);
  Vector gamma = solve_least_squares(sub.Z, Vector::Constant(n, link_apply(sub.link_phi, phi0)), "gamma");
  return {std::move(beta), std::move(gamma)};
}

inline std::string separation_message(const Vector& alpha) {
  Eigen::Index pinned = 0;
  for (Eigen::Index t = 0; t < alpha.size(); ++t) {
    if (alpha[t] <= 10.0 * kLinkClamp || alpha[t] >= 1.0 - 10.0 * kLinkClamp) ++pinned;
  }
  if (pinned > 0) {
    return "possible separation: fitted alpha pinned at the clamp bounds for " +
           std::to_string(pinned) + " observation(s) with non-vanishing gradient";
  }
  return "iteration limit reached";
}

} // namespace detail

// Scoring loop for rho. Does not throw on non-convergence; the returned
// record says what happened.
inline ComponentFit run_discrete(const ModelSpec& spec, const Dataset& data,
                                 const std::optional<Vector>& init = std::nullopt,
                                 const FitOptions& opt = {}) {
  check_compatible(spec, data);
  const Eigen::Index n_c = data.count_at_c();
  if (n_c == 0 || n_c == data.size()) {
    throw DegenerateDataError("discrete component needs observations both at c and in (0, 1); found " +
                              std::to_string(n_c) + " of " + std::to_string(data.size()) + " at c");
  }
  Vector rho = init ? *init : detail::initial_rho(spec, data);
  if (rho.size() != spec.p()) throw UsageError("initial rho has the wrong length");

  DiscreteState state = evaluate_discrete(spec, rho);
  double ll = discrete_log_likelihood(data, state);
  ComponentFit out;
  for (int iter = 1; iter <= opt.max_iterations; ++iter) {
    out.iterations = iter;
    const Vector w = discrete_weights(state);
    const Vector working = state.eta + discrete_eta_score(data, state).cwiseQuotient(w);
    Vector step = solve_weighted_least_squares(spec.V, w, working, "rho") - rho;

    bool accepted = false;
    Vector candidate;
    DiscreteState cand_state;
    double cand_ll = 0.0;
    for (int h = 0; h <= opt.max_halvings; ++h, step *= 0.5) {
      candidate = rho + step;
      try {
        cand_state = evaluate_discrete(spec, candidate);
        cand_ll = discrete_log_likelihood(data, cand_state);
      } catch (const Error&) {
        continue;
      }
      if (detail::loglik_not_worse(cand_ll, ll)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      out.message = "step-halving failed to find an ascent step";
      break;
    }
    const double step_size = detail::sup_norm(candidate - rho);
    rho = candidate;
    state = std::move(cand_state);
    const double ll_old = ll;
    ll = cand_ll;
    out.score_norm = detail::sup_norm(spec.V.transpose() * discrete_eta_score(data, state));
    if (detail::converged_now(opt, step_size, ll_old, ll, out.score_norm)) {
      out.converged = true;
      break;
    }
  }
  out.estimate = rho;
  out.loglik = ll;
  out.score_norm = detail::sup_norm(spec.V.transpose() * discrete_eta_score(data, state));
  if (!out.converged && out.message.empty()) out.message = detail::separation_message(state.alpha);
  return out;
}

inline Vector fit_discrete(const ModelSpec& spec, const Dataset& data,
                           const std::optional<Vector>& init = std::nullopt,
                           const FitOptions& opt = {}, ComponentFit* record = nullptr) {
  ComponentFit res = run_discrete(spec, data, init, opt);
  if (record) *record = res;
  if (!res.converged) {
    throw NonConvergenceError("discrete component did not converge after " +
                              std::to_string(res.iterations) + " iterations (score sup-norm " +
                              std::to_string(res.score_norm) + "): " + res.message);
  }
  return res.estimate;
}

// Restriction of the continuous part to the observations in (0, 1).
struct InteriorProblem {
  ModelSpec spec;
  Dataset data;
};

inline InteriorProblem interior_problem(const ModelSpec& spec, const Dataset& data) {
  check_compatible(spec, data);
  const auto& rows = data.interior();
  InteriorProblem prob;
  prob.spec.c = spec.c;
  prob.spec.link_alpha = spec.link_alpha;
  prob.spec.link_mu = spec.link_mu;
  prob.spec.link_phi = spec.link_phi;
  prob.spec.V = detail::select_rows(spec.V, rows);
  prob.spec.X = detail::select_rows(spec.X, rows);
  prob.spec.Z = detail::select_rows(spec.Z, rows);
  Vector y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) y[static_cast<Eigen::Index>(i)] = data.y()[rows[i]];
  prob.data = Dataset(std::move(y), spec.c);
  return prob;
}

namespace detail {

// One joint scoring update for (beta, gamma): weighted least squares of the
// stacked working response on blockdiag(X, Z) with 2x2 weight blocks
// [[w2, w3], [w3, w4]] per observation, solved in whitened form.
inline Vector continuous_scoring_update(const ModelSpec& sub, const Dataset& data,
                                        const ContinuousState& s) {
  const Eigen::Index n = sub.n();
  const Eigen::Index k = sub.k();
  const Eigen::Index m = sub.m();
  const auto g = continuous_eta_score(data, s);
  Matrix A = Matrix::Zero(2 * n, k + m);
  Vector b(2 * n);
  for (Eigen::Index t = 0; t < n; ++t) {
    double w2, w3, w4;
    continuous_unit_weights(s, t, w2, w3, w4);
    const double l11 = std::sqrt(w2);
    const double l21 = w3 / l11;
    const double rem = w4 - l21 * l21;
    if (!(l11 > 0.0) || !(rem > 0.0) || !std::isfinite(rem)) {
      throw EstimationError("beta/gamma", "weight block is not positive definite at observation " +
                                              std::to_string(t + 1));
    }
    const double l22 = std::sqrt(rem);
    // working response r = eta + W^{-1} s
    const double det = w2 * w4 - w3 * w3;
    const double r_mu = s.eta_mu[t] + (w4 * g.mu[t] - w3 * g.phi[t]) / det;
    const double r_phi = s.eta_phi[t] + (w2 * g.phi[t] - w3 * g.mu[t]) / det;
    A.row(2 * t).head(k) = l11 * sub.X.row(t);
    A.row(2 * t).tail(m) = l21 * sub.Z.row(t);
    A.row(2 * t + 1).tail(m) = l22 * sub.Z.row(t);
    b[2 * t] = l11 * r_mu + l21 * r_phi;
    b[2 * t + 1] = l22 * r_phi;
  }
  return solve_least_squares(A, b, "beta/gamma");
}

} // namespace detail

inline ComponentFit run_continuous(const ModelSpec& spec, const Dataset& data,
                                   const std::optional<ContinuousEstimate>& init = std::nullopt,
                                   const FitOptions& opt = {}) {
  const InteriorProblem prob = interior_problem(spec, data);
  const ModelSpec& sub = prob.spec;
  const Eigen::Index n_in = prob.data.size();
  if (n_in <= spec.k() + spec.m()) {
    throw DegenerateDataError("continuous component needs more than k + m = " +
                              std::to_string(spec.k() + spec.m()) +
                              " observations in (0, 1); found " + std::to_string(n_in));
  }
  ContinuousEstimate start = init ? *init : detail::initial_continuous(sub, prob.data.y());
  if (start.beta.size() != spec.k() || start.gamma.size() != spec.m()) {
    throw UsageError("initial beta/gamma have the wrong length");
  }
  const Eigen::Index k = spec.k();
  const Eigen::Index m = spec.m();
  Vector theta(k + m);
  theta << start.beta, start.gamma;

  const auto score_vector = [&](const ContinuousState& s) {
    const auto g = continuous_eta_score(prob.data, s);
    Vector u(k + m);
    u << sub.X.transpose() * g.mu, sub.Z.transpose() * g.phi;
    return u;
  };
  const auto score_of = [&](const ContinuousState& s) { return detail::sup_norm(score_vector(s)); };

  ContinuousState state = evaluate_continuous(sub, theta.head(k), theta.tail(m));
  double ll = continuous_log_likelihood(prob.data, state);
  ComponentFit out;
  Vector candidate;
  ContinuousState cand_state;
  double cand_ll = 0.0;
  const auto try_step = [&](Vector step, int halvings) {
    for (int h = 0; h <= halvings; ++h, step *= 0.5) {
      candidate = theta + step;
      try {
        cand_state = evaluate_continuous(sub, candidate.head(k), candidate.tail(m));
        cand_ll = continuous_log_likelihood(prob.data, cand_state);
      } catch (const Error&) {
        continue;
      }
      if (detail::loglik_not_worse(cand_ll, ll)) return true;
    }
    return false;
  };
  // Fisher scoring converges only linearly when observed and expected
  // information differ, so a full Newton step on the observed information is
  // tried first whenever that matrix is positive definite.
  for (int iter = 1; iter <= opt.max_iterations; ++iter) {
    out.iterations = iter;
    bool accepted = false;
    Eigen::LLT<Matrix> llt(continuous_observed_block(sub, prob.data, state));
    if (llt.info() == Eigen::Success && llt.rcond() >= kRcondThreshold) {
      accepted = try_step(llt.solve(score_vector(state)), 0);
    }
    if (!accepted) {
      accepted = try_step(detail::continuous_scoring_update(sub, prob.data, state) - theta, opt.max_halvings);
    }
    if (!accepted) {
      out.message = "step-halving failed to find an ascent step";
      break;
    }
    const double step_size = detail::sup_norm(candidate - theta);
    theta = candidate;
    state = std::move(cand_state);
    const double ll_old = ll;
    ll = cand_ll;
    out.score_norm = score_of(state);
    if (detail::converged_now(opt, step_size, ll_old, ll, out.score_norm)) {
      out.converged = true;
      break;
    }
  }
  out.estimate = theta;
  out.loglik = ll;
  out.score_norm = score_of(state);
  if (!out.converged && out.message.empty()) out.message = "iteration limit reached";
  return out;
}

inline ContinuousEstimate fit_continuous(const ModelSpec& spec, const Dataset& data,
                                         const std::optional<ContinuousEstimate>& init = std::nullopt,
                                         const FitOptions& opt = {},
                                         ComponentFit* record = nullptr) {
  ComponentFit res = run_continuous(spec, data, init, opt);
  if (record) *record = res;
  if (!res.converged) {
    throw NonConvergenceError("continuous component did not converge after " +
                              std::to_string(res.iterations) + " iterations (score sup-norm " +
                              std::to_string(res.score_norm) + "): " + res.message);
  }
  return {res.estimate.head(spec.k()), res.estimate.tail(spec.m())};
}

// ---------------------------------------------------------------------------

struct FittedModel {
  ModelSpec spec;
  Dataset data;
  ParameterVector theta_hat;
  // Inverse expected information in (rho, beta, gamma) order.
  Matrix inv_information;
  double loglik = std::numeric_limits<double>::quiet_NaN();
  double loglik_discrete = std::numeric_limits<double>::quiet_NaN();
  double loglik_continuous = std::numeric_limits<double>::quiet_NaN();
  Vector alpha;
  Vector mu;
  Vector phi;
  Vector eta_alpha;
  Vector eta_mu;
  Vector eta_phi;
  ComponentFit discrete;
  ComponentFit continuous;

  bool converged() const noexcept { return discrete.converged && continuous.converged; }
  Eigen::Index dim() const noexcept { return spec.dim(); }
};

namespace detail {

inline Matrix invert_spd(const Matrix& K, const std::string& block) {
  if (!K.allFinite()) throw EstimationError(block, "information matrix is not finite");
  Eigen::LDLT<Matrix> ldlt(K);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < kRcondThreshold) {
    throw EstimationError(block, "information matrix is singular or ill-conditioned");
  }
  return ldlt.solve(Matrix::Identity(K.rows(), K.cols()));
}

inline ComponentFit failed_component(Eigen::Index size, const std::string& label, const Error& e) {
  ComponentFit c;
  c.estimate = Vector::Constant(size, std::numeric_limits<double>::quiet_NaN());
  c.message = label + ": " + e.what();
  return c;
}

} // namespace detail

// Recomputes fitted values, log-likelihood pieces and the inverse expected
// information for given component records.
inline FittedModel assemble_fit(const ModelSpec& spec, const Dataset& data, ComponentFit disc,
                                ComponentFit cont) {
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  const Eigen::Index n = spec.n();
  const Eigen::Index p = spec.p();
  const Eigen::Index km = spec.k() + spec.m();
  FittedModel f;
  f.spec = spec;
  f.data = data;
  f.theta_hat = {disc.estimate, cont.estimate.head(spec.k()), cont.estimate.tail(spec.m())};
  f.inv_information = Matrix::Constant(spec.dim(), spec.dim(), nan);
  f.inv_information.topRightCorner(p, km).setZero();
  f.inv_information.bottomLeftCorner(km, p).setZero();
  for (Vector* v : {&f.alpha, &f.mu, &f.phi, &f.eta_alpha, &f.eta_mu, &f.eta_phi}) {
    v->setConstant(n, nan);
  }

  std::optional<DiscreteState> ds;
  if (disc.estimate.allFinite()) {
    ds = evaluate_discrete(spec, disc.estimate);
    f.alpha = ds->alpha;
    f.eta_alpha = ds->eta;
    f.loglik_discrete = discrete_log_likelihood(data, *ds);
    try {
      f.inv_information.topLeftCorner(p, p) =
          detail::invert_spd(spec.V.transpose() * discrete_weights(*ds).asDiagonal() * spec.V, "rho");
    } catch (const EstimationError& e) {
      disc.converged = false;
      disc.message = e.what();
    }
  }
  if (cont.estimate.allFinite()) {
    const auto cs = evaluate_continuous(spec, f.theta_hat.beta, f.theta_hat.gamma);
    f.mu = cs.mu;
    f.phi = cs.phi;
    f.eta_mu = cs.eta_mu;
    f.eta_phi = cs.eta_phi;
    f.loglik_continuous = continuous_log_likelihood(data, cs);
    // Probability of landing in (0, 1); the observed indicator stands in
    // when the discrete component is unavailable.
    Vector q = ds ? Vector((1.0 - ds->alpha.array()).matrix())
                  : Vector((1.0 - data.at_c().array()).matrix());
    Vector w2(n), w3(n), w4(n);
    for (Eigen::Index t = 0; t < n; ++t) {
      continuous_unit_weights(cs, t, w2[t], w3[t], w4[t]);
      w2[t] *= q[t];
      w3[t] *= q[t];
      w4[t] *= q[t];
    }
    try {
      f.inv_information.bottomRightCorner(km, km) =
          detail::invert_spd(continuous_block(spec, w2, w3, w4), "beta/gamma");
    } catch (const EstimationError& e) {
      cont.converged = false;
      cont.message = e.what();
    }
  }
  f.loglik = f.loglik_discrete + f.loglik_continuous;
  f.discrete = std::move(disc);
  f.continuous = std::move(cont);
  return f;
}

// Fits both components independently. Component failures are recorded in
// the returned model (partial fit) rather than thrown.
inline FittedModel fit(ModelSpec spec, const Dataset& data, const FitOptions& opt = {},
                       const std::optional<ParameterVector>& init = std::nullopt) {
  validate(spec);
  check_compatible(spec, data);
  if (init) check_dimensions(spec, *init);

  ComponentFit disc;
  try {
    disc = run_discrete(spec, data, init ? std::optional<Vector>(init->rho) : std::nullopt, opt);
    if (!disc.converged) disc.message = "discrete: " + disc.message;
  } catch (const Error& e) {
    disc = detail::failed_component(spec.p(), "discrete", e);
  }

  ComponentFit cont;
  try {
    std::optional<ContinuousEstimate> start;
    if (init) start = ContinuousEstimate{init->beta, init->gamma};
    cont = run_continuous(spec, data, start, opt);
    if (!cont.converged) cont.message = "continuous: " + cont.message;
  } catch (const Error& e) {
    cont = detail::failed_component(spec.k() + spec.m(), "continuous", e);
  }
  return assemble_fit(spec, data, std::move(disc), std::move(cont));
}

} // namespace infbeta
