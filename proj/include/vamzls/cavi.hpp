#pragma once

// Coordinate ascent engines for the Gaussian and probit-latent additive models.
//
// Both engines share one sweep structure:
//   D       = blockdiag(1/sigma_a2, 1/sigma_b2 I, E[1/omega_m] P_m, E[1/eta_f] Delta_f)
//   Sigma   = (tau C'C + D)^-1         (tau = 1 for probit)
//   mu      = tau Sigma C' r           (r = y, or the latent means for probit)
//   then the latent means (probit), B_q(sigma^2) (Gaussian) and every B_q(omega), B_q(eta).
// The ELBO is evaluated after each full sweep, when every inverse-gamma scale is
// at its optimum for the current q(theta); the closed forms below rely on that.

#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vamzls/design.hpp"
#include "vamzls/errors.hpp"
#include "vamzls/numerics.hpp"

namespace vamzls {

struct VariationalFit;

struct FitControl {
  double tol = 1e-6;   // absolute ELBO change
  int max_iter = 500;
  double b_init = 1.0; // starting value of every B_q(.)
  // Called after each sweep with the current state; used by diagnostics and tests.
  std::function<void(int, const VariationalFit&)> on_iteration;
};

struct VariationalFit {
  Family family = Family::gaussian;
  Eigen::VectorXd mu_theta;
  Eigen::MatrixXd sigma_theta;
  double b_sigma2 = 1.0;           // Gaussian only
  std::vector<double> b_penalty;   // one per penalized block, in block order
  std::vector<double> b_omega;     // smooth blocks
  std::vector<double> b_eta;       // functional blocks
  Eigen::VectorXd mu_ystar;        // probit only
  Eigen::VectorXd response;        // the y the fit was run on
  Eigen::VectorXd theta_response;  // r in the last update mu_theta = tau Sigma C' r
  std::vector<double> elbo_trace;
  int iterations = 0;
  bool converged = false;
  std::string diagnostic;
  double shape_sigma2 = 0.0;       // a_e + N/2
  double theta_tau = 1.0;          // E_q[1/sigma^2] used by the last q(theta) update

  // Noise precision that scales C'C and C'r in the stored mu_theta, Sigma_theta;
  // fixed at one for probit. Lags b_sigma2 by one update, so c(z)' r = curve(z)
  // holds exactly.
  double tau() const { return family == Family::gaussian ? theta_tau : 1.0; }

  // Plug-in noise variance B_q(sigma^2) / (a_e + N/2); one for probit.
  double sigma2_hat() const { return family == Family::gaussian ? b_sigma2 / shape_sigma2 : 1.0; }

  // Working response the global test is formed from: y, or the latent means
  // that produced the stored mu_theta (one update behind mu_ystar).
  const Eigen::VectorXd& test_response() const { return theta_response; }
};

namespace detail {

inline Eigen::VectorXd anchor_direction(Eigen::Index width) {
  return Eigen::VectorXd::Constant(width, 1.0 / std::sqrt(static_cast<double>(width)));
}

// Centered smooth blocks cannot see the constant coefficient direction and the
// difference penalty does not shrink it, so it gets a fixed unit precision.
// The direction decouples from everything else in the posterior.
inline bool has_anchor(const DesignBundle& bundle, const TermBlock& b) {
  return bundle.centered && b.kind == TermKind::smooth && b.penalty.kind == PenaltyKind::difference;
}

inline double penalty_shape(const TermBlock& b) { return b.a_prior + 0.5 * static_cast<double>(b.width); }

inline Eigen::MatrixXd prior_precision(const DesignBundle& bundle, const std::vector<double>& b_penalty) {
  const Eigen::Index p = bundle.p_total();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(p, p);
  std::size_t k = 0;
  for (const auto& b : bundle.blocks) {
    switch (b.kind) {
      case TermKind::intercept:
        d(b.start, b.start) = 1.0 / bundle.hyper.sigma_a2;
        break;
      case TermKind::scalar:
        d(b.start, b.start) = 1.0 / bundle.hyper.sigma_b2;
        break;
      case TermKind::smooth:
      case TermKind::functional: {
        auto blk = d.block(b.start, b.start, b.width, b.width);
        blk = (penalty_shape(b) / b_penalty[k]) * b.penalty.matrix;
        if (has_anchor(bundle, b)) {
          const Eigen::VectorXd v = anchor_direction(b.width);
          blk += v * v.transpose();
        }
        ++k;
        break;
      }
    }
  }
  return d;
}

inline std::string zero_block_names(const DesignBundle& bundle) {
  std::string names;
  for (const auto& b : bundle.blocks) {
    if (b.kind == TermKind::intercept) continue;
    if (bundle.C.middleCols(b.start, b.width).cwiseAbs().maxCoeff() == 0.0)
      names += (names.empty() ? "" : ", ") + b.name;
  }
  return names;
}

// Inverse of a symmetric positive definite precision; one jitter retry.
inline Eigen::MatrixXd invert_precision(Eigen::MatrixXd q, const DesignBundle& bundle) {
  Eigen::LLT<Eigen::MatrixXd> llt(q);
  if (llt.info() != Eigen::Success) {
    q.diagonal() += 1e-10 * q.diagonal().cwiseAbs();
    llt.compute(q);
  }
  if (llt.info() != Eigen::Success) {
    const std::string zero = zero_block_names(bundle);
    throw NumericalError("posterior precision is not positive definite" +
                         (zero.empty() ? std::string() : " (all-zero design block: " + zero + ")"));
  }
  Eigen::MatrixXd s = llt.solve(Eigen::MatrixXd::Identity(q.rows(), q.cols()));
  return 0.5 * (s + s.transpose());
}

inline double log_det_spd(const Eigen::MatrixXd& s, const DesignBundle& bundle) {
  Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() != Eigen::Success) {
    const std::string zero = zero_block_names(bundle);
    throw NumericalError("Sigma_q(theta) is not positive definite" +
                         (zero.empty() ? std::string() : " (all-zero design block: " + zero + ")"));
  }
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

inline void update_penalty_scales(const DesignBundle& bundle, VariationalFit& fit) {
  std::size_t k = 0;
  fit.b_omega.clear();
  fit.b_eta.clear();
  for (const auto& b : bundle.blocks) {
    if (!b.penalized()) continue;
    const auto mu = fit.mu_theta.segment(b.start, b.width);
    const auto sig = fit.sigma_theta.block(b.start, b.start, b.width, b.width);
    const double quad = mu.dot(b.penalty.matrix * mu) + (b.penalty.matrix.cwiseProduct(sig)).sum();
    fit.b_penalty[k] = b.b_prior + 0.5 * quad;
    (b.kind == TermKind::smooth ? fit.b_omega : fit.b_eta).push_back(fit.b_penalty[k]);
    ++k;
  }
}

// ELBO pieces common to both families: entropy of q(theta), the fixed-effect
// prior, the anchor prior, and the inverse-gamma blocks at their optima.
inline double elbo_common(const DesignBundle& bundle, const VariationalFit& s) {
  double out = 0.5 * static_cast<double>(bundle.p_total()) + 0.5 * log_det_spd(s.sigma_theta, bundle);
  std::size_t k = 0;
  for (const auto& b : bundle.blocks) {
    if (b.kind == TermKind::intercept || b.kind == TermKind::scalar) {
      const double v = b.kind == TermKind::intercept ? bundle.hyper.sigma_a2 : bundle.hyper.sigma_b2;
      const double m = s.mu_theta(b.start);
      out -= 0.5 * std::log(v) + (m * m + s.sigma_theta(b.start, b.start)) / (2.0 * v);
      continue;
    }
    if (has_anchor(bundle, b)) {
      const Eigen::VectorXd v = anchor_direction(b.width);
      const double m = v.dot(s.mu_theta.segment(b.start, b.width));
      out -= 0.5 * (m * m + v.dot(s.sigma_theta.block(b.start, b.start, b.width, b.width) * v));
    }
    const double shape = penalty_shape(b);
    out += b.a_prior * std::log(b.b_prior) - shape * std::log(s.b_penalty[k]) + log_gamma(shape) -
           log_gamma(b.a_prior);
    ++k;
  }
  return out;
}

inline std::size_t count_penalized(const DesignBundle& bundle) {
  std::size_t k = 0;
  for (const auto& b : bundle.blocks) k += b.penalized() ? 1 : 0;
  return k;
}

inline void check_fit_inputs(const DesignBundle& bundle, const Eigen::VectorXd& y, const FitControl& control) {
  if (y.size() != bundle.n())
    throw DataError("response has " + std::to_string(y.size()) + " rows, design has " + std::to_string(bundle.n()));
  if (!y.allFinite()) throw DataError("response contains NaN or infinite values");
  if (!(control.tol > 0.0)) throw DataError("FitControl.tol must be positive");
  if (control.max_iter < 1) throw DataError("FitControl.max_iter must be at least 1");
  if (!(control.b_init > 0.0)) throw DataError("FitControl.b_init must be positive");
}

}  // namespace detail

// Closed-form Gaussian ELBO; valid at the end of a sweep.
inline double elbo_gaussian(const DesignBundle& bundle, const VariationalFit& s) {
  const double n = static_cast<double>(bundle.n());
  const auto& h = bundle.hyper;
  const double shape = h.a_e + 0.5 * n;
  return detail::elbo_common(bundle, s) - 0.5 * n * std::log(2.0 * std::numbers::pi) + h.a_e * std::log(h.b_e) -
         shape * std::log(s.b_sigma2) + log_gamma(shape) - log_gamma(h.a_e);
}

// Closed-form probit ELBO; valid once the latent means match C mu.
inline double elbo_probit(const DesignBundle& bundle, const Eigen::VectorXd& y, const VariationalFit& s) {
  const Eigen::VectorXd eta = bundle.C * s.mu_theta;
  double loglik = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i)
    loglik += y(i) > 0.5 ? std_normal_logcdf(eta(i)) : std_normal_logcdf(-eta(i));
  const Eigen::MatrixXd ctc = bundle.C.transpose() * bundle.C;
  const double trace_term = ctc.cwiseProduct(s.sigma_theta).sum();
  return loglik - 0.5 * trace_term + detail::elbo_common(bundle, s);
}

inline VariationalFit fit_gaussian(const DesignBundle& bundle, const Eigen::VectorXd& y, const FitControl& control = {}) {
  if (bundle.family != Family::gaussian) throw DataError("fit_gaussian: design was built for a probit model");
  detail::check_fit_inputs(bundle, y, control);
  const double n = static_cast<double>(bundle.n());

  VariationalFit fit;
  fit.family = Family::gaussian;
  fit.response = y;
  fit.theta_response = y;
  fit.shape_sigma2 = bundle.hyper.a_e + 0.5 * n;
  fit.b_sigma2 = control.b_init;
  fit.b_penalty.assign(detail::count_penalized(bundle), control.b_init);

  const Eigen::MatrixXd ctc = bundle.C.transpose() * bundle.C;
  const Eigen::VectorXd cty = bundle.C.transpose() * y;

  for (int iter = 1; iter <= control.max_iter; ++iter) {
    const double tau = fit.shape_sigma2 / fit.b_sigma2;
    fit.theta_tau = tau;
    const Eigen::MatrixXd d = detail::prior_precision(bundle, fit.b_penalty);
    fit.sigma_theta = detail::invert_precision(tau * ctc + d, bundle);
    fit.mu_theta = tau * (fit.sigma_theta * cty);

    const double rss = (y - bundle.C * fit.mu_theta).squaredNorm();
    fit.b_sigma2 = bundle.hyper.b_e + 0.5 * (rss + ctc.cwiseProduct(fit.sigma_theta).sum());
    detail::update_penalty_scales(bundle, fit);

    fit.elbo_trace.push_back(elbo_gaussian(bundle, fit));
    fit.iterations = iter;
    if (control.on_iteration) control.on_iteration(iter, fit);
    if (iter > 1 && std::abs(fit.elbo_trace[iter - 1] - fit.elbo_trace[iter - 2]) < control.tol) {
      fit.converged = true;
      break;
    }
  }
  if (!fit.converged) fit.diagnostic = "ELBO change still above tol after " + std::to_string(control.max_iter) + " sweeps";
  return fit;
}

inline VariationalFit fit_probit(const DesignBundle& bundle, const Eigen::VectorXd& y, const FitControl& control = {}) {
  if (bundle.family != Family::probit) throw DataError("fit_probit: design was built for a Gaussian model");
  detail::check_fit_inputs(bundle, y, control);
  Eigen::Index n1 = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) != 0.0 && y(i) != 1.0) throw DataError("fit_probit: response must be 0/1, row " + std::to_string(i + 1));
    n1 += y(i) == 1.0 ? 1 : 0;
  }
  if (n1 == 0 || n1 == y.size()) throw DataError("fit_probit: response needs at least one 0 and one 1");

  VariationalFit fit;
  fit.family = Family::probit;
  fit.response = y;
  fit.shape_sigma2 = 0.0;
  fit.b_sigma2 = 1.0;
  fit.b_penalty.assign(detail::count_penalized(bundle), control.b_init);
  fit.mu_ystar = Eigen::VectorXd::Zero(y.size());

  const Eigen::MatrixXd ctc = bundle.C.transpose() * bundle.C;

  for (int iter = 1; iter <= control.max_iter; ++iter) {
    const Eigen::MatrixXd d = detail::prior_precision(bundle, fit.b_penalty);
    fit.sigma_theta = detail::invert_precision(ctc + d, bundle);
    fit.theta_response = fit.mu_ystar;
    fit.mu_theta = fit.sigma_theta * (bundle.C.transpose() * fit.theta_response);

    const Eigen::VectorXd eta = bundle.C * fit.mu_theta;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      fit.mu_ystar(i) = y(i) == 1.0 ? eta(i) + inverse_mills(eta(i), MillsTail::upper)
                                    : eta(i) - inverse_mills(eta(i), MillsTail::lower);
    }
    detail::update_penalty_scales(bundle, fit);

    fit.elbo_trace.push_back(elbo_probit(bundle, y, fit));
    fit.iterations = iter;
    if (control.on_iteration) control.on_iteration(iter, fit);
    if (iter > 1 && std::abs(fit.elbo_trace[iter - 1] - fit.elbo_trace[iter - 2]) < control.tol) {
      fit.converged = true;
      break;
    }
  }
  if (!fit.converged) fit.diagnostic = "ELBO change still above tol after " + std::to_string(control.max_iter) + " sweeps";

  // A linear predictor that puts every observation on its own side of zero
  // has no finite maximum; the sweep only stops because the steps shrink.
  const Eigen::VectorXd eta = bundle.C * fit.mu_theta;
  bool separated = true;
  for (Eigen::Index i = 0; i < eta.size() && separated; ++i)
    separated = (y(i) == 1.0) ? eta(i) > 0.0 : eta(i) < 0.0;
  if (separated) {
    fit.converged = false;
    fit.diagnostic = "complete separation: the fitted linear predictor classifies every observation";
  }
  return fit;
}

inline VariationalFit fit(const DesignBundle& bundle, const Eigen::VectorXd& y, const FitControl& control = {}) {
  return bundle.family == Family::gaussian ? fit_gaussian(bundle, y, control) : fit_probit(bundle, y, control);
}

struct CurveEstimate {
  std::vector<double> grid;
  Eigen::VectorXd estimate;
  Eigen::VectorXd sd;
};

inline CurveEstimate extract_curve(const VariationalFit& fit, const DesignBundle& bundle, const std::string& term,
                                   std::span<const double> grid) {
  const TermBlock& b = bundle.block(term);
  if (!b.penalized()) throw DataError("extract_curve: term '" + term + "' is not a smooth or functional term");
  const Eigen::MatrixXd rows = b.curve_rows(grid);
  const auto sig = fit.sigma_theta.block(b.start, b.start, b.width, b.width);
  CurveEstimate out;
  out.grid.assign(grid.begin(), grid.end());
  out.estimate = rows * fit.mu_theta.segment(b.start, b.width);
  out.sd = ((rows * sig).cwiseProduct(rows)).rowwise().sum().cwiseMax(0.0).cwiseSqrt();
  return out;
}

// Equally spaced grid over a term's natural range: the observed covariate
// range for smooths, the covariate grid span for functional terms.
inline std::vector<double> default_curve_grid(const TermBlock& b, int points = 201) {
  const double lo = b.kind == TermKind::functional ? b.grid.front() : b.observed_lo;
  const double hi = b.kind == TermKind::functional ? b.grid.back() : b.observed_hi;
  std::vector<double> g(static_cast<std::size_t>(points));
  for (int j = 0; j < points; ++j) g[j] = lo + (hi - lo) * j / (points - 1.0);
  g.back() = hi;
  return g;
}

}  // namespace vamzls
