#pragma once

// Global test of one smoothed or functional term of a converged fit.
//
// The fitted curve is a linear smoother of the working response r:
//   curve(x) = c(x)' r,   c(x) = tau * C * Sigma[:, block] * row(x)'
// and the statistic is G = r' U r with U = int c(x) c(x)' dx. Its null
// distribution is moment-matched to kappa * chi2(nu).

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vamzls/basis.hpp"
#include "vamzls/cavi.hpp"
#include "vamzls/design.hpp"
#include "vamzls/errors.hpp"
#include "vamzls/numerics.hpp"

namespace vamzls {

enum class CVectorForm {
  full_rows,           // all rows of Sigma for the block: reconstruction identity is exact
  principal_submatrix, // block-diagonal part only; ignores cross-covariance with other terms
};

struct ZlsOptions {
  std::vector<double> eval_grid;        // empty: default_eval_grid(term)
  std::optional<Eigen::MatrixXd> v_cov; // empty: sigma_hat^2 I (Gaussian) or I (probit)
  CVectorForm form = CVectorForm::full_rows;
};

struct ZlsResult {
  std::string term;
  double statistic = 0.0;
  double kappa = 1.0;
  double nu = 1.0;
  double p_value = 1.0;
  double e_mean = 0.0;
  double psi_var = 0.0;
  int grid_size = 0;
};

namespace detail {

inline const TermBlock& testable_block(const VariationalFit& fit, const DesignBundle& bundle, const std::string& term) {
  const TermBlock& b = bundle.block(term);
  if (!b.penalized()) throw DataError("term '" + term + "' is not a smooth or functional term");
  if (!fit.converged)
    throw NumericalError("refusing to test term '" + term + "' on an unconverged fit" +
                         (fit.diagnostic.empty() ? std::string() : ": " + fit.diagnostic));
  if (fit.mu_theta.size() != bundle.p_total()) throw DataError("fit and design dimensions disagree");
  return b;
}

// n x width map A with c(x) = A row(x)'.
inline Eigen::MatrixXd smoother_map(const VariationalFit& fit, const DesignBundle& bundle, const TermBlock& b,
                                    CVectorForm form) {
  if (form == CVectorForm::full_rows)
    return fit.tau() * (bundle.C * fit.sigma_theta.middleCols(b.start, b.width));
  return fit.tau() *
         (bundle.C.middleCols(b.start, b.width) * fit.sigma_theta.block(b.start, b.start, b.width, b.width));
}

inline void check_eval_grid(std::span<const double> grid) {
  if (grid.size() < 2) throw DomainError("evaluation grid needs at least two points");
  if (!std::is_sorted(grid.begin(), grid.end())) throw DomainError("evaluation grid must be sorted");
}

}  // namespace detail

// 201 equally spaced points over the observed covariate range (smooth) or the
// functional grid itself.
inline std::vector<double> default_eval_grid(const TermBlock& b) {
  if (b.kind == TermKind::functional) return b.grid;
  return default_curve_grid(b, 201);
}

inline Eigen::VectorXd c_vector(const VariationalFit& fit, const DesignBundle& bundle, const std::string& term,
                                double x, CVectorForm form = CVectorForm::full_rows) {
  const TermBlock& b = detail::testable_block(fit, bundle, term);
  return detail::smoother_map(fit, bundle, b, form) * b.curve_row(x).transpose();
}

inline Eigen::VectorXd c_vector_smooth(const VariationalFit& fit, const DesignBundle& bundle, const std::string& term,
                                       double z, CVectorForm form = CVectorForm::full_rows) {
  if (bundle.block(term).kind != TermKind::smooth) throw DataError("term '" + term + "' is not a smooth term");
  return c_vector(fit, bundle, term, z, form);
}

inline Eigen::VectorXd c_vector_functional(const VariationalFit& fit, const DesignBundle& bundle,
                                           const std::string& term, double t,
                                           CVectorForm form = CVectorForm::full_rows) {
  if (bundle.block(term).kind != TermKind::functional) throw DataError("term '" + term + "' is not a functional term");
  return c_vector(fit, bundle, term, t, form);
}

// U = sum_g w_g c(g) c(g)' with trapezoid weights w over eval_grid.
inline Eigen::MatrixXd build_U(const VariationalFit& fit, const DesignBundle& bundle, const std::string& term,
                               std::span<const double> eval_grid, CVectorForm form = CVectorForm::full_rows) {
  detail::check_eval_grid(eval_grid);
  const TermBlock& b = detail::testable_block(fit, bundle, term);
  const Eigen::MatrixXd a = detail::smoother_map(fit, bundle, b, form);
  const Eigen::VectorXd w = trapezoid_weights(eval_grid);
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(bundle.n(), bundle.n());
  for (std::size_t g = 0; g < eval_grid.size(); ++g) {
    const Eigen::VectorXd c = a * b.curve_row(eval_grid[g]).transpose();
    u.selfadjointView<Eigen::Lower>().rankUpdate(c, w(static_cast<Eigen::Index>(g)));
  }
  return u.selfadjointView<Eigen::Lower>();
}

inline ChiSqParams satterthwaite(double e, double psi) {
  if (!(e > 0.0) || !(psi > 0.0) || !std::isfinite(e) || !std::isfinite(psi))
    throw DegenerateTestError("Satterthwaite moments must be positive (e = " + std::to_string(e) +
                              ", psi = " + std::to_string(psi) + "); the tested block carries no signal");
  return {psi / (2.0 * e), 2.0 * e * e / psi};
}

inline ZlsResult zls_test(const VariationalFit& fit, const DesignBundle& bundle, const std::string& term,
                          const ZlsOptions& options = {}) {
  const TermBlock& b = detail::testable_block(fit, bundle, term);
  const std::vector<double> grid = options.eval_grid.empty() ? default_eval_grid(b) : options.eval_grid;
  detail::check_eval_grid(grid);
  const Eigen::VectorXd& r = fit.test_response();

  ZlsResult out;
  out.term = term;
  out.grid_size = static_cast<int>(grid.size());

  const Eigen::MatrixXd a = detail::smoother_map(fit, bundle, b, options.form);
  const Eigen::MatrixXd rows = b.curve_rows(grid);
  const Eigen::VectorXd w = trapezoid_weights(grid);

#ifndef NDEBUG
  if (options.form == CVectorForm::full_rows) {
    const Eigen::VectorXd direct = rows * fit.mu_theta.segment(b.start, b.width);
    const Eigen::VectorXd via_c = rows * (a.transpose() * r);
    const double scale = std::max(1.0, direct.cwiseAbs().maxCoeff());
    if ((direct - via_c).cwiseAbs().maxCoeff() > 1e-8 * scale)
      throw NumericalError("c-vector reconstruction identity failed for term '" + term + "'");
  }
#endif

  // Curve values at the grid are rows * h; G is their weighted sum of squares.
  const Eigen::VectorXd curve = rows * (a.transpose() * r);
  out.statistic = (w.array() * curve.array().square()).sum();

  if (options.v_cov) {
    const Eigen::MatrixXd& v = *options.v_cov;
    if (v.rows() != bundle.n() || v.cols() != bundle.n()) throw DataError("supplied covariance has the wrong size");
    const Eigen::MatrixXd uv = build_U(fit, bundle, term, grid, options.form) * v;
    out.e_mean = uv.trace();
    out.psi_var = 2.0 * uv.cwiseProduct(uv.transpose()).sum();
  } else {
    // U = A M A' with M = rows' diag(w) rows, V = s2 I.
    const double s2 = fit.sigma2_hat();
    const Eigen::MatrixXd m = rows.transpose() * w.asDiagonal() * rows;
    const Eigen::MatrixXd ms = m * (a.transpose() * a);
    out.e_mean = s2 * ms.trace();
    out.psi_var = 2.0 * s2 * s2 * ms.cwiseProduct(ms.transpose()).sum();
  }

  const ChiSqParams chi = satterthwaite(out.e_mean, out.psi_var);
  out.kappa = chi.kappa;
  out.nu = chi.nu;
  out.p_value = std::clamp(chisq_sf(std::max(0.0, out.statistic) / chi.kappa, chi.nu), 0.0, 1.0);
  return out;
}

}  // namespace vamzls
