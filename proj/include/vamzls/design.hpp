#pragma once

// Assembly of the stacked design matrix C = [1 | X | Xi_1 .. Xi_M | W_1 Theta_1 .. W_F Theta_F]
// together with the per-term bookkeeping the engines and the test need.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vamzls/basis.hpp"
#include "vamzls/errors.hpp"

namespace vamzls {

enum class Family { gaussian, probit };

inline const char* to_string(Family f) { return f == Family::gaussian ? "gaussian" : "probit"; }

struct SmoothTerm {
  std::string name;
  int num_basis = 8;
  int diff_order = 2;
  double a_omega = 0.01;
  double b_omega = 0.01;
};

struct FunctionalTerm {
  std::string name;
  int num_basis = 12;
  std::vector<double> grid;  // sorted, one point per column of the covariate matrix
  double a_eta = 0.01;
  double b_eta = 0.01;
};

struct HyperParams {
  double sigma_a2 = 1e6;  // intercept prior variance
  double sigma_b2 = 1e6;  // scalar-coefficient prior variance
  double a_e = 0.01;
  double b_e = 0.01;
  double xi_pen = 0.5;  // weight on the zeroth-derivative Gram in functional penalties
};

struct ModelSpec {
  Family family = Family::gaussian;
  std::vector<std::string> scalar_terms;
  std::vector<SmoothTerm> smooth_terms;
  std::vector<FunctionalTerm> functional_terms;
  HyperParams hyper;
  int degree = 3;
};

// Raw covariates in the order the spec lists its terms.
struct ModelData {
  Eigen::MatrixXd scalar;                  // n x p
  std::vector<Eigen::VectorXd> smooth;     // one n-vector per smooth term
  std::vector<Eigen::MatrixXd> functional; // one n x T matrix per functional term
};

enum class TermKind { intercept, scalar, smooth, functional };

inline const char* to_string(TermKind k) {
  switch (k) {
    case TermKind::intercept: return "intercept";
    case TermKind::scalar: return "scalar";
    case TermKind::smooth: return "smooth";
    case TermKind::functional: return "functional";
  }
  return "?";
}

struct TermBlock {
  std::string name;
  TermKind kind = TermKind::scalar;
  Eigen::Index start = 0;
  Eigen::Index width = 1;

  // Penalized (smooth / functional) terms only.
  std::optional<BSplineBasis> basis;
  PenaltyMatrix penalty;
  double a_prior = 0.01;  // inverse-gamma shape of omega / eta
  double b_prior = 0.01;  // inverse-gamma scale of omega / eta
  Eigen::RowVectorXd center;        // column means removed from C (zero when uncentered)
  Eigen::VectorXd quad_weights;     // functional: trapezoid weights over the grid
  std::vector<double> grid;         // functional: evaluation grid of the covariate
  double observed_lo = 0.0;         // smooth: covariate range in the data
  double observed_hi = 0.0;

  bool penalized() const { return kind == TermKind::smooth || kind == TermKind::functional; }

  // Basis row r(x) such that the fitted curve at x is r(x) * mu_block.
  // Smooth curves are reported as deviations, so the stored centering applies;
  // a functional coefficient curve is gamma(t) = Theta(t) lambda.
  Eigen::RowVectorXd curve_row(double x) const {
    if (!basis) throw DomainError("term '" + name + "' has no basis");
    Eigen::RowVectorXd r = basis->row(x);
    if (kind == TermKind::smooth && center.size() == r.size()) r -= center;
    return r;
  }

  Eigen::MatrixXd curve_rows(std::span<const double> xs) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(xs.size()), width);
    for (std::size_t i = 0; i < xs.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = curve_row(xs[i]);
    return out;
  }
};

struct DesignBundle {
  Family family = Family::gaussian;
  HyperParams hyper;
  Eigen::MatrixXd C;
  std::vector<TermBlock> blocks;
  bool centered = false;

  Eigen::Index n() const { return C.rows(); }
  Eigen::Index p_total() const { return C.cols(); }

  const TermBlock& block(const std::string& name) const {
    for (const auto& b : blocks)
      if (b.name == name) return b;
    throw DataError("unknown term '" + name + "'");
  }

  bool has_term(const std::string& name) const {
    for (const auto& b : blocks)
      if (b.name == name) return true;
    return false;
  }
};

namespace detail {

inline void require_finite(const Eigen::MatrixXd& m, const std::string& what) {
  if (!m.allFinite()) throw DataError(what + " contains NaN or infinite values");
}

}  // namespace detail

inline DesignBundle assemble(const ModelSpec& spec, const ModelData& data) {
  const Eigen::Index n = [&] {
    if (data.scalar.rows() > 0 || data.scalar.cols() > 0) return data.scalar.rows();
    if (!data.smooth.empty()) return data.smooth.front().size();
    if (!data.functional.empty()) return data.functional.front().rows();
    return Eigen::Index{0};
  }();
  if (n == 0) throw DataError("assemble: no observations (pass a 0-column scalar matrix with n rows for intercept-only models)");

  if (data.scalar.cols() != static_cast<Eigen::Index>(spec.scalar_terms.size()))
    throw DataError("assemble: scalar data has " + std::to_string(data.scalar.cols()) + " columns, model lists " +
                    std::to_string(spec.scalar_terms.size()));
  if (data.scalar.cols() > 0 && data.scalar.rows() != n) throw DataError("assemble: scalar data row count mismatch");
  if (data.smooth.size() != spec.smooth_terms.size()) throw DataError("assemble: smooth data count mismatch");
  if (data.functional.size() != spec.functional_terms.size())
    throw DataError("assemble: functional data count mismatch");
  detail::require_finite(data.scalar, "scalar data");

  DesignBundle out;
  out.family = spec.family;
  out.hyper = spec.hyper;
  if (!(spec.hyper.sigma_a2 > 0 && spec.hyper.sigma_b2 > 0 && spec.hyper.a_e > 0 && spec.hyper.b_e > 0))
    throw DataError("assemble: prior variances and a_e, b_e must be positive");

  std::vector<Eigen::MatrixXd> pieces;
  Eigen::Index col = 0;
  auto push_block = [&](TermBlock b, Eigen::MatrixXd piece) {
    b.start = col;
    b.width = piece.cols();
    col += b.width;
    out.blocks.push_back(std::move(b));
    pieces.push_back(std::move(piece));
  };

  {
    TermBlock b;
    b.name = "(Intercept)";
    b.kind = TermKind::intercept;
    push_block(std::move(b), Eigen::MatrixXd::Ones(n, 1));
  }
  for (std::size_t j = 0; j < spec.scalar_terms.size(); ++j) {
    TermBlock b;
    b.name = spec.scalar_terms[j];
    b.kind = TermKind::scalar;
    push_block(std::move(b), data.scalar.col(static_cast<Eigen::Index>(j)));
  }
  for (std::size_t m = 0; m < spec.smooth_terms.size(); ++m) {
    const SmoothTerm& term = spec.smooth_terms[m];
    const Eigen::VectorXd& z = data.smooth[m];
    if (z.size() != n) throw DataError("assemble: smooth term '" + term.name + "' row count mismatch");
    detail::require_finite(z, "smooth term '" + term.name + "'");
    if (!(term.a_omega > 0 && term.b_omega > 0))
      throw DataError("assemble: smooth term '" + term.name + "' needs positive a_omega, b_omega");
    const std::span<const double> zs(z.data(), static_cast<std::size_t>(z.size()));
    if (!(z.minCoeff() < z.maxCoeff()))
      throw DegenerateCovariateError("smooth term '" + term.name + "' has a constant covariate");
    TermBlock b;
    b.name = term.name;
    b.kind = TermKind::smooth;
    b.basis = make_basis(zs, term.num_basis, spec.degree);
    b.penalty = difference_penalty(term.num_basis, term.diff_order);
    b.a_prior = term.a_omega;
    b.b_prior = term.b_omega;
    b.center = Eigen::RowVectorXd::Zero(term.num_basis);
    b.observed_lo = z.minCoeff();
    b.observed_hi = z.maxCoeff();
    Eigen::MatrixXd piece = b.basis->evaluate(zs);
    push_block(std::move(b), std::move(piece));
  }
  for (std::size_t f = 0; f < spec.functional_terms.size(); ++f) {
    const FunctionalTerm& term = spec.functional_terms[f];
    const Eigen::MatrixXd& w = data.functional[f];
    if (w.rows() != n) throw DataError("assemble: functional term '" + term.name + "' row count mismatch");
    if (w.cols() != static_cast<Eigen::Index>(term.grid.size()))
      throw DataError("assemble: functional term '" + term.name + "' has " + std::to_string(w.cols()) +
                      " columns but a grid of " + std::to_string(term.grid.size()) + " points");
    detail::require_finite(w, "functional term '" + term.name + "'");
    if (!(term.a_eta > 0 && term.b_eta > 0))
      throw DataError("assemble: functional term '" + term.name + "' needs positive a_eta, b_eta");
    if (!std::is_sorted(term.grid.begin(), term.grid.end()) || term.grid.size() < 2 ||
        !(term.grid.front() < term.grid.back()))
      throw DataError("assemble: functional term '" + term.name + "' needs a sorted grid of at least two points");
    TermBlock b;
    b.name = term.name;
    b.kind = TermKind::functional;
    b.grid = term.grid;
    b.basis = make_uniform_basis(term.grid.front(), term.grid.back(), term.num_basis, spec.degree);
    const Eigen::MatrixXd theta = b.basis->evaluate(term.grid);
    const auto delta0 = derivative_penalty(*b.basis, term.grid, 0);
    const auto delta2 = derivative_penalty(*b.basis, term.grid, 2);
    b.penalty = functional_penalty(delta0.matrix, delta2.matrix, spec.hyper.xi_pen);
    b.quad_weights = trapezoid_weights(term.grid);
    b.a_prior = term.a_eta;
    b.b_prior = term.b_eta;
    b.center = Eigen::RowVectorXd::Zero(term.num_basis);
    Eigen::MatrixXd piece = (w * b.quad_weights.asDiagonal()) * theta;
    push_block(std::move(b), std::move(piece));
  }

  out.C.resize(n, col);
  for (std::size_t k = 0; k < pieces.size(); ++k) out.C.middleCols(out.blocks[k].start, out.blocks[k].width) = pieces[k];
  return out;
}

// Mean-center every smooth and functional block; the removed means are kept
// on the block so curves and predictions stay consistent with C.
inline DesignBundle center_smooth_blocks(DesignBundle bundle) {
  if (bundle.centered) return bundle;
  for (auto& b : bundle.blocks) {
    if (!b.penalized()) continue;
    auto cols = bundle.C.middleCols(b.start, b.width);
    b.center = cols.colwise().mean();
    cols.rowwise() -= b.center;
  }
  bundle.centered = true;
  return bundle;
}

// assemble followed by centering: the configuration the engines expect.
inline DesignBundle build_design(const ModelSpec& spec, const ModelData& data) {
  return center_smooth_blocks(assemble(spec, data));
}

}  // namespace vamzls
