#pragma once

// B-spline bases over scalar covariates and functional grids, and the
// penalty matrices that act as prior precision scales for their coefficients.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "vamzls/errors.hpp"

namespace vamzls {

class BSplineBasis {
 public:
  BSplineBasis() = default;

  BSplineBasis(int degree, std::vector<double> interior_knots, double lo, double hi)
      : degree_(degree), interior_(std::move(interior_knots)), lo_(lo), hi_(hi) {
    if (degree_ < 0) throw DomainError("BSplineBasis: negative degree");
    if (!(lo_ < hi_)) throw DegenerateCovariateError("BSplineBasis: empty range [lo, hi]");
    double prev = lo_;
    for (double k : interior_) {
      if (!(k > prev)) throw DomainError("BSplineBasis: knots must be strictly increasing inside (lo, hi)");
      prev = k;
    }
    if (!interior_.empty() && !(interior_.back() < hi_))
      throw DomainError("BSplineBasis: last interior knot must be below hi");
    knots_.assign(degree_ + 1, lo_);
    knots_.insert(knots_.end(), interior_.begin(), interior_.end());
    knots_.insert(knots_.end(), degree_ + 1, hi_);
  }

  int degree() const { return degree_; }
  int num_basis() const { return static_cast<int>(interior_.size()) + degree_ + 1; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  const std::vector<double>& interior_knots() const { return interior_; }
  const std::vector<double>& knot_vector() const { return knots_; }

  double clamp(double x) const { return std::clamp(x, lo_, hi_); }

  std::size_t out_of_range(std::span<const double> x) const {
    return static_cast<std::size_t>(
        std::count_if(x.begin(), x.end(), [&](double v) { return v < lo_ || v > hi_; }));
  }

  // Row of basis values (or derivative values) at x, clamped to [lo, hi].
  Eigen::RowVectorXd row(double x, int deriv = 0) const {
    Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(num_basis());
    fill_row(clamp(x), deriv, out);
    return out;
  }

  Eigen::MatrixXd evaluate(std::span<const double> x, int deriv = 0) const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(x.size()), num_basis());
    Eigen::RowVectorXd r(num_basis());
    for (std::size_t i = 0; i < x.size(); ++i) {
      r.setZero();
      fill_row(clamp(x[i]), deriv, r);
      out.row(static_cast<Eigen::Index>(i)) = r;
    }
    return out;
  }

 private:
  int find_span(double x) const {
    const int n = num_basis() - 1;
    if (x >= knots_[n + 1]) return n;
    // first knot strictly greater than x, minus one
    auto it = std::upper_bound(knots_.begin() + degree_, knots_.begin() + n + 1, x);
    return static_cast<int>(it - knots_.begin()) - 1;
  }

  // Nonzero basis functions and derivatives at x (Piegl & Tiller, A2.3).
  void fill_row(double x, int deriv, Eigen::RowVectorXd& out) const {
    if (deriv < 0) throw DomainError("BSplineBasis: negative derivative order");
    const int p = degree_;
    if (deriv > p) return;  // identically zero
    const int span = find_span(x);

    Eigen::MatrixXd ndu(p + 1, p + 1);
    std::vector<double> left(p + 1), right(p + 1);
    ndu(0, 0) = 1.0;
    for (int j = 1; j <= p; ++j) {
      left[j] = x - knots_[span + 1 - j];
      right[j] = knots_[span + j] - x;
      double saved = 0.0;
      for (int r = 0; r < j; ++r) {
        ndu(j, r) = right[r + 1] + left[j - r];
        const double temp = ndu(r, j - 1) / ndu(j, r);
        ndu(r, j) = saved + right[r + 1] * temp;
        saved = left[j - r] * temp;
      }
      ndu(j, j) = saved;
    }

    if (deriv == 0) {
      for (int j = 0; j <= p; ++j) out(span - p + j) = ndu(j, p);
      return;
    }

    Eigen::MatrixXd a(2, p + 1);
    for (int r = 0; r <= p; ++r) {
      int s1 = 0, s2 = 1;
      a.setZero();
      a(0, 0) = 1.0;
      double d = 0.0;
      for (int k = 1; k <= deriv; ++k) {
        d = 0.0;
        const int rk = r - k;
        const int pk = p - k;
        if (r >= k) {
          a(s2, 0) = a(s1, 0) / ndu(pk + 1, rk);
          d = a(s2, 0) * ndu(rk, pk);
        }
        const int j1 = (rk >= -1) ? 1 : -rk;
        const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
        for (int j = j1; j <= j2; ++j) {
          a(s2, j) = (a(s1, j) - a(s1, j - 1)) / ndu(pk + 1, rk + j);
          d += a(s2, j) * ndu(rk + j, pk);
        }
        if (r <= pk) {
          a(s2, k) = -a(s1, k - 1) / ndu(pk + 1, r);
          d += a(s2, k) * ndu(r, pk);
        }
        std::swap(s1, s2);
      }
      double factor = 1.0;
      for (int k = p; k > p - deriv; --k) factor *= k;
      out(span - p + r) = d * factor;
    }
  }

  int degree_ = 3;
  std::vector<double> interior_;
  double lo_ = 0.0;
  double hi_ = 1.0;
  std::vector<double> knots_;
};

namespace detail {

// Type-7 (linear interpolation) sample quantile of sorted data.
inline double sorted_quantile(const std::vector<double>& sorted, double prob) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline void check_basis_size(int num_basis, int degree) {
  if (degree < 0) throw DomainError("basis degree must be nonnegative");
  if (num_basis <= degree)
    throw DomainError("number of basis functions (" + std::to_string(num_basis) +
                      ") must exceed the degree (" + std::to_string(degree) + ")");
}

}  // namespace detail

// Interior knots equally spaced over [lo, hi]; used for functional grids.
inline BSplineBasis make_uniform_basis(double lo, double hi, int num_basis, int degree = 3) {
  detail::check_basis_size(num_basis, degree);
  const int n_interior = num_basis - degree - 1;
  std::vector<double> knots(n_interior);
  for (int j = 0; j < n_interior; ++j) knots[j] = lo + (hi - lo) * (j + 1.0) / (n_interior + 1.0);
  return BSplineBasis(degree, std::move(knots), lo, hi);
}

// Interior knots at empirical quantiles of x, boundary knots at min/max.
// Heavily tied covariates whose quantiles collide fall back to equal spacing.
inline BSplineBasis make_basis(std::span<const double> x, int num_basis, int degree = 3) {
  detail::check_basis_size(num_basis, degree);
  std::vector<double> sorted(x.begin(), x.end());
  if (std::any_of(sorted.begin(), sorted.end(), [](double v) { return !std::isfinite(v); }))
    throw DataError("make_basis: covariate contains non-finite values");
  std::sort(sorted.begin(), sorted.end());
  if (sorted.size() < 2 || !(sorted.front() < sorted.back()))
    throw DegenerateCovariateError("make_basis: covariate needs at least two distinct values");
  const double lo = sorted.front();
  const double hi = sorted.back();
  const int n_interior = num_basis - degree - 1;
  std::vector<double> knots(n_interior);
  for (int j = 0; j < n_interior; ++j)
    knots[j] = detail::sorted_quantile(sorted, (j + 1.0) / (n_interior + 1.0));
  bool strictly_inside = true;
  double prev = lo;
  for (double k : knots) {
    if (!(k > prev)) strictly_inside = false;
    prev = k;
  }
  if (!knots.empty() && !(knots.back() < hi)) strictly_inside = false;
  if (!strictly_inside) return make_uniform_basis(lo, hi, num_basis, degree);
  return BSplineBasis(degree, std::move(knots), lo, hi);
}

enum class PenaltyKind { difference, derivative, derivative_mixture };

struct PenaltyMatrix {
  Eigen::MatrixXd matrix;
  PenaltyKind kind = PenaltyKind::difference;
  int order = 2;        // difference or derivative order; unused for mixtures
  double xi_pen = 0.0;  // mixture weight on the zeroth-derivative Gram

  Eigen::Index size() const { return matrix.rows(); }
};

// D'D for the order-th forward difference operator D.
inline PenaltyMatrix difference_penalty(int num_basis, int order) {
  if (order < 1) throw DomainError("difference_penalty: order must be positive");
  if (order >= num_basis)
    throw DomainError("difference_penalty: order " + std::to_string(order) +
                      " leaves no differences on " + std::to_string(num_basis) + " coefficients");
  Eigen::MatrixXd d = Eigen::MatrixXd::Identity(num_basis, num_basis);
  for (int k = 0; k < order; ++k) {
    const Eigen::Index r = d.rows() - 1;
    d = (d.bottomRows(r) - d.topRows(r)).eval();
  }
  return {d.transpose() * d, PenaltyKind::difference, order, 0.0};
}

// Trapezoid weights for a sorted grid.
inline Eigen::VectorXd trapezoid_weights(std::span<const double> grid) {
  const auto n = static_cast<Eigen::Index>(grid.size());
  if (n < 2) throw DomainError("trapezoid_weights: grid needs at least two points");
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  for (Eigen::Index j = 0; j + 1 < n; ++j) {
    const double h = grid[j + 1] - grid[j];
    if (h < 0.0) throw DomainError("trapezoid_weights: grid must be sorted");
    w(j) += 0.5 * h;
    w(j + 1) += 0.5 * h;
  }
  return w;
}

// Gram matrix of the deriv_order-th derivatives, trapezoid rule on grid.
inline PenaltyMatrix derivative_penalty(const BSplineBasis& basis, std::span<const double> grid, int deriv_order) {
  if (deriv_order != 0 && deriv_order != 2)
    throw DomainError("derivative_penalty: derivative order must be 0 or 2");
  if (deriv_order > basis.degree())
    throw DomainError("derivative_penalty: basis degree too low for the requested derivative");
  const Eigen::VectorXd w = trapezoid_weights(grid);
  const Eigen::MatrixXd b = basis.evaluate(grid, deriv_order);
  Eigen::MatrixXd gram = b.transpose() * w.asDiagonal() * b;
  gram = 0.5 * (gram + gram.transpose()).eval();
  return {gram, PenaltyKind::derivative, deriv_order, 0.0};
}

// xi * delta0 + (1 - xi) * delta2
inline PenaltyMatrix functional_penalty(const Eigen::MatrixXd& delta0, const Eigen::MatrixXd& delta2, double xi_pen) {
  if (!(xi_pen >= 0.0 && xi_pen <= 1.0))
    throw DomainError("functional_penalty: mixture weight must lie in [0, 1]");
  if (delta0.rows() != delta2.rows() || delta0.cols() != delta2.cols())
    throw DomainError("functional_penalty: dimension mismatch");
  Eigen::MatrixXd mix = xi_pen * delta0 + (1.0 - xi_pen) * delta2;
  mix = 0.5 * (mix + mix.transpose()).eval();
  return {mix, PenaltyKind::derivative_mixture, 0, xi_pen};
}

}  // namespace vamzls
