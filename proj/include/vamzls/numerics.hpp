#pragma once

// Special functions used by the fitting engines and the global test.

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "vamzls/errors.hpp"

namespace vamzls {

// Parameters of a scaled chi-square kappa * chi2(nu).
struct ChiSqParams {
  double kappa = 1.0;
  double nu = 1.0;
};

inline double log_gamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x))
    throw DomainError("log_gamma: argument must be positive and finite, got " + std::to_string(x));
  return std::lgamma(x);
}

inline double std_normal_pdf(double x) {
  constexpr double inv_sqrt_2pi = 0.3989422804014326779399460599343818684759;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

inline double std_normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

// exp(u^2) * erfc(u). Continued fraction for large u where erfc underflows.
inline double erfcx(double u) {
  if (u < 0.0) return 2.0 * std::exp(u * u) - erfcx(-u);
  if (u < 5.0) return std::exp(u * u) * std::erfc(u);
  double f = u;
  for (int k = 60; k >= 1; --k) f = u + 0.5 * k / f;
  return 1.0 / (std::sqrt(std::numbers::pi) * f);
}

// log Phi(x) without underflow in the far left tail.
inline double std_normal_logcdf(double x) {
  if (x < -5.0) {
    const double u = -x / std::numbers::sqrt2;
    return std::log(0.5 * erfcx(u)) - 0.5 * x * x;
  }
  return std::log(std_normal_cdf(x));
}

enum class MillsTail {
  upper,  // phi(x) / Phi(x): mean shift of N(x,1) truncated to [0, inf)
  lower,  // phi(x) / (1 - Phi(x)): mean shift of N(x,1) truncated to (-inf, 0)
};

inline double inverse_mills(double x, MillsTail tail) {
  if (tail == MillsTail::lower) x = -x;
  if (x >= 0.0) return std_normal_pdf(x) / std_normal_cdf(x);
  constexpr double sqrt_2_over_pi = 0.7978845608028653558798921198687637369517;
  return sqrt_2_over_pi / erfcx(-x / std::numbers::sqrt2);
}

namespace detail {

// Lower regularized gamma P(a, x) by its power series; valid for x < a + 1.
inline double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  double ap = a;
  for (int i = 0; i < 100000; ++i) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-17) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper regularized gamma Q(a, x) by modified Lentz continued fraction; x >= a + 1.
inline double gamma_q_contfrac(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 100000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-17) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace detail

// Q(a, x) = Gamma(a, x) / Gamma(a).
inline double regularized_gamma_q(double a, double x) {
  if (!(a > 0.0)) throw DomainError("regularized_gamma_q: shape must be positive");
  if (x < 0.0 || std::isnan(x)) throw DomainError("regularized_gamma_q: x must be nonnegative");
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
  return detail::gamma_q_contfrac(a, x);
}

// Pr[chi2(nu) > x] for real nu > 0.
inline double chisq_sf(double x, double nu) {
  if (!(nu > 0.0) || !std::isfinite(nu))
    throw DomainError("chisq_sf: degrees of freedom must be positive, got " + std::to_string(nu));
  if (x < 0.0 || std::isnan(x))
    throw DomainError("chisq_sf: statistic must be nonnegative, got " + std::to_string(x));
  return regularized_gamma_q(0.5 * nu, 0.5 * x);
}

}  // namespace vamzls
