#pragma once

// Small randomized datasets shared by the unit tests.

#include <cstdint>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "vamzls/vamzls.hpp"

namespace fixtures {

struct Problem {
  vamzls::ModelSpec spec;
  vamzls::ModelData data;
  vamzls::DesignBundle bundle;
  Eigen::VectorXd y;
};

// Gaussian additive model with one scalar, `smooths` smooth terms and
// `functionals` functional terms; the signal strength varies with the seed.
inline Problem gaussian_problem(std::uint64_t seed, int n = 120, int smooths = 1, int functionals = 0,
                                vamzls::Family family = vamzls::Family::gaussian) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> norm(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Problem p;
  p.spec.family = family;
  p.spec.scalar_terms = {"x"};
  p.data.scalar.resize(n, 1);
  Eigen::VectorXd eta = Eigen::VectorXd::Constant(n, 0.3);
  const double amp = 0.5 + 1.5 * unif(rng);
  for (int i = 0; i < n; ++i) {
    p.data.scalar(i, 0) = norm(rng);
    eta(i) += 0.4 * p.data.scalar(i, 0);
  }
  for (int m = 0; m < smooths; ++m) {
    Eigen::VectorXd z(n);
    for (int i = 0; i < n; ++i) {
      z(i) = unif(rng) * 3.0 - 1.0;
      eta(i) += amp * std::sin(1.7 * z(i) + m);
    }
    p.spec.smooth_terms.push_back({.name = "s" + std::to_string(m + 1), .num_basis = 6 + 2 * (m % 2)});
    p.data.smooth.push_back(z);
  }
  for (int f = 0; f < functionals; ++f) {
    const auto grid = vamzls::unit_grid(40);
    const auto gamma = vamzls::gen_func_seasonal(grid);
    vamzls::Rng r2(seed * 7919 + f);
    Eigen::MatrixXd w = vamzls::gen_gp_ar1(n, std::vector<double>(grid.size(), 0.0), 0.5, r2);
    const Eigen::VectorXd q = vamzls::trapezoid_weights(grid);
    const Eigen::Map<const Eigen::VectorXd> g(gamma.data(), static_cast<Eigen::Index>(gamma.size()));
    eta += 4.0 * amp * (w * q.cwiseProduct(g));
    p.spec.functional_terms.push_back({.name = "w" + std::to_string(f + 1), .num_basis = 9, .grid = grid});
    p.data.functional.push_back(w);
  }
  p.y.resize(n);
  for (int i = 0; i < n; ++i) {
    const double latent = eta(i) + norm(rng);
    p.y(i) = family == vamzls::Family::gaussian ? latent : (latent >= 0.0 ? 1.0 : 0.0);
  }
  p.bundle = vamzls::build_design(p.spec, p.data);
  return p;
}

inline Problem probit_problem(std::uint64_t seed, int n = 150, int smooths = 1, int functionals = 0) {
  return gaussian_problem(seed, n, smooths, functionals, vamzls::Family::probit);
}

}  // namespace fixtures
