#pragma once

// Data-generating processes of the empirical study and the Monte-Carlo runner
// that turns one scenario into a rejection rate.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "vamzls/cavi.hpp"
#include "vamzls/design.hpp"
#include "vamzls/errors.hpp"
#include "vamzls/numerics.hpp"
#include "vamzls/zls.hpp"

namespace vamzls {

enum class SimEffect { smooth_phi, smooth_gamma, func_twopeak, func_seasonal };
enum class EffectKind { smooth, functional };

inline EffectKind kind_of(SimEffect e) {
  return (e == SimEffect::smooth_phi || e == SimEffect::smooth_gamma) ? EffectKind::smooth : EffectKind::functional;
}

inline const char* to_string(SimEffect e) {
  switch (e) {
    case SimEffect::smooth_phi: return "smooth_phi";
    case SimEffect::smooth_gamma: return "smooth_gamma";
    case SimEffect::func_twopeak: return "func_twopeak";
    case SimEffect::func_seasonal: return "func_seasonal";
  }
  return "?";
}

inline SimEffect parse_effect(const std::string& s) {
  if (s == "smooth_phi") return SimEffect::smooth_phi;
  if (s == "smooth_gamma") return SimEffect::smooth_gamma;
  if (s == "func_twopeak") return SimEffect::func_twopeak;
  if (s == "func_seasonal") return SimEffect::func_seasonal;
  throw DataError("unknown effect '" + s + "' (expected smooth_phi, smooth_gamma, func_twopeak, func_seasonal)");
}

inline Family parse_family(const std::string& s) {
  if (s == "gaussian") return Family::gaussian;
  if (s == "probit" || s == "binary") return Family::probit;
  throw DataError("unknown family '" + s + "' (expected gaussian or probit)");
}

// ---- curves ---------------------------------------------------------------

// s(z) = -Phi((z - 0.5) / 0.5): decreasing sigmoid.
inline std::vector<double> gen_smooth_phi(std::span<const double> z) {
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = -std_normal_cdf((z[i] - 0.5) / 0.5);
  return out;
}

// Gamma(2, rate 2) density: s(z) = 4 z exp(-2z).
inline std::vector<double> gen_smooth_gamma(std::span<const double> z) {
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = 4.0 * z[i] * std::exp(-2.0 * z[i]);
  return out;
}

inline std::vector<double> gen_func_twopeak(std::span<const double> grid) {
  const double amp = std::sqrt(100.0 / (2.0 * std::numbers::pi));
  std::vector<double> out(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const double t = grid[j];
    out[j] = 0.25 * amp * std::exp(-50.0 * (t - 0.25) * (t - 0.25)) +
             0.125 * amp * std::exp(-50.0 * (t - 0.75) * (t - 0.75));
  }
  return out;
}

inline std::vector<double> gen_func_seasonal(std::span<const double> grid) {
  std::vector<double> out(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const double t = grid[j];
    out[j] = std::sin(std::numbers::pi * (4.0 * t - 1.0)) * (t + 1222.0 / 10000.0);
  }
  return out;
}

inline std::vector<double> unit_grid(int points) {
  std::vector<double> g(static_cast<std::size_t>(points));
  for (int j = 0; j < points; ++j) g[j] = static_cast<double>(j) / (points - 1);
  return g;
}

// ---- random streams -------------------------------------------------------

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Independent stream for replication `rep` of a run seeded with `seed`.
inline Rng substream(std::uint64_t seed, std::uint64_t rep) {
  return Rng(splitmix64(splitmix64(seed) ^ splitmix64(rep + 0x632BE59BD9B4E019ull)));
}

// Rows are independent Gaussian curves with mean `center` and
// Cov(w(t_j), w(t_k)) = rho^|j - k|.
inline Eigen::MatrixXd gen_gp_ar1(int n, std::span<const double> center, double rho, Rng& rng) {
  if (!(std::abs(rho) < 1.0)) throw DomainError("gen_gp_ar1: |rho| must be below 1");
  const auto t = static_cast<Eigen::Index>(center.size());
  std::normal_distribution<double> norm(0.0, 1.0);
  const double innov = std::sqrt(1.0 - rho * rho);
  Eigen::MatrixXd w(n, t);
  for (int i = 0; i < n; ++i) {
    double dev = norm(rng);
    for (Eigen::Index j = 0; j < t; ++j) {
      if (j > 0) dev = rho * dev + innov * norm(rng);
      w(i, j) = center[static_cast<std::size_t>(j)] + dev;
    }
  }
  return w;
}

inline Eigen::MatrixXd gen_gp_ar1(int n, std::span<const double> grid, std::span<const double> center, double rho,
                                  std::uint64_t seed) {
  if (grid.size() != center.size()) throw DomainError("gen_gp_ar1: grid and center lengths differ");
  Rng rng(splitmix64(seed));
  return gen_gp_ar1(n, center, rho, rng);
}

// ---- scenarios --------------------------------------------------------------

struct SimScenario {
  Family family = Family::gaussian;
  SimEffect effect = SimEffect::smooth_phi;
  int n = 200;
  int t_points = 50;       // functional effects only
  double xi_scale = 0.0;   // 0 is the null
  int knots = 0;           // 0: knot_default
  int replications = 1000;
  std::uint64_t seed = 1;
  double alpha_level = 0.05;
  double rho = 0.5;
};

struct SimReport {
  SimScenario scenario;
  int knots_used = 0;
  double rejection_rate = 0.0;
  double mc_stderr = 0.0;
  int rejections = 0;
  int completed = 0;
  int failures = 0;
  bool flagged = false;  // more than 5% of replications failed
  std::vector<double> per_rep_pvalues;  // NaN where the replication failed
};

// Basis sizes that gave near-nominal type I error in the study design.
inline int knot_default(Family family, EffectKind kind, int n, int t_points) {
  if (kind == EffectKind::smooth) {
    if (family == Family::gaussian) return 8;
    return n >= 100 ? 6 : 4;
  }
  if (family == Family::gaussian) return 12;
  if (n >= 100) return 9;
  return t_points <= 50 ? 6 : 7;
}

inline void validate(const SimScenario& sc) {
  if (sc.n < 5) throw DataError("scenario: N must be at least 5");
  if (kind_of(sc.effect) == EffectKind::functional && sc.t_points < 4)
    throw DataError("scenario: functional effects need T >= 4");
  if (sc.replications < 1) throw DataError("scenario: replications must be positive");
  if (!(sc.alpha_level > 0.0 && sc.alpha_level < 1.0)) throw DataError("scenario: alpha must lie in (0, 1)");
  if (sc.xi_scale < 0.0) throw DataError("scenario: xi must be nonnegative");
  if (sc.knots < 0) throw DataError("scenario: knots must be nonnegative");
  if (!(std::abs(sc.rho) < 1.0)) throw DataError("scenario: |rho| must be below 1");
}

struct SimDataset {
  ModelSpec spec;
  ModelData data;
  Eigen::VectorXd y;
};

// One replication's data and the single-term model fitted to it.
inline SimDataset generate_dataset(const SimScenario& sc, int knots, Rng& rng) {
  std::normal_distribution<double> norm(0.0, 1.0);
  SimDataset ds;
  ds.spec.family = sc.family;
  ds.data.scalar = Eigen::MatrixXd(sc.n, 0);
  Eigen::VectorXd mean(sc.n);

  if (kind_of(sc.effect) == EffectKind::smooth) {
    Eigen::VectorXd z(sc.n);
    for (int i = 0; i < sc.n; ++i) {
      const double g = norm(rng);
      z(i) = sc.effect == SimEffect::smooth_phi ? g : g * g;  // N(0,1) or chi2_1
    }
    const std::span<const double> zs(z.data(), static_cast<std::size_t>(sc.n));
    const auto s = sc.effect == SimEffect::smooth_phi ? gen_smooth_phi(zs) : gen_smooth_gamma(zs);
    for (int i = 0; i < sc.n; ++i) mean(i) = sc.xi_scale * s[i];
    ds.spec.smooth_terms.push_back({.name = "z", .num_basis = knots});
    ds.data.smooth.push_back(std::move(z));
  } else {
    const auto grid = unit_grid(sc.t_points);
    const auto gamma = sc.effect == SimEffect::func_twopeak ? gen_func_twopeak(grid) : gen_func_seasonal(grid);
    Eigen::MatrixXd w = gen_gp_ar1(sc.n, gamma, sc.rho, rng);
    const Eigen::VectorXd q = trapezoid_weights(grid);
    const Eigen::Map<const Eigen::VectorXd> g(gamma.data(), static_cast<Eigen::Index>(gamma.size()));
    mean = sc.xi_scale * (w * q.cwiseProduct(g));
    ds.spec.functional_terms.push_back({.name = "w", .num_basis = knots, .grid = grid});
    ds.data.functional.push_back(std::move(w));
  }

  ds.y.resize(sc.n);
  for (int i = 0; i < sc.n; ++i) {
    const double latent = mean(i) + norm(rng);
    ds.y(i) = sc.family == Family::gaussian ? latent : (latent >= 0.0 ? 1.0 : 0.0);
  }
  return ds;
}

// p-value of one replication; NaN when the fit or the test failed.
inline double run_replication(const SimScenario& sc, int knots, int rep, const FitControl& control = {}) {
  Rng rng = substream(sc.seed, static_cast<std::uint64_t>(rep));
  SimDataset ds = generate_dataset(sc, knots, rng);
  try {
    const DesignBundle bundle = build_design(ds.spec, ds.data);
    const VariationalFit f = fit(bundle, ds.y, control);
    if (!f.converged) return std::numeric_limits<double>::quiet_NaN();
    const std::string term = kind_of(sc.effect) == EffectKind::smooth ? "z" : "w";
    return zls_test(f, bundle, term).p_value;
  } catch (const Error&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

// Worker count: VAMZLS_THREADS if set, else the hardware concurrency.
inline unsigned default_thread_count() {
  if (const char* env = std::getenv("VAMZLS_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

inline SimReport run_scenario(const SimScenario& sc, unsigned threads = 0, const FitControl& control = {}) {
  validate(sc);
  SimReport report;
  report.scenario = sc;
  report.knots_used = sc.knots > 0 ? sc.knots : knot_default(sc.family, kind_of(sc.effect), sc.n, sc.t_points);
  report.per_rep_pvalues.assign(static_cast<std::size_t>(sc.replications), std::numeric_limits<double>::quiet_NaN());

  if (threads == 0) threads = default_thread_count();
  threads = std::min<unsigned>(threads, static_cast<unsigned>(sc.replications));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < sc.replications; r = next++)
      report.per_rep_pvalues[static_cast<std::size_t>(r)] = run_replication(sc, report.knots_used, r, control);
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned k = 0; k < threads; ++k) pool.emplace_back(worker);
  }

  for (double p : report.per_rep_pvalues) {
    if (std::isnan(p)) {
      ++report.failures;
      continue;
    }
    ++report.completed;
    if (p < sc.alpha_level) ++report.rejections;
  }
  if (report.completed > 0) {
    report.rejection_rate = static_cast<double>(report.rejections) / report.completed;
    report.mc_stderr = std::sqrt(report.rejection_rate * (1.0 - report.rejection_rate) / report.completed);
  }
  report.flagged = report.failures > 0.05 * sc.replications;
  return report;
}

}  // namespace vamzls
