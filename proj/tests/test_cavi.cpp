#include <cmath>
#include <random>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "fixtures.hpp"
#include "oracles/elbo.hpp"
#include "vamzls/vamzls.hpp"

using namespace vamzls;
using Catch::Approx;

namespace {

// Prior precision assembled by hand from the model description.
Eigen::MatrixXd hand_precision(const DesignBundle& b, double b_pen) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(b.p_total(), b.p_total());
  for (const auto& blk : b.blocks) {
    if (blk.kind == TermKind::intercept) d(blk.start, blk.start) = 1.0 / b.hyper.sigma_a2;
    if (blk.kind == TermKind::scalar) d(blk.start, blk.start) = 1.0 / b.hyper.sigma_b2;
    if (!blk.penalized()) continue;
    const double k = static_cast<double>(blk.width);
    d.block(blk.start, blk.start, blk.width, blk.width) = (blk.a_prior + k / 2.0) / b_pen * blk.penalty.matrix;
    if (blk.kind == TermKind::smooth)
      d.block(blk.start, blk.start, blk.width, blk.width) += Eigen::MatrixXd::Constant(blk.width, blk.width, 1.0 / k);
  }
  return d;
}

}  // namespace

TEST_CASE("one sweep with fixed scales is a ridge solve") {
  SECTION("intercept and scalar only") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> norm;
    const int n = 40;
    ModelSpec spec;
    spec.scalar_terms = {"x1", "x2"};
    spec.hyper.sigma_b2 = 2.0;
    ModelData data;
    data.scalar.resize(n, 2);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      data.scalar(i, 0) = norm(rng);
      data.scalar(i, 1) = norm(rng);
      y(i) = 1.0 + 2.0 * data.scalar(i, 0) - data.scalar(i, 1) + norm(rng);
    }
    const DesignBundle b = build_design(spec, data);
    FitControl ctl;
    ctl.max_iter = 1;
    ctl.b_init = 3.0;
    const VariationalFit f = fit_gaussian(b, y, ctl);
    const double tau = (spec.hyper.a_e + n / 2.0) / 3.0;
    Eigen::MatrixXd prec = tau * b.C.transpose() * b.C;
    prec.diagonal() += Eigen::Vector3d(1.0 / spec.hyper.sigma_a2, 0.5, 0.5);
    const Eigen::VectorXd direct = prec.ldlt().solve(tau * b.C.transpose() * y);
    CHECK((f.mu_theta - direct).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((f.sigma_theta - prec.inverse()).cwiseAbs().maxCoeff() < 1e-10);
  }
  SECTION("smooth and functional blocks") {
    const auto p = fixtures::gaussian_problem(3, 100, 2, 1);
    FitControl ctl;
    ctl.max_iter = 1;
    ctl.b_init = 0.7;
    const VariationalFit f = fit_gaussian(p.bundle, p.y, ctl);
    const double tau = (p.spec.hyper.a_e + 50.0) / 0.7;
    const Eigen::MatrixXd prec = tau * p.bundle.C.transpose() * p.bundle.C + hand_precision(p.bundle, 0.7);
    const Eigen::VectorXd direct = prec.ldlt().solve(tau * p.bundle.C.transpose() * p.y);
    CHECK((f.mu_theta - direct).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("Gaussian ELBO is monotone on randomized fixtures") {
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    const int smooths = 1 + static_cast<int>(seed % 2);
    const int functionals = static_cast<int>(seed % 3 == 0);
    const auto p = fixtures::gaussian_problem(seed, 60 + static_cast<int>(seed % 5) * 30, smooths, functionals);
    FitControl ctl;
    ctl.tol = 1e-9;
    const VariationalFit f = fit_gaussian(p.bundle, p.y, ctl);
    CHECK(f.converged);
    REQUIRE(f.elbo_trace.size() >= 2);
    double worst = 0.0;
    for (std::size_t k = 1; k < f.elbo_trace.size(); ++k) worst = std::min(worst, f.elbo_trace[k] - f.elbo_trace[k - 1]);
    CHECK(worst >= -1e-8);
    CHECK(std::isfinite(f.elbo_trace.front()));
    CHECK(std::abs(f.elbo_trace.back() - f.elbo_trace[f.elbo_trace.size() - 2]) < ctl.tol);
  }
}

TEST_CASE("closed-form Gaussian ELBO agrees with the expectation oracle up to a constant") {
  const auto p = fixtures::gaussian_problem(7, 90, 2, 1);
  std::vector<double> diffs;
  FitControl ctl;
  ctl.on_iteration = [&](int, const VariationalFit& s) {
    diffs.push_back(oracles::elbo_gaussian(p.bundle, p.y, s) - elbo_gaussian(p.bundle, s));
  };
  fit_gaussian(p.bundle, p.y, ctl);
  REQUIRE(diffs.size() > 3);
  for (double d : diffs) CHECK(d == Approx(diffs.front()).margin(1e-8));
}

TEST_CASE("closed-form probit ELBO agrees with the expectation oracle up to a constant") {
  const auto p = fixtures::probit_problem(8, 150, 1, 1);
  std::vector<double> diffs;
  FitControl ctl;
  ctl.on_iteration = [&](int, const VariationalFit& s) {
    diffs.push_back(oracles::elbo_probit(p.bundle, p.y, s) - elbo_probit(p.bundle, p.y, s));
  };
  fit_probit(p.bundle, p.y, ctl);
  REQUIRE(diffs.size() > 3);
  for (double d : diffs) CHECK(d == Approx(diffs.front()).margin(1e-8));
}

TEST_CASE("Gaussian fit is scale equivariant") {
  const auto p = fixtures::gaussian_problem(31, 120, 1, 1);
  const double c = 10.0;
  ModelSpec s2 = p.spec;
  s2.hyper.sigma_a2 *= c * c;
  s2.hyper.sigma_b2 *= c * c;
  s2.hyper.b_e *= c * c;
  for (auto& t : s2.smooth_terms) t.b_omega *= c * c;
  for (auto& t : s2.functional_terms) t.b_eta *= c * c;
  const DesignBundle b2 = build_design(s2, p.data);
  FitControl ctl;
  FitControl ctl2;
  ctl2.b_init = c * c;
  const VariationalFit f1 = fit_gaussian(p.bundle, p.y, ctl);
  const VariationalFit f2 = fit_gaussian(b2, c * p.y, ctl2);
  REQUIRE(f1.converged);
  REQUIRE(f2.converged);
  CHECK(f1.iterations == f2.iterations);
  const double rel = (f2.mu_theta - c * f1.mu_theta).cwiseAbs().maxCoeff() / (c * f1.mu_theta.cwiseAbs().maxCoeff());
  CHECK(rel < 1e-6);
}

TEST_CASE("curve recovery on the sigmoid design") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> norm;
  const int n = 200;
  Eigen::VectorXd z(n), y(n), truth(n);
  for (int i = 0; i < n; ++i) {
    z(i) = norm(rng);
    truth(i) = -std_normal_cdf((z(i) - 0.5) / 0.5);
    y(i) = truth(i) + norm(rng);
  }
  ModelSpec spec;
  spec.smooth_terms = {{.name = "z", .num_basis = 8}};
  ModelData data;
  data.scalar = Eigen::MatrixXd(n, 0);
  data.smooth = {z};
  const DesignBundle b = build_design(spec, data);
  const VariationalFit f = fit(b, y);
  REQUIRE(f.converged);
  const std::span<const double> zs(z.data(), n);
  const CurveEstimate est = extract_curve(f, b, "z", zs);
  const Eigen::VectorXd centered = truth.array() - truth.mean();
  const double rmse = std::sqrt((est.estimate - centered).squaredNorm() / n);
  CHECK(rmse < 0.15);
}

TEST_CASE("extract_curve") {
  const auto p = fixtures::gaussian_problem(44, 100, 1, 1);
  const VariationalFit f = fit(p.bundle, p.y);
  const TermBlock& blk = p.bundle.block("s1");
  const std::span<const double> zs(p.data.smooth[0].data(), 100);
  const CurveEstimate e = extract_curve(f, p.bundle, "s1", zs);
  const Eigen::VectorXd internal = p.bundle.C.middleCols(blk.start, blk.width) * f.mu_theta.segment(blk.start, blk.width);
  CHECK((e.estimate - internal).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(e.sd.minCoeff() > 0.0);

  VariationalFit zero = f;
  zero.mu_theta.setZero();
  CHECK(extract_curve(zero, p.bundle, "w1", p.spec.functional_terms[0].grid).estimate.cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(extract_curve(f, p.bundle, "x", zs), DataError);
  CHECK_THROWS_AS(extract_curve(f, p.bundle, "missing", zs), DataError);
}

TEST_CASE("probit latent means sit on the observed side") {
  const auto p = fixtures::probit_problem(12, 160, 1, 1);
  bool ordered = true;
  FitControl ctl;
  ctl.on_iteration = [&](int, const VariationalFit& s) {
    const Eigen::VectorXd eta = p.bundle.C * s.mu_theta;
    for (Eigen::Index i = 0; i < eta.size(); ++i)
      ordered = ordered && (p.y(i) == 1.0 ? s.mu_ystar(i) > eta(i) : s.mu_ystar(i) < eta(i));
  };
  const VariationalFit f = fit_probit(p.bundle, p.y, ctl);
  CHECK(f.converged);
  CHECK(ordered);
}

TEST_CASE("probit ELBO increases up to the nonconjugate slack") {
  for (std::uint64_t seed = 200; seed < 210; ++seed) {
    const auto p = fixtures::probit_problem(seed, 120 + static_cast<int>(seed % 3) * 40, 1, static_cast<int>(seed % 2));
    const VariationalFit f = fit_probit(p.bundle, p.y);
    double worst = 0.0;
    for (std::size_t k = 1; k < f.elbo_trace.size(); ++k) worst = std::min(worst, f.elbo_trace[k] - f.elbo_trace[k - 1]);
    CHECK(worst >= -1e-6);
    for (double e : f.elbo_trace) CHECK(std::isfinite(e));
  }
}

TEST_CASE("intercept-only probit recovers the success rate") {
  std::mt19937_64 rng(77);
  std::bernoulli_distribution coin(0.3);
  const int n = 200;
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y(i) = coin(rng) ? 1.0 : 0.0;
  ModelSpec spec;
  spec.family = Family::probit;
  ModelData data;
  data.scalar = Eigen::MatrixXd(n, 0);
  const DesignBundle b = build_design(spec, data);
  const VariationalFit f = fit(b, y);
  REQUIRE(f.converged);
  CHECK(std::abs(std_normal_cdf(f.mu_theta(0)) - y.mean()) < 0.02);
}

TEST_CASE("probit input checks and separation") {
  auto p = fixtures::probit_problem(5, 80, 1, 0);
  Eigen::VectorXd bad = p.y;
  bad(3) = 0.5;
  CHECK_THROWS_AS(fit_probit(p.bundle, bad), DataError);
  CHECK_THROWS_AS(fit_probit(p.bundle, Eigen::VectorXd::Ones(80)), DataError);

  ModelSpec spec;
  spec.family = Family::probit;
  spec.scalar_terms = {"x"};
  ModelData data;
  data.scalar = Eigen::VectorXd::LinSpaced(40, -1.0, 1.0);
  Eigen::VectorXd y = (data.scalar.col(0).array() > 0.0).cast<double>();
  const DesignBundle b = build_design(spec, data);
  FitControl ctl;
  ctl.max_iter = 200;
  const VariationalFit f = fit_probit(b, y, ctl);
  CHECK_FALSE(f.converged);
  CHECK(f.diagnostic.find("separation") != std::string::npos);
}

TEST_CASE("family mismatch and bad controls are rejected") {
  const auto p = fixtures::gaussian_problem(2, 50);
  CHECK_THROWS_AS(fit_probit(p.bundle, p.y), DataError);
  FitControl ctl;
  ctl.tol = 0.0;
  CHECK_THROWS_AS(fit_gaussian(p.bundle, p.y, ctl), DataError);
  CHECK_THROWS_AS(fit_gaussian(p.bundle, p.y.head(10)), DataError);
}

TEST_CASE("all-zero unpenalizable block is reported by name") {
  const auto grid = unit_grid(20);
  ModelSpec spec;
  spec.hyper.xi_pen = 0.0;
  spec.functional_terms = {{.name = "flat", .num_basis = 6, .grid = grid}};
  ModelData data;
  data.scalar = Eigen::MatrixXd(30, 0);
  data.functional = {Eigen::MatrixXd::Zero(30, 20)};
  const DesignBundle b = build_design(spec, data);
  const Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(30, 0, 1);
  try {
    fit(b, y);
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    INFO(e.what());
    CHECK(std::string(e.what()).find("flat") != std::string::npos);
  }
}

TEST_CASE("iteration cap leaves the fit unconverged") {
  const auto p = fixtures::gaussian_problem(9, 80);
  FitControl ctl;
  ctl.max_iter = 2;
  ctl.tol = 1e-14;
  const VariationalFit f = fit(p.bundle, p.y, ctl);
  CHECK_FALSE(f.converged);
  CHECK(f.iterations == 2);
  CHECK_FALSE(f.diagnostic.empty());
}
