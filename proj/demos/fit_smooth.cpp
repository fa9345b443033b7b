// Fit y = 1 + x + f(z) + noise with one penalized spline, then test f = 0.

#include <cstdio>
#include <random>

#include "vamzls/vamzls.hpp"

int main() {
  using namespace vamzls;
  const int n = 200;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> norm;

  ModelSpec spec;
  spec.scalar_terms = {"x"};
  spec.smooth_terms = {{.name = "z", .num_basis = 8}};
  ModelData data;
  data.scalar.resize(n, 1);
  data.smooth = {Eigen::VectorXd(n)};
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    const double x = norm(rng), z = norm(rng);
    data.scalar(i, 0) = x;
    data.smooth[0](i) = z;
    y(i) = 1.0 + x + 0.6 * std::sin(2.0 * z) + 0.5 * norm(rng);
  }

  const DesignBundle bundle = build_design(spec, data);
  const VariationalFit f = fit(bundle, y);
  std::printf("converged=%d sweeps=%d ELBO=%.4f sigma2=%.4f\n", f.converged, f.iterations, f.elbo_trace.back(), f.sigma2_hat());

  const CurveEstimate c = extract_curve(f, bundle, "z", default_curve_grid(bundle.block("z"), 9));
  for (std::size_t k = 0; k < c.grid.size(); ++k)
    std::printf("  z=%6.3f  f=%7.4f  sd=%.4f\n", c.grid[k], c.estimate(static_cast<Eigen::Index>(k)), c.sd(static_cast<Eigen::Index>(k)));

  const ZlsResult r = zls_test(f, bundle, "z");
  std::printf("test f(z)=0: G=%.4f kappa=%.4f nu=%.3f p=%.3g\n", r.statistic, r.kappa, r.nu, r.p_value);
}
