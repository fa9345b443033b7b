// Rejection rate of the smooth-term test as the signal grows.

#include <cstdio>

#include "vamzls/vamzls.hpp"

int main() {
  using namespace vamzls;
  for (double xi : {0.0, 0.5, 1.0, 2.0, 3.0}) {
    SimScenario sc;
    sc.effect = SimEffect::smooth_phi;
    sc.n = 100;
    sc.xi_scale = xi;
    sc.replications = 100;
    const SimReport r = run_scenario(sc);
    std::printf("xi=%.1f  rate=%.3f  (se %.3f)\n", xi, r.rejection_rate, r.mc_stderr);
  }
}
