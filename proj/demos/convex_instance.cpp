// Solves the shipped convex interacting instance and prints the value
// function, the energy breakdown of the optimal flow, and the particle gap
// at two particle counts.

#include <cstdio>

#include "mfc/mfc.hpp"

int main() {
  using namespace mfc;
  ConvexAmplitudes amp;
  amp.external_drift = TrigSeries::sine(1, 0.5);
  amp.external_potential = TrigSeries::cosine(2, 0.3);
  amp.v0_cos = {0.0, 0.02};
  amp.v1_cos = {0.5, 2.0, 0.5};
  amp.terminal = TerminalCost::linear(TrigSeries::cosine(1, 0.2));
  amp.initial = DensitySpec::gaussian(0.25, 0.1);
  amp.horizon = 0.2;
  const ProblemSpec spec = make_convex_instance(amp);

  SolveOptions opts;
  opts.tol = 1e-7;
  opts.max_iters = 2000;
  const SolveResult r = solve_mean_field(spec, 128, 200, opts);
  std::printf("theta = %.8f  (%d iterations, %s)\n", r.theta, r.iterations, r.message.c_str());

  const GridModel model(spec, 128);
  const EnergyReport e = eval_energy(model, r.flow, control_to_velocity(model, r.flow, r.control));
  std::printf("energy total = %.8f  kinetic %.6f  fisher/2 %.6f  running %.6f  terminal %.6f\n", e.total, e.kinetic,
              e.fisher_half, e.running, e.terminal);

  for (int n : {8, 64}) {
    const SampleStats c = eval_cost_N_mc(spec, r.control, n, 100, 1);
    std::printf("N = %3d  cost %.6f +- %.6f  gap %.6f\n", n, c.mean, c.std_error, std::abs(c.mean - r.theta));
  }
}
