#pragma once

// Monte Carlo estimate of the N-particle cost at a per-particle control,
//
//   C^N = (1/N) sum_i E[ \int (|A^i|^2/2 + V(X^i, iota)) dt + g(X^i_T) ],
//
// with the time integral taken by the trapezoid rule on the simulation nodes.

#include <concepts>
#include <cstdint>
#include <type_traits>
#include <vector>

#include "mfc/flow.hpp"
#include "mfc/model.hpp"
#include "mfc/parallel.hpp"
#include "mfc/particles.hpp"

namespace mfc {

/// Per-particle cost of one simulated replica.
inline double ensemble_cost(const ProblemSpec& spec, const ParticleEnsemble& ens) {
  const TimeGrid& grid = ens.time_grid();
  const auto n = static_cast<std::size_t>(ens.particles());
  std::vector<double> per_particle(n, 0.0);
  for (int k = 0; k <= grid.steps; ++k) {
    const double wt = grid.weight(k);
    const auto a = ens.controls(k);
    const auto v = ens.running(k);
    for (std::size_t i = 0; i < n; ++i) per_particle[i] += wt * (0.5 * a[i] * a[i] + v[i]);
  }
  if (spec.mode == Mode::finite_horizon && spec.terminal.kind == TerminalCost::Kind::linear) {
    const auto x = ens.positions(grid.steps);
    for (std::size_t i = 0; i < n; ++i) per_particle[i] += spec.terminal.weight(x[i]);
  }
  return pairwise_sum(per_particle) / static_cast<double>(n);
}

/// Replica r runs with seed ^ r; the estimate is independent of `workers`.
template <class Policy>
  requires(!std::same_as<std::remove_cvref_t<Policy>, FieldFlow>)
SampleStats eval_cost_N_mc(const ProblemSpec& spec, const Policy& policy, int particles, int steps, int replicas,
                           std::uint64_t seed, int workers = 0) {
  detail::require(particles >= 1 && replicas >= 1, "eval_cost_N_mc: need N >= 1 and at least one replica");
  std::vector<double> costs(static_cast<std::size_t>(replicas));
  parallel_for(costs.size(), worker_count(workers), [&](std::size_t r) {
    const ParticleEnsemble ens = simulate(spec, policy, particles, steps, replica_seed(seed, r));
    costs[r] = ensemble_cost(spec, ens);
  });
  return summarize(costs);
}

/// Tensorized mean-field control A^i = A(t, X^i), simulated on the control's
/// own time grid.
inline SampleStats eval_cost_N_mc(const ProblemSpec& spec, const FieldFlow& control, int particles, int replicas,
                                  std::uint64_t seed, int workers = 0) {
  detail::require(control.kind() == FieldKind::control, "eval_cost_N_mc: field must be tagged CONTROL");
  return eval_cost_N_mc(spec, TensorizedControl{&control}, particles, control.steps(), replicas, seed, workers);
}

}  // namespace mfc
