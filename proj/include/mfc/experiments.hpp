#pragma once

// Sweeps over the particle count N against a solved mean-field problem.
// Replica r at particle count N uses seed ^ (N << 32) ^ r, so every row is
// reproducible on its own and independent of the worker count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <vector>

#include "mfc/dynamics.hpp"
#include "mfc/energy_mc.hpp"
#include "mfc/errors.hpp"
#include "mfc/parallel.hpp"
#include "mfc/particles.hpp"
#include "mfc/pathlaw.hpp"
#include "mfc/solver.hpp"
#include "mfc/wasserstein.hpp"

namespace mfc {

inline std::uint64_t sweep_seed(std::uint64_t seed, int particles) {
  return seed ^ (static_cast<std::uint64_t>(particles) << 32);
}

inline void check_particle_counts(std::span<const int> counts) {
  if (counts.empty()) throw ConfigError("--n", "particle-count list is empty");
  for (int n : counts)
    if (n < 1) throw ConfigError("--n", "particle counts must be positive");
}

/// Grid nodes for time fractions in [0, 1]; rejects duplicates, including
/// fractions that round to the same node.
inline std::vector<int> time_nodes(std::span<const double> fractions, int steps) {
  if (fractions.empty()) throw ConfigError("--times", "time list is empty");
  std::vector<int> nodes;
  std::set<int> seen;
  for (double f : fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("--times", "fractions of T must lie in [0, 1]");
    const int k = static_cast<int>(std::lround(f * steps));
    if (!seen.insert(k).second) throw ConfigError("--times", "duplicate time");
    nodes.push_back(k);
  }
  return nodes;
}

// ------------------------------------------------------------------ cost

struct ConvergeRow {
  int particles = 0;
  SampleStats cost;
  double theta = 0.0;
  double gap = 0.0;  // |cost - theta|
};

inline std::vector<ConvergeRow> converge_sweep(const ProblemSpec& spec, const SolveResult& mf,
                                               std::span<const int> counts, int replicas, std::uint64_t seed,
                                               int workers = 0) {
  check_particle_counts(counts);
  std::vector<ConvergeRow> rows;
  for (int n : counts) {
    ConvergeRow row{n, eval_cost_N_mc(spec, mf.control, n, replicas, sweep_seed(seed, n), workers), mf.theta, 0.0};
    row.gap = std::abs(row.cost.mean - row.theta);
    rows.push_back(row);
  }
  return rows;
}

// ------------------------------------------------------------------ chaos

struct ChaosRow {
  int particles = 0;
  double time = 0.0;
  SampleStats w1;
};

/// One line of the per-replica particle summary.
struct ParticleSummaryRow {
  int replica = 0;
  double time = 0.0;
  double w1_to_mf = 0.0;
  double running_cost = 0.0;  // mean over particles of V(X^i, iota)
};

struct ChaosSweep {
  std::vector<ChaosRow> rows;
  std::vector<SampleStats> sup_w1;  // per N: sup over the sampled times, averaged over replicas
  std::vector<std::vector<ParticleSummaryRow>> summaries;  // per N
};

/// W1 between the empirical measure of all N particles and the mean-field
/// marginal at each sampled time.
inline ChaosSweep chaos_sweep(const ProblemSpec& spec, const SolveResult& mf, std::span<const int> counts,
                              std::span<const double> time_fractions, int replicas, std::uint64_t seed,
                              int workers = 0) {
  check_particle_counts(counts);
  detail::require(replicas >= 1, "chaos_sweep: need at least one replica");
  const TimeGrid grid = mf.control.time_grid();
  const auto nodes = time_nodes(time_fractions, grid.steps);
  const std::size_t nt = nodes.size();
  ChaosSweep out;
  for (int n : counts) {
    const auto reps = static_cast<std::size_t>(replicas);
    std::vector<double> w1(reps * nt), running(reps * nt);
    parallel_for(reps, worker_count(workers), [&](std::size_t r) {
      const auto ens = simulate(spec, TensorizedControl{&mf.control}, n, grid.steps, replica_seed(sweep_seed(seed, n), r));
      for (std::size_t q = 0; q < nt; ++q) {
        const int k = nodes[q];
        w1[r * nt + q] = wasserstein_circle(empirical_marginal(ens, k), mf.flow.measure(k), 1);
        running[r * nt + q] = pairwise_sum(ens.running(k)) / n;
      }
    });
    std::vector<double> column(reps), sup(reps, 0.0);
    for (std::size_t q = 0; q < nt; ++q) {
      for (std::size_t r = 0; r < reps; ++r) {
        column[r] = w1[r * nt + q];
        sup[r] = std::max(sup[r], column[r]);
      }
      out.rows.push_back({n, grid.time(nodes[q]), summarize(column)});
    }
    out.sup_w1.push_back(summarize(sup));
    std::vector<ParticleSummaryRow> summary;
    for (std::size_t r = 0; r < reps; ++r)
      for (std::size_t q = 0; q < nt; ++q)
        summary.push_back({static_cast<int>(r), grid.time(nodes[q]), w1[r * nt + q], running[r * nt + q]});
    out.summaries.push_back(std::move(summary));
  }
  return out;
}

// ------------------------------------------------------------------ KL

struct KlRow {
  int particles = 0;
  int marginal = 0;
  SampleStats kl_bound;
  SampleStats kl_to_wiener;  // per particle
  double tv_bound = 0.0;
};

inline std::vector<KlRow> kl_sweep(const ProblemSpec& spec, const SolveResult& mf, std::span<const int> counts,
                                   int marginal, int replicas, std::uint64_t seed,
                                   GirsanovConstant constant = GirsanovConstant::unit, int workers = 0) {
  check_particle_counts(counts);
  if (marginal < 1) throw ConfigError("--k", "marginal size must be at least 1");
  for (int n : counts)
    if (marginal > n) throw ConfigError("--k", "marginal size exceeds a particle count");
  detail::require(replicas >= 1, "kl_sweep: need at least one replica");
  const int steps = mf.control.steps();
  std::vector<KlRow> rows;
  for (int n : counts) {
    const auto reps = static_cast<std::size_t>(replicas);
    std::vector<double> bound(reps), wiener(reps);
    parallel_for(reps, worker_count(workers), [&](std::size_t r) {
      const ParticleEnsemble ens =
          simulate(spec, TensorizedControl{&mf.control}, n, steps, replica_seed(sweep_seed(seed, n), r));
      const std::span<const ParticleEnsemble> one(&ens, 1);
      bound[r] = kl_chaos_bound(one, spec, mf.control, mf.flow, marginal, constant, 1).mean;
      wiener[r] = kl_path_to_wiener(one, constant).mean;
    });
    KlRow row{n, marginal, summarize(bound), summarize(wiener), 0.0};
    row.tv_bound = tv_upper_bound(row.kl_bound.mean);
    rows.push_back(row);
  }
  return rows;
}

// ------------------------------------------------------------------ lift

struct LiftRow {
  double time = 0.0;
  double w1 = 0.0;  // lift marginal vs grid marginal
};

struct LiftReport {
  std::vector<LiftRow> rows;
  SampleStats path_kinetic;  // mean over paths of \int |x'|^2 dt
  double grid_kinetic = 0.0;  // \int\int |w|^2 mu dt, trapezoid in t
  double kinetic_relative_error = 0.0;
};

inline double grid_kinetic(const MeasureFlow& flow, const FieldFlow& w) {
  const TimeGrid grid = flow.time_grid();
  const double h = flow.cell_width();
  std::vector<double> per_node(static_cast<std::size_t>(grid.steps + 1));
  std::vector<double> terms(static_cast<std::size_t>(flow.cells()));
  for (int k = 0; k <= grid.steps; ++k) {
    for (int j = 0; j < flow.cells(); ++j) terms[static_cast<std::size_t>(j)] = w.at(k, j) * w.at(k, j) * flow.at(k, j);
    per_node[static_cast<std::size_t>(k)] = grid.weight(k) * h * pairwise_sum(terms);
  }
  return pairwise_sum(per_node);
}

inline LiftReport lift_report(const MeasureFlow& flow, const FieldFlow& w, std::size_t paths,
                              std::span<const double> time_fractions, std::uint64_t seed, int workers = 0) {
  const auto nodes = time_nodes(time_fractions, flow.steps());
  const LiftEnsemble ens = lift(flow, w, paths, seed, workers);
  LiftReport out;
  for (int k : nodes)
    out.rows.push_back({flow.time_grid().time(k), wasserstein_circle(lift_marginal(ens, k), flow.measure(k), 1)});
  out.path_kinetic = lift_kinetic(ens);
  out.grid_kinetic = grid_kinetic(flow, w);
  out.kinetic_relative_error =
      std::abs(out.path_kinetic.mean - out.grid_kinetic) / std::max(std::abs(out.grid_kinetic), 1e-300);
  return out;
}

}  // namespace mfc
