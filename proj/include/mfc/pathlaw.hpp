#pragma once

// Path-space tools: deterministic lifts of a (flow, velocity) pair to a
// measure on trajectories, and Girsanov-type KL quantities of particle
// ensembles.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "mfc/errors.hpp"
#include "mfc/flow.hpp"
#include "mfc/measure.hpp"
#include "mfc/model.hpp"
#include "mfc/parallel.hpp"
#include "mfc/particles.hpp"
#include "mfc/rng.hpp"

namespace mfc {

// ------------------------------------------------------------------ lift

/// R trajectories with uniform weights; positions wrapped to [0, 1).
class LiftEnsemble {
 public:
  LiftEnsemble() = default;
  LiftEnsemble(TimeGrid grid, std::size_t paths)
      : grid_(grid), paths_(paths), positions_(paths * static_cast<std::size_t>(grid.steps + 1)) {}

  const TimeGrid& time_grid() const { return grid_; }
  int steps() const { return grid_.steps; }
  std::size_t paths() const { return paths_; }
  double weight() const { return 1.0 / static_cast<double>(paths_); }

  std::span<const double> positions(int k) const {
    return {positions_.data() + static_cast<std::size_t>(k) * paths_, paths_};
  }
  std::span<double> positions(int k) { return {positions_.data() + static_cast<std::size_t>(k) * paths_, paths_}; }

 private:
  TimeGrid grid_;
  std::size_t paths_ = 0;
  std::vector<double> positions_;
};

/// Samples x0 from the first density and integrates x' = w(t, x) by RK4 on
/// the flow's time grid, with w interpolated linearly in t and x.
inline LiftEnsemble lift(const MeasureFlow& flow, const FieldFlow& w, std::size_t paths, std::uint64_t seed,
                         int workers = 0) {
  detail::require(w.kind() == FieldKind::velocity, "lift: field must be tagged VELOCITY");
  detail::require(flow.same_shape(w), "lift: shapes differ");
  detail::require(paths >= 1, "lift: need at least one path");
  const TimeGrid grid = flow.time_grid();
  LiftEnsemble out(grid, paths);
  const CounterRng rng(seed);
  const auto x0 = sample_grid_measure(flow.measure(0), paths, rng, CounterRng::Purpose::lift);
  std::copy(x0.begin(), x0.end(), out.positions(0).begin());
  const double dt = grid.dt();
  parallel_for(paths, worker_count(workers), [&](std::size_t p) {
    double x = x0[p];
    for (int k = 0; k < grid.steps; ++k) {
      const double t = grid.time(k);
      const double k1 = w.interpolate(t, x);
      const double k2 = w.interpolate(t + 0.5 * dt, x + 0.5 * dt * k1);
      const double k3 = w.interpolate(t + 0.5 * dt, x + 0.5 * dt * k2);
      const double k4 = w.interpolate(t + dt, x + dt * k3);
      x = wrap_unit(x + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0);
      out.positions(k + 1)[p] = x;
    }
  });
  return out;
}

inline EmpiricalMeasure lift_marginal(const LiftEnsemble& ens, int k) {
  const auto x = ens.positions(k);
  return EmpiricalMeasure(std::vector<double>(x.begin(), x.end()));
}

/// Mean over paths of \int |x'|^2 dt for the piecewise-linear paths.
inline SampleStats lift_kinetic(const LiftEnsemble& ens) {
  std::vector<double> per_path(ens.paths(), 0.0);
  const double dt = ens.time_grid().dt();
  for (int k = 0; k < ens.steps(); ++k) {
    const auto a = ens.positions(k), b = ens.positions(k + 1);
    for (std::size_t p = 0; p < per_path.size(); ++p) {
      const double dx = circle_displacement(b[p], a[p]);
      per_path[p] += dx * dx / dt;
    }
  }
  return summarize(per_path);
}

/// Bin-averaged path velocity: central differences at interior nodes,
/// one-sided at the ends.
inline ConditionalVelocity conditional_velocity(const LiftEnsemble& ens, int cells, std::size_t min_samples = 10,
                                                bool strict = true) {
  detail::require(cells >= 2, "conditional_velocity: need at least two cells");
  const int steps = ens.steps();
  const double dt = ens.time_grid().dt();
  return detail::bin_average(ens.time_grid(), cells, min_samples, strict, [&](int k, auto& sum, auto& cnt) {
    const int lo = std::max(k - 1, 0), hi = std::min(k + 1, steps);
    const auto x = ens.positions(k), a = ens.positions(lo), b = ens.positions(hi);
    const double span = (hi - lo) * dt;
    for (std::size_t p = 0; p < x.size(); ++p) {
      const auto j = static_cast<std::size_t>(cell_of(x[p], cells));
      sum[j] += circle_displacement(b[p], a[p]) / span;
      cnt[j] += 1.0;
    }
  });
}

// ------------------------------------------------------------------ KL

/// Normalization of the path-space KL formulas: `unit` uses the constant
/// one, `standard` the Girsanov value 1/4 for noise sqrt(2) dW. Config
/// values "paper" and "standard".
enum class GirsanovConstant { unit, standard };

inline double girsanov_factor(GirsanovConstant c) { return c == GirsanovConstant::unit ? 1.0 : 0.25; }

/// Per-particle KL of the controlled particle law to Brownian paths started
/// at the initial law: factor * mean_i sum_k |u^i_k|^2 dt. One sample per
/// replica.
inline SampleStats kl_path_to_wiener(std::span<const ParticleEnsemble> ensembles,
                                     GirsanovConstant constant = GirsanovConstant::unit) {
  detail::require(!ensembles.empty(), "kl_path_to_wiener: no ensembles");
  std::vector<double> values;
  values.reserve(ensembles.size());
  for (const auto& e : ensembles) {
    std::vector<double> per_particle(static_cast<std::size_t>(e.particles()), 0.0);
    for (int k = 0; k < e.steps(); ++k) {
      const auto u = e.drifts(k);
      for (std::size_t i = 0; i < u.size(); ++i) per_particle[i] += u[i] * u[i] * e.dt();
    }
    values.push_back(girsanov_factor(constant) * pairwise_sum(per_particle) / e.particles());
  }
  return summarize(values);
}

/// Fourier moments of every row of a mean-field flow, for pointwise drift
/// evaluation against mu_t.
inline std::vector<Moments> flow_moments(const MeasureFlow& flow, int max_k) {
  std::vector<Moments> out;
  out.reserve(static_cast<std::size_t>(flow.steps() + 1));
  TrigTable table(flow.cells(), std::max(max_k, 1));
  for (int k = 0; k <= flow.steps(); ++k) out.push_back(table.moments(flow.row(k), max_k));
  return out;
}

/// Moments at time t by linear interpolation between flow rows.
inline Moments moments_at(const std::vector<Moments>& rows, const TimeGrid& grid, double t) {
  const double s = std::clamp(t / grid.dt(), 0.0, static_cast<double>(grid.steps));
  const int k0 = std::min(static_cast<int>(s), grid.steps - 1);
  const double f = s - k0;
  Moments m = rows[static_cast<std::size_t>(k0)];
  if (f == 0.0) return m;
  const Moments& n = rows[static_cast<std::size_t>(k0 + 1)];
  for (std::size_t q = 0; q < m.c.size(); ++q) {
    m.c[q] = (1.0 - f) * m.c[q] + f * n.c[q];
    m.s[q] = (1.0 - f) * m.s[q] + f * n.s[q];
  }
  return m;
}

/// Chaos bound on the KL between the k-particle marginal path laws:
///   k * factor * mean_i sum_steps |A^i + b(X^i, iota) - A_inf(X^i) - b(X^i, mu_t)|^2 dt
/// with A^i the recorded control. One sample per replica.
inline SampleStats kl_chaos_bound(std::span<const ParticleEnsemble> ensembles, const ProblemSpec& spec,
                                  const FieldFlow& a_inf, const MeasureFlow& mf_flow, int k,
                                  GirsanovConstant constant = GirsanovConstant::unit, int workers = 0) {
  detail::require(!ensembles.empty(), "kl_chaos_bound: no ensembles");
  detail::require(k >= 1, "kl_chaos_bound: marginal size k must be at least 1");
  detail::require(a_inf.kind() == FieldKind::control, "kl_chaos_bound: mean-field control must be tagged CONTROL");
  const int max_k = std::max(spec.max_wavenumber(), 1);
  const auto rows = flow_moments(mf_flow, max_k);
  std::vector<double> values(ensembles.size());
  parallel_for(ensembles.size(), worker_count(workers), [&](std::size_t r) {
    const ParticleEnsemble& e = ensembles[r];
    detail::require(k <= e.particles(), "kl_chaos_bound: k exceeds the particle count");
    EmpiricalField field(spec);
    const auto n = static_cast<std::size_t>(e.particles());
    std::vector<double> b_emp(n), b_mf(n), per_particle(n, 0.0);
    for (int step = 0; step < e.steps(); ++step) {
      const double t = e.time_grid().time(step);
      const auto x = e.positions(step);
      const auto a = e.controls(step);
      field.drift_self(x, b_emp);
      field.drift_against(x, moments_at(rows, mf_flow.time_grid(), t), b_mf);
      for (std::size_t i = 0; i < n; ++i) {
        const double d = (a[i] - a_inf.interpolate(t, x[i])) + (b_emp[i] - b_mf[i]);
        per_particle[i] += d * d * e.dt();
      }
    }
    values[r] = k * girsanov_factor(constant) * pairwise_sum(per_particle) / static_cast<double>(n);
  });
  return summarize(values);
}

/// Csiszar-Kullback: TV <= sqrt(KL / 2), capped at the trivial bound 1.
inline double tv_upper_bound(double kl) {
  detail::require(kl >= 0.0, "tv_upper_bound: KL must be nonnegative");
  return std::min(1.0, std::sqrt(0.5 * kl));
}

}  // namespace mfc
