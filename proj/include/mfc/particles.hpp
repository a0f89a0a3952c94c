#pragma once

// Euler-Maruyama simulation of N interacting particles on the torus,
//
//   X^i_{k+1} = wrap(X^i_k + u^i_k dt + sqrt(2 dt) xi^i_k),
//   u^i_k     = A^i_k + b(X^i_k, iota_k),   iota_k = (1/N) sum_j delta_{X^j_k}.
//
// Noise xi^i_k is drawn from the counter-based generator keyed by the seed and
// addressed by (particle, step). Interactions are exact finite sums evaluated
// through the Fourier moments of iota_k.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mfc/errors.hpp"
#include "mfc/flow.hpp"
#include "mfc/measure.hpp"
#include "mfc/model.hpp"
#include "mfc/parallel.hpp"
#include "mfc/rng.hpp"
#include "mfc/series.hpp"

namespace mfc {

/// Trajectories of one replica. Row k of every table holds step k; drift,
/// control and running-cost rows run over all K+1 nodes, the last one being
/// evaluated at the terminal positions.
class ParticleEnsemble {
 public:
  ParticleEnsemble() = default;
  ParticleEnsemble(int particles, TimeGrid grid, std::uint64_t seed)
      : n_(static_cast<std::size_t>(particles)), grid_(grid), seed_(seed),
        positions_(n_ * static_cast<std::size_t>(grid.steps + 1)), drifts_(positions_.size()),
        controls_(positions_.size()), running_(positions_.size()) {
    detail::require(particles >= 1, "ensemble: need at least one particle");
    detail::require(grid.steps >= 1 && grid.horizon > 0.0, "ensemble: need K >= 1 and T > 0");
  }

  int particles() const { return static_cast<int>(n_); }
  int steps() const { return grid_.steps; }
  double dt() const { return grid_.dt(); }
  const TimeGrid& time_grid() const { return grid_; }
  std::uint64_t noise_seed() const { return seed_; }

  std::span<const double> positions(int k) const { return row(positions_, k); }
  std::span<double> positions(int k) { return row(positions_, k); }
  /// u^i_k = A^i_k + b(X^i_k, iota_k)
  std::span<const double> drifts(int k) const { return row(drifts_, k); }
  std::span<double> drifts(int k) { return row(drifts_, k); }
  std::span<const double> controls(int k) const { return row(controls_, k); }
  std::span<double> controls(int k) { return row(controls_, k); }
  /// V(X^i_k, iota_k)
  std::span<const double> running(int k) const { return row(running_, k); }
  std::span<double> running(int k) { return row(running_, k); }

 private:
  template <class V>
  static auto row_impl(V& v, std::size_t n, int k) {
    return std::span(v.data() + static_cast<std::size_t>(k) * n, n);
  }
  std::span<const double> row(const std::vector<double>& v, int k) const { return row_impl(v, n_, k); }
  std::span<double> row(std::vector<double>& v, int k) { return row_impl(v, n_, k); }

  std::size_t n_ = 0;
  TimeGrid grid_;
  std::uint64_t seed_ = 0;
  std::vector<double> positions_, drifts_, controls_, running_;
};

/// What a control policy sees at step k: the ensemble up to and including
/// step k and the interaction drift b(X^i_k, iota_k).
struct StepView {
  int step = 0;
  double time = 0.0;
  std::span<const double> positions;
  std::span<const double> interaction_drift;
  const ParticleEnsemble* history = nullptr;
};

/// A(t, x^i) from a mean-field control, interpolated in t and x.
struct TensorizedControl {
  const FieldFlow* control;
  double operator()(const StepView& v, std::size_t i) const { return control->interpolate(v.time, v.positions[i]); }
};

struct ZeroControl {
  double operator()(const StepView&, std::size_t) const { return 0.0; }
};

/// A = -b(X^i, iota): the particles diffuse freely.
struct CancelDrift {
  double operator()(const StepView& v, std::size_t i) const { return -v.interaction_drift[i]; }
};

/// Positions drawn from a grid density: a cell by inverse CDF, then a
/// uniform offset inside the cell.
inline std::vector<double> sample_grid_measure(const GridMeasure& mu, std::size_t count, const CounterRng& rng,
                                               CounterRng::Purpose purpose = CounterRng::Purpose::initial) {
  const int m = mu.cells();
  std::vector<double> cdf(static_cast<std::size_t>(m));
  double acc = 0.0;
  for (int j = 0; j < m; ++j) {
    acc += mu[static_cast<std::size_t>(j)] * mu.cell_width();
    cdf[static_cast<std::size_t>(j)] = acc;
  }
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto u = rng.uniforms(purpose, i, 0);
    const double target = u[0] * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), target);
    const auto j = std::min<std::ptrdiff_t>(it - cdf.begin(), m - 1);
    out[i] = wrap_unit((static_cast<double>(j) + u[1]) * mu.cell_width());
  }
  return out;
}

/// Resolution at which closed-form initial laws are sampled; tabulated laws
/// keep their own.
inline int sampling_cells(const DensitySpec& d) {
  return d.kind == DensitySpec::Kind::tabulated ? static_cast<int>(d.values.size()) : 4096;
}

/// Evaluates b and V at every particle for the empirical measure of `x`.
class EmpiricalField {
 public:
  explicit EmpiricalField(const ProblemSpec& spec)
      : spec_(&spec), kb_(spec.drift.pair_kernel), dv0_(spec.running.gradient_potential.derivative()),
        max_k_(spec.max_wavenumber()) {}

  void evaluate(std::span<const double> x, std::span<double> drift, std::span<double> running) {
    trig_.reset(x, max_k_);
    const Moments mom = trig_.moments(max_k_);
    const auto& rc = spec_->running;
    const auto& f = spec_->drift;
    for (std::size_t i = 0; i < x.size(); ++i) {
      drift[i] = trig_.sample(f.external_drift, i) + trig_.convolve(kb_, mom, i);
      const double q = trig_.convolve(dv0_, mom, i);
      running[i] = trig_.sample(rc.external, i) + trig_.convolve(rc.pair, mom, i) - rc.gradient_sq_coeff * q * q;
    }
  }

  /// b(x^i, mu) for an arbitrary measure given by its moments.
  void drift_against(std::span<const double> x, const Moments& mu, std::span<double> out) {
    trig_.reset(x, max_k_);
    for (std::size_t i = 0; i < x.size(); ++i)
      out[i] = trig_.sample(spec_->drift.external_drift, i) + trig_.convolve(kb_, mu, i);
  }

  /// b(x^i, iota) for the empirical measure of x itself.
  void drift_self(std::span<const double> x, std::span<double> out) {
    trig_.reset(x, max_k_);
    const Moments mom = trig_.moments(max_k_);
    for (std::size_t i = 0; i < x.size(); ++i)
      out[i] = trig_.sample(spec_->drift.external_drift, i) + trig_.convolve(kb_, mom, i);
  }

  int max_k() const { return max_k_; }

 private:
  const ProblemSpec* spec_;
  TrigSeries kb_, dv0_;
  int max_k_;
  PointTrig trig_;
};

/// One replica of the controlled particle system. `policy(view, i)` returns
/// the control of particle i at the current step.
template <class Policy>
ParticleEnsemble simulate(const ProblemSpec& spec, Policy&& policy, int particles, int steps, std::uint64_t seed) {
  spec.validate();
  const TimeGrid grid{steps, spec.horizon};
  ParticleEnsemble ens(particles, grid, seed);
  const CounterRng rng(seed);
  const auto n = static_cast<std::size_t>(particles);
  const auto x0 = sample_grid_measure(discretize(spec.initial, sampling_cells(spec.initial)), n, rng);
  std::copy(x0.begin(), x0.end(), ens.positions(0).begin());

  EmpiricalField field(spec);
  std::vector<double> b(n);
  const double dt = grid.dt(), noise = std::sqrt(2.0 * dt);
  for (int k = 0; k <= steps; ++k) {
    const auto x = ens.positions(k);
    field.evaluate(x, b, ens.running(k));
    StepView view{k, grid.time(k), x, b, &ens};
    auto a = ens.controls(k);
    auto u = ens.drifts(k);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = policy(view, i);
      u[i] = a[i] + b[i];
    }
    if (k == steps) break;
    auto next = ens.positions(k + 1);
    for (std::size_t i = 0; i < n; ++i) {
      const double xi = rng.normal(CounterRng::Purpose::noise, i, static_cast<std::uint32_t>(k));
      // drift is recorded before the wrap
      next[i] = wrap_unit(x[i] + u[i] * dt + noise * xi);
    }
  }
  return ens;
}

/// Seed of replica r.
inline std::uint64_t replica_seed(std::uint64_t seed, std::uint64_t replica) { return seed ^ replica; }

/// Positions of `subset` (all particles when empty) at step k.
inline EmpiricalMeasure empirical_marginal(const ParticleEnsemble& ens, int k, std::span<const std::size_t> subset = {}) {
  detail::require(k >= 0 && k <= ens.steps(), "empirical_marginal: step out of range");
  const auto x = ens.positions(k);
  if (subset.empty()) return EmpiricalMeasure(std::vector<double>(x.begin(), x.end()));
  std::vector<double> pts;
  pts.reserve(subset.size());
  for (std::size_t i : subset) {
    detail::require(i < x.size(), "empirical_marginal: particle index out of range");
    pts.push_back(x[i]);
  }
  return EmpiricalMeasure(std::move(pts));
}

// ------------------------------------------------------------------ projection

/// Bin-averaged velocity with per-cell sample counts. Cells below the
/// sample threshold are listed in `sparse` and hold zero.
struct ConditionalVelocity {
  FieldFlow velocity;
  GridSeries counts;
  std::vector<std::pair<int, int>> sparse;  // (step, cell)
};

namespace detail {

inline ConditionalVelocity bin_average(const TimeGrid& grid, int cells, std::size_t min_samples, bool strict,
                                       const std::function<void(int, std::vector<double>&, std::vector<double>&)>& fill) {
  ConditionalVelocity out{FieldFlow(grid, cells, FieldKind::velocity), GridSeries(grid, cells), {}};
  std::vector<double> sum(static_cast<std::size_t>(cells)), cnt(sum.size());
  for (int k = 0; k <= grid.steps; ++k) {
    std::fill(sum.begin(), sum.end(), 0.0);
    std::fill(cnt.begin(), cnt.end(), 0.0);
    fill(k, sum, cnt);
    for (int j = 0; j < cells; ++j) {
      const double c = cnt[static_cast<std::size_t>(j)];
      out.counts.at(k, j) = c;
      if (c < static_cast<double>(min_samples)) {
        out.sparse.emplace_back(k, j);
        out.velocity.at(k, j) = 0.0;
      } else {
        out.velocity.at(k, j) = sum[static_cast<std::size_t>(j)] / c;
      }
    }
  }
  if (strict && !out.sparse.empty()) {
    std::string list;
    for (std::size_t q = 0; q < std::min<std::size_t>(out.sparse.size(), 8); ++q)
      list += " (" + std::to_string(out.sparse[q].first) + "," + std::to_string(out.sparse[q].second) + ")";
    throw Error(ErrorCode::sparse_cells, std::to_string(out.sparse.size()) + " (step, cell) bins below " +
                                             std::to_string(min_samples) + " samples:" + list +
                                             (out.sparse.size() > 8 ? " ..." : ""));
  }
  return out;
}

}  // namespace detail

/// Average recorded drift over the particles of each cell at each step,
/// pooled over replicas.
inline ConditionalVelocity conditional_velocity(std::span<const ParticleEnsemble> ensembles, int cells,
                                                std::size_t min_samples = 10, bool strict = true) {
  detail::require(!ensembles.empty(), "conditional_velocity: no ensembles");
  detail::require(cells >= 2, "conditional_velocity: need at least two cells");
  const TimeGrid grid = ensembles.front().time_grid();
  for (const auto& e : ensembles)
    detail::require(e.steps() == grid.steps && e.time_grid().horizon == grid.horizon,
                    "conditional_velocity: ensembles use different time grids");
  return detail::bin_average(grid, cells, min_samples, strict, [&](int k, auto& sum, auto& cnt) {
    for (const auto& e : ensembles) {
      const auto x = e.positions(k);
      const auto u = e.drifts(k);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const auto j = static_cast<std::size_t>(cell_of(x[i], cells));
        sum[j] += u[i];
        cnt[j] += 1.0;
      }
    }
  });
}

inline ConditionalVelocity conditional_velocity(const ParticleEnsemble& ens, int cells, std::size_t min_samples = 10,
                                                bool strict = true) {
  return conditional_velocity(std::span<const ParticleEnsemble>(&ens, 1), cells, min_samples, strict);
}

}  // namespace mfc
