#pragma once

// Two-particle system on the product torus. With y = (y1, y2) and the
// two-point empirical measure iota = (delta_y1 + delta_y2) / 2,
//
//   d_t rho = lap rho - div(u rho),   u_i = A_i(t, y) + b(y_i, iota)
//
// Controls and velocities are pairs of fields on the M x M grid. The
// Fokker-Planck step is split by coordinate: a theta-step along y1 for every
// fixed y2, then along y2. Every quantity is normalized per particle.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "mfc/crank_nicolson.hpp"
#include "mfc/descent.hpp"
#include "mfc/dynamics.hpp"
#include "mfc/energy.hpp"
#include "mfc/errors.hpp"
#include "mfc/flow.hpp"
#include "mfc/measure.hpp"
#include "mfc/model.hpp"
#include "mfc/solver.hpp"

namespace mfc {

inline constexpr int pair_particles = 2;

/// K+1 snapshots of an M x M array, row-major (y1 outer).
class PairSeries {
 public:
  PairSeries() = default;
  PairSeries(TimeGrid grid, int cells, double fill = 0.0)
      : grid_(grid), cells_(cells),
        values_(static_cast<std::size_t>(grid.steps + 1) * static_cast<std::size_t>(cells) *
                    static_cast<std::size_t>(cells),
                fill) {
    detail::require(grid.steps >= 1 && grid.horizon > 0.0, "pair flow: need K >= 1 and T > 0");
    detail::require(cells >= 3, "pair flow: need at least three cells per axis");
  }

  const TimeGrid& time_grid() const { return grid_; }
  int steps() const { return grid_.steps; }
  int cells() const { return cells_; }
  double cell_width() const { return 1.0 / cells_; }
  std::size_t plane() const { return static_cast<std::size_t>(cells_) * static_cast<std::size_t>(cells_); }

  std::span<double> row(int k) { return {values_.data() + static_cast<std::size_t>(k) * plane(), plane()}; }
  std::span<const double> row(int k) const { return {values_.data() + static_cast<std::size_t>(k) * plane(), plane()}; }

  double& at(int k, int i, int j) { return values_[index(k, i, j)]; }
  double at(int k, int i, int j) const { return values_[index(k, i, j)]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  bool same_shape(const PairSeries& o) const {
    return grid_.steps == o.grid_.steps && grid_.horizon == o.grid_.horizon && cells_ == o.cells_;
  }

 private:
  std::size_t index(int k, int i, int j) const {
    return static_cast<std::size_t>(k) * plane() + static_cast<std::size_t>(i) * static_cast<std::size_t>(cells_) +
           static_cast<std::size_t>(j);
  }

  TimeGrid grid_;
  int cells_ = 0;
  std::vector<double> values_;
};

class PairMeasureFlow : public PairSeries {
 public:
  using PairSeries::PairSeries;

  GridMeasure2 measure(int k) const {
    return GridMeasure2(cells(), std::vector<double>(row(k).begin(), row(k).end()));
  }
};

/// Two-component field; `first` acts along y1, `second` along y2.
struct PairField {
  PairSeries first;
  PairSeries second;
  FieldKind kind = FieldKind::control;

  PairField() = default;
  PairField(TimeGrid grid, int cells, FieldKind k) : first(grid, cells), second(grid, cells), kind(k) {}
};

// ------------------------------------------------------------------ model

/// Drift, running potential and terminal weight of the pair system sampled
/// on the product grid. None of them depends on the density.
class PairModel {
 public:
  PairModel(const ProblemSpec& spec, int cells) : spec_(spec), cells_(cells) {
    spec.validate();
    detail::require(cells >= 3, "pair model: need at least three cells per axis");
    const std::size_t n = static_cast<std::size_t>(cells) * static_cast<std::size_t>(cells);
    b1_.resize(n);
    b2_.resize(n);
    div_.resize(n);
    v_.resize(n);
    g_.assign(n, 0.0);
    const auto& f = spec.drift;
    const TrigSeries db0 = f.external_drift.derivative(), dkb = f.pair_kernel.derivative();
    const double kb0 = f.pair_kernel(0.0);
    const double h = 1.0 / cells;
    const RunningCost& rc = spec.running;
    const TrigSeries dv0 = rc.gradient_potential.derivative();
    auto potential = [&](double x, double other) {
      const double q = 0.5 * (dv0(0.0) + dv0(x - other));
      return rc.external(x) + 0.5 * (rc.pair(0.0) + rc.pair(x - other)) - rc.gradient_sq_coeff * q * q;
    };
    const bool linear_terminal = spec.mode == Mode::finite_horizon && spec.terminal.kind == TerminalCost::Kind::linear;
    for (int i = 0; i < cells; ++i) {
      const double x = (i + 0.5) * h;
      for (int j = 0; j < cells; ++j) {
        const double y = (j + 0.5) * h;
        const std::size_t at = static_cast<std::size_t>(i * cells + j);
        b1_[at] = f.external_drift(x) + 0.5 * (kb0 + f.pair_kernel(x - y));
        b2_[at] = f.external_drift(y) + 0.5 * (kb0 + f.pair_kernel(y - x));
        // the empirical measure moves with each coordinate
        div_[at] = db0(x) + db0(y) + 0.5 * (dkb(x - y) + dkb(y - x));
        v_[at] = 0.5 * (potential(x, y) + potential(y, x));
        if (linear_terminal) g_[at] = 0.5 * (spec.terminal.weight(x) + spec.terminal.weight(y));
      }
    }
  }

  const ProblemSpec& spec() const { return spec_; }
  int cells() const { return cells_; }
  double cell_width() const { return 1.0 / cells_; }

  std::span<const double> drift_first() const { return b1_; }
  std::span<const double> drift_second() const { return b2_; }
  std::span<const double> drift_divergence() const { return div_; }
  /// (V(y1, iota) + V(y2, iota)) / 2
  std::span<const double> running_potential() const { return v_; }
  /// (g(y1) + g(y2)) / 2, zero unless a linear terminal cost is active.
  std::span<const double> terminal_weight() const { return g_; }

  GridMeasure2 initial_measure() const {
    const GridMeasure mu = discretize(spec_.initial, cells_);
    return GridMeasure2::product(mu, mu);
  }
  GridMeasure2 target_measure() const {
    detail::require(spec_.target.has_value(), "problem: no target law");
    const GridMeasure mu = discretize(*spec_.target, cells_);
    return GridMeasure2::product(mu, mu);
  }

 private:
  ProblemSpec spec_;
  int cells_ = 0;
  std::vector<double> b1_, b2_, div_, v_, g_;
};

// ------------------------------------------------------------------ helpers

/// mu (x) mu
inline PairMeasureFlow tensorize(const MeasureFlow& flow) {
  PairMeasureFlow out(flow.time_grid(), flow.cells());
  const int m = flow.cells();
  for (int k = 0; k <= flow.steps(); ++k)
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) out.at(k, i, j) = flow.at(k, i) * flow.at(k, j);
  return out;
}

/// (f(t, y1), f(t, y2))
inline PairField tensorize(const FieldFlow& field) {
  PairField out(field.time_grid(), field.cells(), field.kind());
  const int m = field.cells();
  for (int k = 0; k <= field.steps(); ++k)
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        out.first.at(k, i, j) = field.at(k, i);
        out.second.at(k, i, j) = field.at(k, j);
      }
  return out;
}

/// Fisher information of an M x M density given as raw cell values.
inline double fisher_information_pair(std::span<const double> rho, int cells, double floor = default_density_floor) {
  const double h = 1.0 / cells, inv = 0.5 / h;
  std::vector<double> terms(rho.size());
  auto at = [&](int i, int j) { return rho[static_cast<std::size_t>(i * cells + j)]; };
  for (int i = 0; i < cells; ++i) {
    const int ip = (i + 1) % cells, im = (i + cells - 1) % cells;
    for (int j = 0; j < cells; ++j) {
      const int jp = (j + 1) % cells, jm = (j + cells - 1) % cells;
      const double d1 = (at(ip, j) - at(im, j)) * inv;
      const double d2 = (at(i, jp) - at(i, jm)) * inv;
      terms[static_cast<std::size_t>(i * cells + j)] = (d1 * d1 + d2 * d2) / std::max(at(i, j), floor);
    }
  }
  return h * h * pairwise_sum(terms);
}

/// Swaps particle labels: rho(y1, y2) -> rho(y2, y1), and for fields also
/// exchanges the two components.
inline PairSeries swap_labels(const PairSeries& s) {
  PairSeries out(s.time_grid(), s.cells());
  const int m = s.cells();
  for (int k = 0; k <= s.steps(); ++k)
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) out.at(k, i, j) = s.at(k, j, i);
  return out;
}

/// Label-averaged flow: densities are averaged with their swap, and the
/// velocity is the one carrying the averaged momentum w rho.
inline std::pair<PairMeasureFlow, PairField> symmetrize_pair_flow(const PairMeasureFlow& flow, const PairField& w) {
  detail::require(w.kind == FieldKind::velocity, "symmetrize: field must be tagged VELOCITY");
  detail::require(flow.same_shape(w.first) && flow.same_shape(w.second), "symmetrize: shapes differ");
  const int m = flow.cells();
  PairMeasureFlow rho(flow.time_grid(), m);
  PairField v(flow.time_grid(), m, FieldKind::velocity);
  for (int k = 0; k <= flow.steps(); ++k)
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        const double a = flow.at(k, i, j), b = flow.at(k, j, i);
        const double avg = 0.5 * (a + b);
        rho.at(k, i, j) = avg;
        // momentum of component 1 at (i, j) pairs with component 2 at (j, i)
        const double p1 = 0.5 * (w.first.at(k, i, j) * a + w.second.at(k, j, i) * b);
        const double p2 = 0.5 * (w.second.at(k, i, j) * a + w.first.at(k, j, i) * b);
        v.first.at(k, i, j) = avg > 0.0 ? p1 / avg : 0.0;
        v.second.at(k, i, j) = avg > 0.0 ? p2 / avg : 0.0;
      }
  return {std::move(rho), std::move(v)};
}

/// Velocity w_i = A_i + b(y_i, iota) - d_i log rho.
inline PairField pair_control_to_velocity(const PairModel& model, const PairMeasureFlow& flow, const PairField& control,
                                          double floor = default_density_floor) {
  detail::require(control.kind == FieldKind::control, "pair velocity: field must be tagged CONTROL");
  const int m = flow.cells();
  const double inv = 0.5 * m;
  PairField w(flow.time_grid(), m, FieldKind::velocity);
  const auto b1 = model.drift_first(), b2 = model.drift_second();
  for (int k = 0; k <= flow.steps(); ++k)
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        const double r = std::max(flow.at(k, i, j), floor);
        const double d1 = (flow.at(k, (i + 1) % m, j) - flow.at(k, (i + m - 1) % m, j)) * inv;
        const double d2 = (flow.at(k, i, (j + 1) % m) - flow.at(k, i, (j + m - 1) % m)) * inv;
        const std::size_t at = static_cast<std::size_t>(i * m + j);
        w.first.at(k, i, j) = control.first.at(k, i, j) + b1[at] - d1 / r;
        w.second.at(k, i, j) = control.second.at(k, i, j) + b2[at] - d2 / r;
      }
  return w;
}

// ------------------------------------------------------------------ dynamics

struct PairTape {
  PairMeasureFlow flow;
  PairMeasureFlow half;  // after the y1 sweep of each step; row k is the half step k -> k+1
  PairField velocity;    // u_i = A_i + b(y_i, iota)
};

namespace detail {

/// Copies line `line` of a plane along axis 0 (fixed y2) or axis 1 (fixed y1).
inline void gather(std::span<const double> plane, int cells, int axis, int line, std::span<double> out) {
  for (int t = 0; t < cells; ++t)
    out[static_cast<std::size_t>(t)] =
        plane[static_cast<std::size_t>(axis == 0 ? t * cells + line : line * cells + t)];
}

inline void scatter(std::span<const double> in, int cells, int axis, int line, std::span<double> plane,
                    bool accumulate) {
  for (int t = 0; t < cells; ++t) {
    double& dst = plane[static_cast<std::size_t>(axis == 0 ? t * cells + line : line * cells + t)];
    dst = accumulate ? dst + in[static_cast<std::size_t>(t)] : in[static_cast<std::size_t>(t)];
  }
}

}  // namespace detail

inline PairTape solve_pair_fokker_planck_tape(const PairModel& model, const PairField& control,
                                              const FokkerPlanckOptions& opts = {}) {
  detail::require(control.kind == FieldKind::control, "pair fokker-planck: field must be tagged CONTROL");
  const int m = model.cells();
  const TimeGrid grid = control.first.time_grid();
  detail::require(control.first.cells() == m && control.second.same_shape(control.first),
                  "pair fokker-planck: control shape differs from the model grid");
  const double h = model.cell_width();

  PairTape tape{PairMeasureFlow(grid, m), PairMeasureFlow(grid, m), PairField(grid, m, FieldKind::velocity)};
  const auto b1 = model.drift_first(), b2 = model.drift_second();
  for (int k = 0; k <= grid.steps; ++k) {
    auto u1 = tape.velocity.first.row(k), u2 = tape.velocity.second.row(k);
    const auto a1 = control.first.row(k), a2 = control.second.row(k);
    for (std::size_t q = 0; q < u1.size(); ++q) {
      u1[q] = a1[q] + b1[q];
      u2[q] = a2[q] + b2[q];
    }
    detail::check_velocity(u1, grid, m, opts.cfl);
    detail::check_velocity(u2, grid, m, opts.cfl);
  }
  const GridMeasure2 init = model.initial_measure();
  std::copy(init.density().begin(), init.density().end(), tape.flow.row(0).begin());

  CrankNicolsonStep step(m, grid.dt(), opts.theta);
  const auto ms = static_cast<std::size_t>(m);
  std::vector<double> uo(ms), un(ms), ro(ms), rn(ms);
  for (int n = 0; n < grid.steps; ++n) {
    for (int axis = 0; axis < 2; ++axis) {
      const PairSeries& vel = axis == 0 ? tape.velocity.first : tape.velocity.second;
      const auto src = axis == 0 ? tape.flow.row(n) : tape.half.row(n);
      auto dst = axis == 0 ? tape.half.row(n) : tape.flow.row(n + 1);
      for (int line = 0; line < m; ++line) {
        detail::gather(vel.row(n), m, axis, line, uo);
        detail::gather(vel.row(n + 1), m, axis, line, un);
        detail::gather(src, m, axis, line, ro);
        step.advance(uo, un, ro, rn);
        detail::scatter(rn, m, axis, line, dst, false);
      }
    }
    detail::check_density(tape.flow.row(n + 1), n + 1, h * h, opts.mass_tolerance);
  }
  return tape;
}

inline PairMeasureFlow solve_pair_fokker_planck(const PairModel& model, const PairField& control,
                                                const FokkerPlanckOptions& opts = {}) {
  return solve_pair_fokker_planck_tape(model, control, opts).flow;
}

// ------------------------------------------------------------------ cost and energy

/// Per-particle cost of a pair flow solved for `control`.
inline CostReport pair_cost_of_flow(const PairModel& model, const PairMeasureFlow& flow, const PairField& control) {
  const TimeGrid& grid = flow.time_grid();
  const double h2 = flow.cell_width() * flow.cell_width();
  const double inv_n = 1.0 / pair_particles;
  const auto v = model.running_potential();
  std::vector<double> kin, run;
  for (int k = 0; k <= grid.steps; ++k) {
    const auto rho = flow.row(k);
    const auto a1 = control.first.row(k), a2 = control.second.row(k);
    double s_kin = 0.0, s_run = 0.0;
    for (std::size_t q = 0; q < rho.size(); ++q) {
      s_kin += (a1[q] * a1[q] + a2[q] * a2[q]) * rho[q];
      s_run += v[q] * rho[q];
    }
    kin.push_back(grid.weight(k) * 0.5 * inv_n * h2 * s_kin);
    run.push_back(grid.weight(k) * h2 * s_run);
  }
  CostReport r;
  r.control_kinetic = pairwise_sum(kin);
  r.running = pairwise_sum(run);
  const auto last = flow.row(grid.steps);
  if (model.spec().mode == Mode::schrodinger) {
    const GridMeasure2 target = model.target_measure();
    r.terminal_kl = inv_n * kl_grid(last, target.density(), h2);
  } else {
    const auto g = model.terminal_weight();
    double s = 0.0;
    for (std::size_t q = 0; q < last.size(); ++q) s += g[q] * last[q];
    r.terminal = h2 * s;
  }
  r.total = r.control_kinetic + r.running + r.terminal;
  return r;
}

inline double eval_cost_pair(const PairModel& model, const PairField& control, const FokkerPlanckOptions& opts = {}) {
  return pair_cost_of_flow(model, solve_pair_fokker_planck(model, control, opts), control).total;
}

/// Per-particle energy of a pair flow and velocity, itemized like the
/// one-particle report. The empirical-measure drift and potential are fixed
/// functions of y, so only the kinetic, Fisher and entropy terms are
/// nonlinear in the flow.
inline EnergyReport eval_energy_pair(const PairModel& model, const PairMeasureFlow& flow, const PairField& w,
                                     double floor = default_density_floor) {
  detail::require(w.kind == FieldKind::velocity, "eval_energy_pair: field must be tagged VELOCITY");
  detail::require(flow.same_shape(w.first) && flow.same_shape(w.second) && flow.cells() == model.cells(),
                  "eval_energy_pair: shapes differ");
  const TimeGrid& grid = flow.time_grid();
  const int m = flow.cells();
  const double h2 = flow.cell_width() * flow.cell_width();
  const double inv_n = 1.0 / pair_particles;
  const auto b1 = model.drift_first(), b2 = model.drift_second(), dv = model.drift_divergence();
  const auto v = model.running_potential();
  const std::size_t nodes = static_cast<std::size_t>(grid.steps + 1);
  std::vector<double> kin(nodes), bsq(nodes), fis(nodes), crs(nodes), dvt(nodes), run(nodes);
  for (int k = 0; k <= grid.steps; ++k) {
    const auto rho = flow.row(k);
    const auto w1 = w.first.row(k), w2 = w.second.row(k);
    double s_kin = 0.0, s_bsq = 0.0, s_crs = 0.0, s_div = 0.0, s_run = 0.0;
    for (std::size_t q = 0; q < rho.size(); ++q) {
      s_kin += (w1[q] * w1[q] + w2[q] * w2[q]) * rho[q];
      s_bsq += (b1[q] * b1[q] + b2[q] * b2[q]) * rho[q];
      s_crs += (w1[q] * b1[q] + w2[q] * b2[q]) * rho[q];
      s_div += dv[q] * rho[q];
      s_run += v[q] * rho[q];
    }
    const double wt = grid.weight(k);
    const auto ks = static_cast<std::size_t>(k);
    kin[ks] = wt * 0.5 * inv_n * h2 * s_kin;
    bsq[ks] = wt * 0.5 * inv_n * h2 * s_bsq;
    crs[ks] = -wt * inv_n * h2 * s_crs;
    dvt[ks] = wt * inv_n * h2 * s_div;
    fis[ks] = wt * 0.5 * inv_n * fisher_information_pair(rho, m, floor);
    run[ks] = wt * h2 * s_run;
  }
  EnergyReport r;
  r.kinetic = pairwise_sum(kin);
  r.drift_sq = pairwise_sum(bsq);
  r.fisher_half = pairwise_sum(fis);
  r.entropy_diff = inv_n * (entropy(flow.row(grid.steps), h2) - entropy(flow.row(0), h2));
  r.cross = pairwise_sum(crs);
  r.div_term = pairwise_sum(dvt);
  r.running = pairwise_sum(run);
  if (model.spec().mode == Mode::finite_horizon) {
    const auto g = model.terminal_weight();
    const auto last = flow.row(grid.steps);
    double s = 0.0;
    for (std::size_t q = 0; q < last.size(); ++q) s += g[q] * last[q];
    r.terminal = h2 * s;
  }
  r.total = r.sum_of_parts();
  return r;
}

// ------------------------------------------------------------------ adjoint

struct PairCostGradient {
  double objective = 0.0;
  CostReport report;
  PairField gradient;
  PairMeasureFlow flow;
};

inline PairCostGradient pair_adjoint_gradient(const PairModel& model, const PairField& control,
                                              const AdjointOptions& opts = {}) {
  PairTape tape = solve_pair_fokker_planck_tape(model, control, opts.forward);
  const TimeGrid grid = control.first.time_grid();
  const int m = model.cells();
  const auto ms = static_cast<std::size_t>(m);
  const double h2 = model.cell_width() * model.cell_width();
  const double inv_n = 1.0 / pair_particles;
  const ProblemSpec& spec = model.spec();

  PairCostGradient out;
  out.report = pair_cost_of_flow(model, tape.flow, control);
  out.objective = objective_of(out.report, spec.mode, opts.terminal_penalty);
  out.gradient = PairField(grid, m, FieldKind::control);

  PairSeries rho_bar(grid, m);
  const auto v = model.running_potential();
  for (int k = 0; k <= grid.steps; ++k) {
    const double wt = grid.weight(k);
    const auto rho = tape.flow.row(k);
    const auto a1 = control.first.row(k), a2 = control.second.row(k);
    auto rb = rho_bar.row(k);
    auto g1 = out.gradient.first.row(k), g2 = out.gradient.second.row(k);
    for (std::size_t q = 0; q < rho.size(); ++q) {
      rb[q] = wt * h2 * (0.5 * inv_n * (a1[q] * a1[q] + a2[q] * a2[q]) + v[q]);
      g1[q] = wt * h2 * inv_n * a1[q] * rho[q];
      g2[q] = wt * h2 * inv_n * a2[q] * rho[q];
    }
  }
  {
    auto rb = rho_bar.row(grid.steps);
    const auto rho = tape.flow.row(grid.steps);
    if (spec.mode == Mode::schrodinger) {
      if (opts.terminal_penalty != 0.0) {
        const GridMeasure2 target = model.target_measure();
        const auto t = target.density();
        for (std::size_t q = 0; q < rb.size(); ++q)
          rb[q] += opts.terminal_penalty * inv_n * h2 * (std::log(std::max(rho[q], 1e-300) / t[q]) + 1.0);
      }
    } else {
      const auto g = model.terminal_weight();
      for (std::size_t q = 0; q < rb.size(); ++q) rb[q] += h2 * g[q];
    }
  }

  CrankNicolsonStep step(m, grid.dt(), opts.forward.theta);
  std::vector<double> uo(ms), un(ms), ro(ms), rn(ms), rbn(ms), lam(ms), uob(ms), unb(ms), rbo(ms);
  std::vector<double> half_bar(rho_bar.plane());
  for (int n = grid.steps - 1; n >= 0; --n) {
    std::fill(half_bar.begin(), half_bar.end(), 0.0);
    // reverse the y2 sweep, then the y1 sweep
    for (int axis = 1; axis >= 0; --axis) {
      const PairSeries& vel = axis == 0 ? tape.velocity.first : tape.velocity.second;
      PairSeries& grad = axis == 0 ? out.gradient.first : out.gradient.second;
      const auto src = axis == 0 ? tape.flow.row(n) : tape.half.row(n);
      const auto dst = axis == 0 ? tape.half.row(n) : tape.flow.row(n + 1);
      const std::span<const double> dst_bar = axis == 0 ? std::span<const double>(half_bar) : rho_bar.row(n + 1);
      std::vector<double> src_bar_acc(rho_bar.plane(), 0.0);
      for (int line = 0; line < m; ++line) {
        detail::gather(vel.row(n), m, axis, line, uo);
        detail::gather(vel.row(n + 1), m, axis, line, un);
        detail::gather(src, m, axis, line, ro);
        detail::gather(dst, m, axis, line, rn);
        detail::gather(dst_bar, m, axis, line, rbn);
        std::fill(uob.begin(), uob.end(), 0.0);
        std::fill(unb.begin(), unb.end(), 0.0);
        std::fill(rbo.begin(), rbo.end(), 0.0);
        step.reverse(uo, un, ro, rn, rbn, lam, uob, unb, rbo);
        detail::scatter(uob, m, axis, line, grad.row(n), true);
        detail::scatter(unb, m, axis, line, grad.row(n + 1), true);
        detail::scatter(rbo, m, axis, line, src_bar_acc, false);
      }
      if (axis == 1) {
        half_bar = std::move(src_bar_acc);
      } else {
        auto rb = rho_bar.row(n);
        for (std::size_t q = 0; q < rb.size(); ++q) rb[q] += src_bar_acc[q];
      }
    }
  }
  out.flow = std::move(tape.flow);
  return out;
}

// ------------------------------------------------------------------ direct solve

struct PairSolveResult {
  PairField control;
  PairMeasureFlow flow;
  double theta = 0.0;
  int iterations = 0;
  double grad_norm = 0.0;
  double terminal_kl = 0.0;
  bool converged = false;
  std::vector<double> objective_history;
  std::string message;
};

namespace detail {

using PairPoint = DescentPoint<PairCostGradient>;

/// Orthogonal projection onto label-symmetric pairs, A_1(y1, y2) = A_2(y2, y1).
inline void symmetrize_components(std::span<double> x, int steps, int cells) {
  const std::size_t plane = static_cast<std::size_t>(cells) * static_cast<std::size_t>(cells);
  const std::size_t half = static_cast<std::size_t>(steps + 1) * plane;
  for (int k = 0; k <= steps; ++k)
    for (int i = 0; i < cells; ++i)
      for (int j = 0; j < cells; ++j) {
        const std::size_t a = static_cast<std::size_t>(k) * plane + static_cast<std::size_t>(i * cells + j);
        const std::size_t b = static_cast<std::size_t>(k) * plane + static_cast<std::size_t>(j * cells + i);
        if (a > b) continue;
        const double first = 0.5 * (x[a] + x[half + b]);
        const double second = 0.5 * (x[half + a] + x[b]);
        x[a] = first;
        x[half + b] = first;
        x[half + a] = second;
        x[b] = second;
      }
}

inline void symmetrize_control(std::span<double> x, int steps, int cells, double bound) {
  symmetrize_components(x, steps, cells);
  for (double& v : x) v = std::clamp(v, -bound, bound);
}

inline PairField unpack(std::span<const double> x, const TimeGrid& grid, int cells) {
  PairField a(grid, cells, FieldKind::control);
  const std::size_t half = a.first.values().size();
  std::copy(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(half), a.first.values().begin());
  std::copy(x.begin() + static_cast<std::ptrdiff_t>(half), x.end(), a.second.values().begin());
  return a;
}

inline std::optional<PairPoint> evaluate_pair(const PairModel& model, const TimeGrid& grid, std::span<const double> x,
                                              const AdjointOptions& aopts, double offset) {
  const PairField control = unpack(x, grid, model.cells());
  try {
    PairPoint p;
    p.payload = pair_adjoint_gradient(model, control, aopts);
    p.x.assign(x.begin(), x.end());
    const auto g1 = p.payload.gradient.first.values(), g2 = p.payload.gradient.second.values();
    p.gradient.assign(g1.begin(), g1.end());
    p.gradient.insert(p.gradient.end(), g2.begin(), g2.end());
    const double h2 = model.cell_width() * model.cell_width();
    const PairMeasureFlow& flow = p.payload.flow;
    std::vector<double> metric(flow.values().size());
    for (int k = 0; k <= grid.steps; ++k) {
      const double wt = grid.weight(k) * h2 / pair_particles;
      const auto rho = flow.row(k);
      for (std::size_t q = 0; q < rho.size(); ++q)
        metric[static_cast<std::size_t>(k) * flow.plane() + q] = wt * (rho[q] + offset);
    }
    p.metric = metric;
    p.metric.insert(p.metric.end(), metric.begin(), metric.end());
    // the split step is not exactly label-symmetric; restrict gradient and
    // metric to the symmetric subspace the iterates live in
    symmetrize_components(p.gradient, grid.steps, model.cells());
    symmetrize_components(p.metric, grid.steps, model.cells());
    p.objective = p.payload.objective;
    return p;
  } catch (const CflViolation&) {
    return std::nullopt;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::positivity_loss) return std::nullopt;
    throw;
  }
}

}  // namespace detail

/// Direct minimization of the two-particle cost over symmetric Markovian
/// controls A(t, y1, y2). Meant for coarse grids.
inline PairSolveResult solve_pair_direct(const ProblemSpec& spec, int cells, int steps, const SolveOptions& opts = {}) {
  detail::require(cells <= 64 && steps <= 100, "pair solve: grids are limited to M <= 64 and K <= 100");
  const PairModel model(spec, cells);
  const TimeGrid grid{steps, spec.horizon};
  const double h = model.cell_width();
  const double bound = std::min(0.98 * opts.forward.cfl * h / grid.dt(), 1.9 / h) - spec.drift_bound();
  if (bound <= 0.0) {
    const int required = static_cast<int>(std::ceil(grid.horizon * spec.drift_bound() / (0.98 * opts.forward.cfl * h))) + 1;
    throw CflViolation("drift alone exceeds the CFL bound", required);
  }

  PairField start(grid, cells, FieldKind::control);
  switch (opts.init) {
    case InitialControl::heat_flow: {
      // -b(y_i, iota) cancels the drift exactly
      const auto b1 = model.drift_first(), b2 = model.drift_second();
      for (int k = 0; k <= steps; ++k) {
        auto a1 = start.first.row(k), a2 = start.second.row(k);
        for (std::size_t q = 0; q < a1.size(); ++q) {
          a1[q] = -b1[q];
          a2[q] = -b2[q];
        }
      }
      break;
    }
    case InitialControl::zero: break;
    case InitialControl::random: {
      const FieldFlow r = random_control(grid, cells, opts.seed, opts.random_amplitude);
      start = tensorize(r);
      start.kind = FieldKind::control;
      break;
    }
    case InitialControl::given:
      throw Error(ErrorCode::invalid_argument, "pair solve: a given initial control is not supported");
  }
  std::vector<double> x(start.first.values().begin(), start.first.values().end());
  x.insert(x.end(), start.second.values().begin(), start.second.values().end());
  detail::symmetrize_control(x, steps, cells, bound);

  std::vector<double> penalties{0.0};
  if (spec.mode == Mode::schrodinger) {
    detail::require(!opts.penalty_schedule.empty(), "pair solve: empty penalty schedule");
    penalties = opts.penalty_schedule;
  }
  AdjointOptions aopts;
  aopts.forward = opts.forward;
  const DescentOptions dopts = detail::descent_options(opts, bound);
  auto project = [&](std::vector<double>& v) { detail::symmetrize_control(v, steps, cells, bound); };
  DescentLog log;
  std::optional<detail::PairPoint> current;
  for (double penalty : penalties) {
    aopts.terminal_penalty = penalty;
    auto evaluate = [&](std::span<const double> v) {
      return detail::evaluate_pair(model, grid, v, aopts, opts.density_offset);
    };
    current = evaluate(current ? std::span<const double>(current->x) : std::span<const double>(x));
    if (!current) throw Error(ErrorCode::invalid_argument, "pair solve: initial control is not admissible");
    log.objective_history.push_back(current->objective);
    log.message.clear();
    current = descend(std::move(*current), evaluate, project, dopts, log);
    if (spec.mode == Mode::schrodinger && current->payload.report.terminal_kl < opts.terminal_tol &&
        current->grad_norm < opts.tol)
      break;
  }

  PairSolveResult result;
  result.control = detail::unpack(current->x, grid, cells);
  result.flow = std::move(current->payload.flow);
  result.theta = current->payload.report.total;
  result.terminal_kl = current->payload.report.terminal_kl;
  result.grad_norm = current->grad_norm;
  result.iterations = log.iterations;
  result.objective_history = std::move(log.objective_history);
  result.converged = result.grad_norm < opts.tol &&
                     (spec.mode == Mode::finite_horizon || result.terminal_kl < opts.terminal_tol);
  if (result.converged) result.message = "converged";
  else if (result.grad_norm < opts.tol) result.message = "terminal mismatch above tolerance after the last penalty stage";
  else result.message = log.message.empty() ? "iteration limit reached" : log.message;
  return result;
}

}  // namespace mfc
