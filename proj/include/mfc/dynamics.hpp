#pragma once

// Controlled mean-field Fokker-Planck equation
//
//   d_t rho = rho_xx - ( (A + b(., rho)) rho )_x
//
// advanced with the theta-scheme of crank_nicolson.hpp. The implicit side
// uses the drift of the new density, b(rho^{n+1}); each step is solved by a
// Picard iteration on that dependence.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mfc/crank_nicolson.hpp"
#include "mfc/errors.hpp"
#include "mfc/flow.hpp"
#include "mfc/measure.hpp"
#include "mfc/model.hpp"

namespace mfc {

struct FokkerPlanckOptions {
  double theta = 0.5;
  double cfl = 0.4;
  double picard_tolerance = 1e-14;
  int max_picard = 200;
  double mass_tolerance = 1e-12;
};

namespace detail {

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline void check_velocity(std::span<const double> u, const TimeGrid& grid, int cells, double cfl) {
  const double umax = max_abs(u);
  const double h = 1.0 / cells;
  if (!std::isfinite(umax)) throw Error(ErrorCode::invalid_argument, "velocity is not finite");
  if (umax * h >= 2.0)
    throw Error(ErrorCode::invalid_argument, "cell Peclet number |u| h / 2 reaches 1; refine the grid");
  if (grid.dt() * umax > cfl * h) {
    const int required = static_cast<int>(std::ceil(grid.horizon * umax / (cfl * h)));
    throw CflViolation("dt = " + std::to_string(grid.dt()) + " exceeds " + std::to_string(cfl) +
                           " h / max|u|; need K >= " + std::to_string(required),
                       required);
  }
}

inline void check_density(std::span<const double> rho, int step, double h, double mass_tolerance) {
  double mass = 0.0;
  for (double v : rho) {
    if (!(v >= 0.0)) throw Error(ErrorCode::positivity_loss, "negative density at step " + std::to_string(step));
    mass += v;
  }
  if (std::abs(h * mass - 1.0) > mass_tolerance)
    throw Error(ErrorCode::positivity_loss, "mass drift at step " + std::to_string(step));
}

}  // namespace detail

/// Forward solution together with the total velocities used by each step.
struct FokkerPlanckTape {
  MeasureFlow flow;
  GridSeries velocity;  // u^n = A^n + b(rho^n)
  int picard_iterations = 0;
};

inline FokkerPlanckTape solve_fokker_planck_tape(const GridModel& model, const FieldFlow& control,
                                                 const GridMeasure& initial, const FokkerPlanckOptions& opts = {}) {
  detail::require(control.kind() == FieldKind::control, "fokker-planck: field must be tagged CONTROL");
  detail::require(control.cells() == model.cells() && initial.cells() == model.cells(),
                  "fokker-planck: cell counts differ");
  const int m = model.cells();
  const TimeGrid grid = control.time_grid();
  const double h = model.cell_width();

  FokkerPlanckTape tape{MeasureFlow(grid, m), GridSeries(grid, m), 0};
  std::copy(initial.density().begin(), initial.density().end(), tape.flow.row(0).begin());
  CrankNicolsonStep step(m, grid.dt(), opts.theta);

  auto total_velocity = [&](int k, std::span<const double> rho, std::span<double> u) {
    model.drift(rho, u);
    const auto a = control.row(k);
    for (int j = 0; j < m; ++j) u[static_cast<std::size_t>(j)] += a[static_cast<std::size_t>(j)];
  };

  total_velocity(0, tape.flow.row(0), tape.velocity.row(0));
  detail::check_velocity(tape.velocity.row(0), grid, m, opts.cfl);

  std::vector<double> guess(static_cast<std::size_t>(m)), next(static_cast<std::size_t>(m));
  for (int n = 0; n < grid.steps; ++n) {
    const auto rho_old = tape.flow.row(n);
    const auto u_old = tape.velocity.row(n);
    auto rho_new = tape.flow.row(n + 1);
    auto u_new = tape.velocity.row(n + 1);
    std::copy(rho_old.begin(), rho_old.end(), guess.begin());
    bool done = false;
    for (int it = 0; it < opts.max_picard; ++it) {
      total_velocity(n + 1, guess, u_new);
      step.advance(u_old, u_new, rho_old, next);
      ++tape.picard_iterations;
      double diff = 0.0, scale = 1.0;
      for (int j = 0; j < m; ++j) {
        diff = std::max(diff, std::abs(next[static_cast<std::size_t>(j)] - guess[static_cast<std::size_t>(j)]));
        scale = std::max(scale, std::abs(next[static_cast<std::size_t>(j)]));
      }
      std::swap(guess, next);
      if (!model.interacting() || diff <= opts.picard_tolerance * scale) {
        done = true;
        break;
      }
    }
    if (!done)
      throw Error(ErrorCode::not_converged, "implicit drift iteration stalled at step " + std::to_string(n));
    std::copy(guess.begin(), guess.end(), rho_new.begin());
    // the velocity stored with the step is the one its implicit solve used
    detail::check_density(rho_new, n + 1, h, opts.mass_tolerance);
    detail::check_velocity(u_new, grid, m, opts.cfl);
  }
  return tape;
}

inline MeasureFlow solve_fokker_planck(const GridModel& model, const FieldFlow& control,
                                       const FokkerPlanckOptions& opts = {}) {
  return solve_fokker_planck_tape(model, control, model.initial_measure(), opts).flow;
}

inline MeasureFlow solve_fokker_planck(const ProblemSpec& spec, const FieldFlow& control,
                                       const FokkerPlanckOptions& opts = {}) {
  return solve_fokker_planck(GridModel(spec, control.cells()), control, opts);
}

/// Uncontrolled, drift-free evolution d_t rho = rho_xx with the same scheme.
inline MeasureFlow heat_flow(const GridMeasure& initial, const TimeGrid& grid, double theta = 0.5) {
  const int m = initial.cells();
  MeasureFlow flow(grid, m);
  std::copy(initial.density().begin(), initial.density().end(), flow.row(0).begin());
  CrankNicolsonStep step(m, grid.dt(), theta);
  const std::vector<double> zero(static_cast<std::size_t>(m), 0.0);
  for (int n = 0; n < grid.steps; ++n) step.advance(zero, zero, flow.row(n), flow.row(n + 1));
  return flow;
}

/// The control -b(., mu_t) along the heat flow, which makes the controlled
/// dynamics reproduce the heat flow.
inline FieldFlow heat_flow_control(const GridModel& model, const TimeGrid& grid) {
  const MeasureFlow heat = heat_flow(model.initial_measure(), grid);
  FieldFlow control(grid, model.cells(), FieldKind::control);
  for (int k = 0; k <= grid.steps; ++k) {
    model.drift(heat.row(k), control.row(k));
    for (double& v : control.row(k)) v = -v;
  }
  return control;
}

/// grad log rho as D_c rho / max(rho, floor)
inline void log_density_gradient(std::span<const double> rho, double h, std::span<double> out,
                                 double floor = default_density_floor) {
  central_difference(rho, h, out);
  for (std::size_t j = 0; j < rho.size(); ++j) out[j] /= std::max(rho[j], floor);
}

/// w = A + b(., rho) - grad log rho
inline FieldFlow control_to_velocity(const GridModel& model, const MeasureFlow& flow, const FieldFlow& control,
                                     double floor = default_density_floor) {
  detail::require(control.kind() == FieldKind::control, "control_to_velocity: field must be tagged CONTROL");
  detail::require(flow.same_shape(control), "control_to_velocity: shapes differ");
  FieldFlow w(flow.time_grid(), flow.cells(), FieldKind::velocity);
  std::vector<double> b(static_cast<std::size_t>(flow.cells())), g(b.size());
  for (int k = 0; k <= flow.steps(); ++k) {
    model.drift(flow.row(k), b);
    log_density_gradient(flow.row(k), flow.cell_width(), g, floor);
    auto out = w.row(k);
    const auto a = control.row(k);
    for (std::size_t j = 0; j < b.size(); ++j) out[j] = a[j] + b[j] - g[j];
  }
  return w;
}

/// A = w - b(., rho) + grad log rho
inline FieldFlow velocity_to_control(const GridModel& model, const MeasureFlow& flow, const FieldFlow& velocity,
                                     double floor = default_density_floor) {
  detail::require(velocity.kind() == FieldKind::velocity, "velocity_to_control: field must be tagged VELOCITY");
  detail::require(flow.same_shape(velocity), "velocity_to_control: shapes differ");
  FieldFlow a(flow.time_grid(), flow.cells(), FieldKind::control);
  std::vector<double> b(static_cast<std::size_t>(flow.cells())), g(b.size());
  for (int k = 0; k <= flow.steps(); ++k) {
    model.drift(flow.row(k), b);
    log_density_gradient(flow.row(k), flow.cell_width(), g, floor);
    auto out = a.row(k);
    const auto w = velocity.row(k);
    for (std::size_t j = 0; j < b.size(); ++j) out[j] = w[j] - b[j] + g[j];
  }
  return a;
}

/// Discrete L2 norm over interior nodes of
///   (rho^{k+1} - rho^{k-1}) / 2dt + D_c(w^k rho^k).
inline double continuity_residual(const MeasureFlow& flow, const FieldFlow& w) {
  detail::require(w.kind() == FieldKind::velocity, "continuity_residual: field must be tagged VELOCITY");
  detail::require(flow.same_shape(w), "continuity_residual: shapes differ");
  const int m = flow.cells();
  const double h = flow.cell_width(), dt = flow.dt();
  std::vector<double> flux(static_cast<std::size_t>(m)), div(flux.size());
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(std::max(flow.steps() - 1, 0)));
  for (int k = 1; k < flow.steps(); ++k) {
    for (int j = 0; j < m; ++j) flux[static_cast<std::size_t>(j)] = w.at(k, j) * flow.at(k, j);
    central_difference(flux, h, div);
    double s = 0.0;
    for (int j = 0; j < m; ++j) {
      const double r = (flow.at(k + 1, j) - flow.at(k - 1, j)) / (2.0 * dt) + div[static_cast<std::size_t>(j)];
      s += r * r;
    }
    terms.push_back(dt * h * s);
  }
  return std::sqrt(pairwise_sum(terms));
}

}  // namespace mfc
