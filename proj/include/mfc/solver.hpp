#pragma once

// Minimization of the control cost over grid controls A(t_k, x_j) by
// preconditioned gradient descent, with gradients from the discrete adjoint
// of the forward scheme.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "mfc/crank_nicolson.hpp"
#include "mfc/descent.hpp"
#include "mfc/dynamics.hpp"
#include "mfc/energy.hpp"
#include "mfc/errors.hpp"
#include "mfc/flow.hpp"
#include "mfc/model.hpp"

namespace mfc {

/// Objective value, its gradient with respect to every control value, and the
/// forward solution it was computed on.
struct CostGradient {
  double objective = 0.0;  // cost, plus penalty * KL(mu_T | target) in bridge mode
  CostReport report;
  FieldFlow gradient;
  MeasureFlow flow;
};

struct AdjointOptions {
  FokkerPlanckOptions forward;
  double terminal_penalty = 0.0;  // bridge mode only
  double tolerance = 1e-14;       // for the transposed implicit-drift iteration
  int max_iterations = 200;
};

inline double objective_of(const CostReport& r, Mode mode, double penalty) {
  return mode == Mode::schrodinger ? r.total + penalty * r.terminal_kl : r.total;
}

inline CostGradient adjoint_gradient(const GridModel& model, const FieldFlow& control, const AdjointOptions& opts = {}) {
  const ProblemSpec& spec = model.spec();
  FokkerPlanckTape tape = solve_fokker_planck_tape(model, control, model.initial_measure(), opts.forward);
  const TimeGrid grid = control.time_grid();
  const int m = model.cells();
  const auto ms = static_cast<std::size_t>(m);
  const double h = model.cell_width();
  const MeasureFlow& flow = tape.flow;

  CostGradient out;
  out.report = cost_of_flow(model, flow, control);
  out.objective = objective_of(out.report, spec.mode, opts.terminal_penalty);
  out.gradient = FieldFlow(grid, m, FieldKind::control);

  // direct dependence of the trapezoid sums on rho^k and A^k
  GridSeries rho_bar(grid, m);
  std::vector<double> work(ms);
  for (int k = 0; k <= grid.steps; ++k) {
    const double wt = grid.weight(k);
    const auto rho = flow.row(k);
    const auto a = control.row(k);
    model.running_energy_gradient(rho, work);
    auto rb = rho_bar.row(k);
    auto ab = out.gradient.row(k);
    for (std::size_t j = 0; j < ms; ++j) {
      rb[j] = wt * (0.5 * h * a[j] * a[j] + work[j]);
      ab[j] = wt * h * a[j] * rho[j];
    }
  }
  {
    auto rb = rho_bar.row(grid.steps);
    const auto rho = flow.row(grid.steps);
    if (spec.mode == Mode::schrodinger) {
      if (opts.terminal_penalty != 0.0) {
        const GridMeasure target = model.target_measure();
        for (std::size_t j = 0; j < ms; ++j)
          rb[j] += opts.terminal_penalty * h * (std::log(std::max(rho[j], 1e-300) / target[j]) + 1.0);
      }
    } else {
      const auto g = model.terminal_weight();
      for (std::size_t j = 0; j < ms; ++j) rb[j] += h * g[j];
    }
  }

  CrankNicolsonStep step(m, grid.dt(), opts.forward.theta);
  const double ci = opts.forward.theta * grid.dt();
  std::vector<double> lam(ms), lam_next(ms), rhs(ms), flux(ms), dlam(ms), u_new_bar(ms), u_old_bar(ms);
  for (int n = grid.steps - 1; n >= 0; --n) {
    const auto rho_old = flow.row(n);
    const auto rho_new = flow.row(n + 1);
    const auto u_old = tape.velocity.row(n);
    const auto u_new = tape.velocity.row(n + 1);
    const auto rb_new = rho_bar.row(n + 1);

    // Solve P^T lam - ci K_b^T(rho_new * D_c lam) = rho_bar_new by fixed point.
    std::copy(rb_new.begin(), rb_new.end(), rhs.begin());
    step.solve_implicit_transpose(u_new, rhs, lam);
    if (model.interacting()) {
      bool done = false;
      for (int it = 0; it < opts.max_iterations; ++it) {
        step.central_difference(lam, dlam);
        for (std::size_t j = 0; j < ms; ++j) flux[j] = ci * rho_new[j] * dlam[j];
        std::copy(rb_new.begin(), rb_new.end(), rhs.begin());
        model.drift_transpose_accumulate(flux, rhs);
        step.solve_implicit_transpose(u_new, rhs, lam_next);
        double diff = 0.0, scale = 0.0;
        for (std::size_t j = 0; j < ms; ++j) {
          diff = std::max(diff, std::abs(lam_next[j] - lam[j]));
          scale = std::max(scale, std::abs(lam_next[j]));
        }
        std::swap(lam, lam_next);
        if (diff <= opts.tolerance * std::max(scale, 1e-300)) {
          done = true;
          break;
        }
      }
      if (!done) throw Error(ErrorCode::not_converged, "adjoint drift iteration stalled at step " + std::to_string(n));
    }
    // rhs now holds the effective right-hand side whose P^{-T} image is lam
    std::fill(u_new_bar.begin(), u_new_bar.end(), 0.0);
    std::fill(u_old_bar.begin(), u_old_bar.end(), 0.0);
    auto rb_old = rho_bar.row(n);
    step.reverse(u_old, u_new, rho_old, rho_new, rhs, lam, u_old_bar, u_new_bar, rb_old);
    model.drift_transpose_accumulate(u_old_bar, rb_old);
    auto a_new = out.gradient.row(n + 1);
    auto a_old = out.gradient.row(n);
    for (std::size_t j = 0; j < ms; ++j) {
      a_new[j] += u_new_bar[j];
      a_old[j] += u_old_bar[j];
    }
  }
  out.flow = std::move(tape.flow);
  return out;
}

// ------------------------------------------------------------------ solver

enum class InitialControl { heat_flow, zero, random, given };

struct SolveOptions {
  int max_iters = 500;
  double tol = 1e-6;             // on the preconditioned gradient norm
  double step = 1.0;             // first trial step
  double density_offset = 0.05;  // metric weight rho + offset
  double armijo = 1e-4;
  int max_backtracks = 40;
  std::vector<double> penalty_schedule{1.0, 10.0, 100.0, 1000.0};
  double terminal_tol = 1e-3;  // nats
  InitialControl init = InitialControl::heat_flow;
  std::optional<FieldFlow> initial_control;
  std::uint64_t seed = 0;
  double random_amplitude = 0.3;
  FokkerPlanckOptions forward;
  /// Called after every accepted iterate with (iteration, objective, grad_norm).
  std::function<void(int, double, double)> on_iterate;
};

struct SolveResult {
  FieldFlow control;
  MeasureFlow flow;
  double theta = 0.0;
  int iterations = 0;
  double grad_norm = 0.0;
  double terminal_kl = 0.0;
  bool converged = false;
  std::vector<double> objective_history;
  std::vector<double> stage_terminal_kl;  // bridge mode, one entry per penalty stage
  std::string message;
};

/// Largest |A| keeping |A + b| inside the advective CFL bound and below the
/// cell Peclet limit, for every admissible law.
inline double control_bound(const GridModel& model, const TimeGrid& grid, double cfl) {
  const double h = model.cell_width();
  const double umax = std::min(0.98 * cfl * h / grid.dt(), 1.9 / h);
  return umax - model.spec().drift_bound();
}

inline FieldFlow random_control(const TimeGrid& grid, int cells, std::uint64_t seed, double amplitude) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  FieldFlow a(grid, cells, FieldKind::control);
  constexpr int modes = 3;
  double cx[modes][2][2];
  for (auto& mode : cx)
    for (auto& time_part : mode)
      for (double& c : time_part) c = amplitude * normal(rng) / 3.0;
  for (int k = 0; k <= grid.steps; ++k) {
    const double t = grid.time(k) / grid.horizon;
    for (int j = 0; j < cells; ++j) {
      const double x = (j + 0.5) / cells;
      double v = 0.0;
      for (int q = 0; q < modes; ++q) {
        const double kx = two_pi * (q + 1) * x;
        v += (cx[q][0][0] + cx[q][0][1] * t) * std::cos(kx) + (cx[q][1][0] + cx[q][1][1] * t) * std::sin(kx);
      }
      a.at(k, j) = v;
    }
  }
  return a;
}

namespace detail {

using ControlPoint = DescentPoint<CostGradient>;

/// Diagonal metric h w_k (rho + offset) of the mean-field descent.
inline std::vector<double> flow_metric(const MeasureFlow& flow, double offset) {
  const TimeGrid& grid = flow.time_grid();
  const double h = flow.cell_width();
  std::vector<double> metric(flow.values().size());
  for (int k = 0; k <= grid.steps; ++k) {
    const double wt = grid.weight(k) * h;
    for (int j = 0; j < flow.cells(); ++j)
      metric[static_cast<std::size_t>(k) * static_cast<std::size_t>(flow.cells()) + static_cast<std::size_t>(j)] =
          wt * (flow.at(k, j) + offset);
  }
  return metric;
}

/// Evaluates objective and gradient; inadmissible controls give nullopt.
inline std::optional<ControlPoint> evaluate(const GridModel& model, const TimeGrid& grid, std::span<const double> x,
                                            const AdjointOptions& aopts, double offset) {
  FieldFlow control(grid, model.cells(), FieldKind::control);
  std::copy(x.begin(), x.end(), control.values().begin());
  try {
    ControlPoint p;
    p.payload = adjoint_gradient(model, control, aopts);
    p.x.assign(x.begin(), x.end());
    p.gradient.assign(p.payload.gradient.values().begin(), p.payload.gradient.values().end());
    p.metric = flow_metric(p.payload.flow, offset);
    p.objective = p.payload.objective;
    return p;
  } catch (const CflViolation&) {
    return std::nullopt;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::positivity_loss || e.code() == ErrorCode::not_converged) return std::nullopt;
    throw;
  }
}

inline DescentOptions descent_options(const SolveOptions& opts, double bound) {
  DescentOptions d;
  d.max_iters = opts.max_iters;
  d.tol = opts.tol;
  d.step = opts.step;
  d.armijo = opts.armijo;
  d.max_backtracks = opts.max_backtracks;
  d.bound = bound;
  d.on_iterate = opts.on_iterate;
  return d;
}

}  // namespace detail

inline SolveResult solve_mean_field(const GridModel& model, const TimeGrid& grid, const SolveOptions& opts = {}) {
  const ProblemSpec& spec = model.spec();
  const int m = model.cells();
  const double bound = control_bound(model, grid, opts.forward.cfl);
  if (bound <= 0.0) {
    const double h = model.cell_width();
    const int required = static_cast<int>(std::ceil(grid.horizon * spec.drift_bound() / (0.98 * opts.forward.cfl * h))) + 1;
    throw CflViolation("drift alone exceeds the CFL bound", required);
  }

  FieldFlow start;
  switch (opts.init) {
    case InitialControl::heat_flow: start = heat_flow_control(model, grid); break;
    case InitialControl::zero: start = FieldFlow(grid, m, FieldKind::control); break;
    case InitialControl::random: start = random_control(grid, m, opts.seed, opts.random_amplitude); break;
    case InitialControl::given:
      detail::require(opts.initial_control.has_value(), "solve: initial control missing");
      start = *opts.initial_control;
      detail::require(start.cells() == m && start.steps() == grid.steps, "solve: initial control has wrong shape");
      break;
  }
  for (double& v : start.values()) v = std::clamp(v, -bound, bound);

  SolveResult result;
  std::vector<double> penalties{0.0};
  if (spec.mode == Mode::schrodinger) {
    detail::require(!opts.penalty_schedule.empty(), "solve: empty penalty schedule");
    penalties = opts.penalty_schedule;
  }

  AdjointOptions aopts;
  aopts.forward = opts.forward;
  const DescentOptions dopts = detail::descent_options(opts, bound);
  auto project = [bound](std::vector<double>& x) {
    for (double& v : x) v = std::clamp(v, -bound, bound);
  };
  DescentLog log;
  std::optional<detail::ControlPoint> current;
  for (double penalty : penalties) {
    aopts.terminal_penalty = penalty;
    auto evaluate = [&](std::span<const double> x) {
      return detail::evaluate(model, grid, x, aopts, opts.density_offset);
    };
    const std::vector<double> from =
        current ? current->x : std::vector<double>(start.values().begin(), start.values().end());
    current = evaluate(from);
    if (!current) throw Error(ErrorCode::invalid_argument, "initial control is not admissible");
    log.objective_history.push_back(current->objective);
    log.message.clear();
    current = descend(std::move(*current), evaluate, project, dopts, log);
    result.stage_terminal_kl.push_back(current->payload.report.terminal_kl);
    if (spec.mode == Mode::schrodinger && current->payload.report.terminal_kl < opts.terminal_tol &&
        current->grad_norm < opts.tol)
      break;
  }

  result.control = FieldFlow(grid, m, FieldKind::control);
  std::copy(current->x.begin(), current->x.end(), result.control.values().begin());
  result.flow = std::move(current->payload.flow);
  result.theta = current->payload.report.total;
  result.terminal_kl = current->payload.report.terminal_kl;
  result.grad_norm = current->grad_norm;
  result.iterations = log.iterations;
  result.objective_history = std::move(log.objective_history);
  result.message = std::move(log.message);
  result.converged = result.grad_norm < opts.tol &&
                     (spec.mode == Mode::finite_horizon || result.terminal_kl < opts.terminal_tol);
  if (result.converged) result.message = "converged";
  else if (result.grad_norm < opts.tol) result.message = "terminal mismatch above tolerance after the last penalty stage";
  else if (result.message.empty()) result.message = "iteration limit reached";
  return result;
}

inline SolveResult solve_mean_field(const ProblemSpec& spec, int cells, int steps, const SolveOptions& opts = {}) {
  return solve_mean_field(GridModel(spec, cells), TimeGrid{steps, spec.horizon}, opts);
}

}  // namespace mfc
