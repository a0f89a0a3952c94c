#pragma once

// Control cost and its kinetic (continuity-equation) reformulation.
//
// For a flow rho driven by control A and its velocity w = A + b - grad log rho,
//
//   cost   = \int\int (|A|^2/2 + V) dmu dt + G(mu_T)
//   energy = 1/2 \int\int |w|^2 + 1/2 \int\int |b|^2 + 1/2 \int I
//          + H(mu_T) - H(mu_0) - \int\int <w, b> + \int\int div b
//          + \int\int V + G(mu_T)
//
// and the two agree up to discretization error. Time integrals use the
// trapezoid rule on the nodes t_k; space integrals are cell sums.

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "mfc/dynamics.hpp"
#include "mfc/errors.hpp"
#include "mfc/flow.hpp"
#include "mfc/measure.hpp"
#include "mfc/model.hpp"

namespace mfc {

struct CostReport {
  double control_kinetic = 0.0;  // 1/2 \int\int |A|^2 dmu dt
  double running = 0.0;          // \int\int V dmu dt
  double terminal = 0.0;         // G(mu_T); zero in bridge mode
  double terminal_kl = 0.0;      // KL(mu_T | target) in bridge mode
  double total = 0.0;            // control_kinetic + running + terminal
};

struct EnergyReport {
  double kinetic = 0.0;
  double drift_sq = 0.0;
  double fisher_half = 0.0;
  double entropy_diff = 0.0;
  double cross = 0.0;
  double div_term = 0.0;
  double running = 0.0;
  double terminal = 0.0;
  double total = 0.0;
  double continuity_residual = 0.0;  // diagnostic, not part of the total

  double sum_of_parts() const {
    return kinetic + drift_sq + fisher_half + entropy_diff + cross + div_term + running + terminal;
  }
};

/// Energy with the external drift b0 = -grad Psi split off. The first block
/// mirrors EnergyReport with b replaced by the interaction part b1; the
/// second block carries the Psi terms.
struct ConfinedEnergyReport {
  double kinetic = 0.0;
  double drift_sq = 0.0;       // 1/2 \int\int |b1|^2
  double fisher_half = 0.0;
  double entropy_diff = 0.0;
  double cross = 0.0;          // -\int\int <w, b1>
  double div_term = 0.0;       // \int\int div b1
  double running = 0.0;
  double terminal = 0.0;
  double potential_change = 0.0;     // \int Psi dmu_T - \int Psi dmu_0
  double potential_laplacian = 0.0;  // -\int\int lap Psi
  double potential_grad_sq = 0.0;    // 1/2 \int\int |grad Psi|^2
  double potential_cross = 0.0;      // -\int\int <grad Psi, b1>
  double transport_defect = 0.0;     // \int\int <w, grad Psi> - potential_change
  double total = 0.0;

  double sum_of_parts() const {
    return kinetic + drift_sq + fisher_half + entropy_diff + cross + div_term + running + terminal + potential_change +
           potential_laplacian + potential_grad_sq + potential_cross + transport_defect;
  }
};

/// Cost of a flow already solved for the given control.
inline CostReport cost_of_flow(const GridModel& model, const MeasureFlow& flow, const FieldFlow& control) {
  const TimeGrid& grid = flow.time_grid();
  const double h = flow.cell_width();
  CostReport r;
  std::vector<double> kin, run;
  kin.reserve(static_cast<std::size_t>(grid.steps + 1));
  run.reserve(kin.capacity());
  for (int k = 0; k <= grid.steps; ++k) {
    const auto rho = flow.row(k);
    const auto a = control.row(k);
    double s = 0.0;
    for (std::size_t j = 0; j < rho.size(); ++j) s += a[j] * a[j] * rho[j];
    kin.push_back(grid.weight(k) * 0.5 * h * s);
    run.push_back(grid.weight(k) * model.running_energy(rho));
  }
  r.control_kinetic = pairwise_sum(kin);
  r.running = pairwise_sum(run);
  const auto last = flow.row(grid.steps);
  if (model.spec().mode == Mode::schrodinger) {
    const GridMeasure target = model.target_measure();
    r.terminal_kl = kl_grid(last, target.density(), h);
  } else {
    r.terminal = model.terminal_cost(last);
  }
  r.total = r.control_kinetic + r.running + r.terminal;
  return r;
}

inline CostReport eval_cost_breakdown(const GridModel& model, const FieldFlow& control,
                                      const FokkerPlanckOptions& opts = {}) {
  const MeasureFlow flow = solve_fokker_planck(model, control, opts);
  return cost_of_flow(model, flow, control);
}

/// Finite horizon: running + terminal cost. Bridge mode: running cost only;
/// the terminal mismatch is reported by eval_cost_breakdown.
inline double eval_cost(const GridModel& model, const FieldFlow& control, const FokkerPlanckOptions& opts = {}) {
  return eval_cost_breakdown(model, control, opts).total;
}

inline double eval_cost(const ProblemSpec& spec, const FieldFlow& control, const FokkerPlanckOptions& opts = {}) {
  return eval_cost(GridModel(spec, control.cells()), control, opts);
}

inline EnergyReport eval_energy(const GridModel& model, const MeasureFlow& flow, const FieldFlow& w,
                                double floor = default_density_floor) {
  detail::require(w.kind() == FieldKind::velocity, "eval_energy: field must be tagged VELOCITY");
  detail::require(flow.same_shape(w) && flow.cells() == model.cells(), "eval_energy: shapes differ");
  const TimeGrid& grid = flow.time_grid();
  const int m = flow.cells();
  const double h = flow.cell_width();
  const std::size_t nodes = static_cast<std::size_t>(grid.steps + 1);
  std::vector<double> kin(nodes), bsq(nodes), fis(nodes), crs(nodes), dvt(nodes), run(nodes);
  std::vector<double> b(static_cast<std::size_t>(m)), divb(b.size());
  for (int k = 0; k <= grid.steps; ++k) {
    const auto rho = flow.row(k);
    const auto wk = w.row(k);
    model.drift(rho, b);
    model.drift_divergence(rho, divb);
    double s_kin = 0.0, s_bsq = 0.0, s_crs = 0.0, s_div = 0.0;
    for (std::size_t j = 0; j < b.size(); ++j) {
      s_kin += wk[j] * wk[j] * rho[j];
      s_bsq += b[j] * b[j] * rho[j];
      s_crs += wk[j] * b[j] * rho[j];
      s_div += divb[j] * rho[j];
    }
    const double wt = grid.weight(k);
    const auto ks = static_cast<std::size_t>(k);
    kin[ks] = wt * 0.5 * h * s_kin;
    bsq[ks] = wt * 0.5 * h * s_bsq;
    crs[ks] = -wt * h * s_crs;
    dvt[ks] = wt * h * s_div;
    fis[ks] = wt * 0.5 * fisher_information(rho, h, floor);
    run[ks] = wt * model.running_energy(rho);
  }
  EnergyReport r;
  r.kinetic = pairwise_sum(kin);
  r.drift_sq = pairwise_sum(bsq);
  r.fisher_half = pairwise_sum(fis);
  r.entropy_diff = entropy(flow.row(grid.steps), h) - entropy(flow.row(0), h);
  r.cross = pairwise_sum(crs);
  r.div_term = pairwise_sum(dvt);
  r.running = pairwise_sum(run);
  r.terminal = model.spec().mode == Mode::finite_horizon ? model.terminal_cost(flow.row(grid.steps)) : 0.0;
  r.total = r.sum_of_parts();
  r.continuity_residual = continuity_residual(flow, w);
  return r;
}

/// Potential Psi with b0 = -Psi'. Only zero-mean external drifts are
/// gradients on the torus.
inline TrigSeries confinement_potential(const InteractionField& field) {
  if (field.external_drift.constant_term() != 0.0)
    throw Error(ErrorCode::split_unavailable, "external drift has a constant part and is not a gradient on the torus");
  return field.external_drift.antiderivative().scaled(-1.0);
}

inline ConfinedEnergyReport eval_energy_confined(const GridModel& model, const MeasureFlow& flow, const FieldFlow& w,
                                                 double floor = default_density_floor) {
  detail::require(w.kind() == FieldKind::velocity, "eval_energy_confined: field must be tagged VELOCITY");
  detail::require(flow.same_shape(w) && flow.cells() == model.cells(), "eval_energy_confined: shapes differ");
  const ProblemSpec& spec = model.spec();
  const TrigSeries psi = confinement_potential(spec.drift);
  const auto& table = model.table();
  const std::vector<double> psi_s = table.sample(psi);
  const std::vector<double> b0 = table.sample(spec.drift.external_drift);
  const std::vector<double> b0_div = table.sample(spec.drift.external_drift.derivative());
  const TrigSeries kb = spec.drift.pair_kernel, kb_div = kb.derivative();

  const TimeGrid& grid = flow.time_grid();
  const int m = flow.cells();
  const double h = flow.cell_width();
  const std::size_t nodes = static_cast<std::size_t>(grid.steps + 1);
  std::vector<double> kin(nodes), bsq(nodes), fis(nodes), crs(nodes), dvt(nodes), run(nodes);
  std::vector<double> lap(nodes), gsq(nodes), pcr(nodes), wpsi(nodes);
  std::vector<double> b1(static_cast<std::size_t>(m)), divb1(b1.size());
  for (int k = 0; k <= grid.steps; ++k) {
    const auto rho = flow.row(k);
    const auto wk = w.row(k);
    table.convolve(kb, rho, b1);
    table.convolve(kb_div, rho, divb1);
    double s_kin = 0, s_bsq = 0, s_crs = 0, s_div = 0, s_lap = 0, s_gsq = 0, s_pcr = 0, s_wpsi = 0;
    for (std::size_t j = 0; j < b1.size(); ++j) {
      s_kin += wk[j] * wk[j] * rho[j];
      s_bsq += b1[j] * b1[j] * rho[j];
      s_crs += wk[j] * b1[j] * rho[j];
      s_div += divb1[j] * rho[j];
      s_lap += b0_div[j] * rho[j];       // -lap Psi = b0'
      s_gsq += b0[j] * b0[j] * rho[j];   // |grad Psi|^2 = b0^2
      s_pcr += b0[j] * b1[j] * rho[j];   // -<grad Psi, b1> = b0 b1
      s_wpsi -= wk[j] * b0[j] * rho[j];  // <w, grad Psi> = -w b0
    }
    const double wt = grid.weight(k);
    const auto ks = static_cast<std::size_t>(k);
    kin[ks] = wt * 0.5 * h * s_kin;
    bsq[ks] = wt * 0.5 * h * s_bsq;
    crs[ks] = -wt * h * s_crs;
    dvt[ks] = wt * h * s_div;
    fis[ks] = wt * 0.5 * fisher_information(rho, h, floor);
    run[ks] = wt * model.running_energy(rho);
    lap[ks] = wt * h * s_lap;
    gsq[ks] = wt * 0.5 * h * s_gsq;
    pcr[ks] = wt * h * s_pcr;
    wpsi[ks] = wt * h * s_wpsi;
  }
  auto potential_mean = [&](std::span<const double> rho) {
    double s = 0.0;
    for (std::size_t j = 0; j < rho.size(); ++j) s += psi_s[j] * rho[j];
    return h * s;
  };
  ConfinedEnergyReport r;
  r.kinetic = pairwise_sum(kin);
  r.drift_sq = pairwise_sum(bsq);
  r.fisher_half = pairwise_sum(fis);
  r.entropy_diff = entropy(flow.row(grid.steps), h) - entropy(flow.row(0), h);
  r.cross = pairwise_sum(crs);
  r.div_term = pairwise_sum(dvt);
  r.running = pairwise_sum(run);
  r.terminal = spec.mode == Mode::finite_horizon ? model.terminal_cost(flow.row(grid.steps)) : 0.0;
  r.potential_change = potential_mean(flow.row(grid.steps)) - potential_mean(flow.row(0));
  r.potential_laplacian = pairwise_sum(lap);
  r.potential_grad_sq = pairwise_sum(gsq);
  r.potential_cross = pairwise_sum(pcr);
  r.transport_defect = pairwise_sum(wpsi) - r.potential_change;
  r.total = r.sum_of_parts();
  return r;
}

/// A lower bound on the cost (and hence the energy of any admissible pair):
/// -T sup|V| - sup|g|, with sup norms bounded by coefficient sums.
inline double energy_lower_bound(const ProblemSpec& spec) {
  const double q = spec.running.gradient_potential.derivative().abs_sum();
  const double vbound = spec.running.external.abs_sum() + spec.running.pair.abs_sum() +
                        std::abs(spec.running.gradient_sq_coeff) * q * q;
  const double gbound = spec.terminal.kind == TerminalCost::Kind::linear && spec.mode == Mode::finite_horizon
                            ? spec.terminal.weight.abs_sum()
                            : 0.0;
  return -spec.horizon * vbound - gbound;
}

}  // namespace mfc
