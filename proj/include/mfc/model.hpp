#pragma once

// Problem data for the controlled mean-field diffusion on the torus
//
//   dX = (A(t, X) + b(X, mu_t)) dt + sqrt(2) dW,
//   b(x, mu)  = b0(x) + (k_b * mu)(x)
//   V(x, mu)  = v_ext(x) + (v1 * mu)(x) - c |(v0' * mu)(x)|^2
//   G(mu)     = \int g dmu   (finite horizon) or a target law (bridge mode)
//
// All coefficient functions are finite trig series.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfc/errors.hpp"
#include "mfc/measure.hpp"
#include "mfc/series.hpp"

namespace mfc {

struct InteractionField {
  TrigSeries external_drift;  // b0
  TrigSeries pair_kernel;     // k_b

  TrigSeries external_divergence() const { return external_drift.derivative(); }
  TrigSeries pair_divergence() const { return pair_kernel.derivative(); }
};

struct RunningCost {
  TrigSeries external;            // v_ext
  TrigSeries pair;                // v1
  TrigSeries gradient_potential;  // v0; enters through v0'
  double gradient_sq_coeff = 0.0;  // c

  bool is_zero() const {
    return external.is_zero() && pair.is_zero() && (gradient_potential.is_zero() || gradient_sq_coeff == 0.0);
  }
};

struct TerminalCost {
  enum class Kind { none, linear };
  Kind kind = Kind::none;
  TrigSeries weight;  // g

  static TerminalCost none() { return {}; }
  static TerminalCost linear(TrigSeries g) { return {Kind::linear, std::move(g)}; }
};

enum class Mode { finite_horizon, schrodinger };

struct ProblemSpec {
  InteractionField drift;
  RunningCost running;
  TerminalCost terminal;
  DensitySpec initial;
  std::optional<DensitySpec> target;  // required in bridge mode
  double horizon = 1.0;
  Mode mode = Mode::finite_horizon;

  void validate() const {
    detail::require(std::isfinite(horizon) && horizon > 0.0, "problem: horizon must be positive");
    if (mode == Mode::schrodinger) detail::require(target.has_value(), "problem: bridge mode needs a target law");
  }

  /// Highest wavenumber among all coefficient series.
  int max_wavenumber() const {
    return std::max({drift.external_drift.max_k(), drift.pair_kernel.max_k(), running.external.max_k(),
                     running.pair.max_k(), running.gradient_potential.max_k(), terminal.weight.max_k(), 1});
  }

  /// Uniform bound on |b(x, mu)| over all x and mu.
  double drift_bound() const { return drift.external_drift.abs_sum() + drift.pair_kernel.abs_sum(); }
};

// ------------------------------------------------------------ pointwise evaluation

inline Moments grid_moments(const GridMeasure& mu, int max_k) {
  Moments m;
  m.c.assign(static_cast<std::size_t>(max_k + 1), 0.0);
  m.s.assign(static_cast<std::size_t>(max_k + 1), 0.0);
  const double h = mu.cell_width();
  for (int j = 0; j < mu.cells(); ++j) {
    const double x = mu.center(j);
    for (int k = 0; k <= max_k; ++k) {
      m.c[static_cast<std::size_t>(k)] += h * mu[static_cast<std::size_t>(j)] * std::cos(two_pi * k * x);
      m.s[static_cast<std::size_t>(k)] += h * mu[static_cast<std::size_t>(j)] * std::sin(two_pi * k * x);
    }
  }
  return m;
}

inline Moments empirical_moments(const EmpiricalMeasure& emp, int max_k) {
  PointTrig trig;
  trig.reset(emp.points(), max_k);
  return trig.moments(max_k);
}

/// b(x, mu) = b0(x) + \int k_b(x - y) mu(dy)
inline double eval_drift(const InteractionField& field, double x, const Moments& mu) {
  return field.external_drift(x) + convolve_at(field.pair_kernel, mu, x);
}

inline double eval_drift(const InteractionField& field, double x, const GridMeasure& mu) {
  return eval_drift(field, x, grid_moments(mu, field.pair_kernel.max_k()));
}

/// Exact finite sum (1/N) sum_j k_b(x - x_j).
inline double eval_drift(const InteractionField& field, double x, const EmpiricalMeasure& mu) {
  double s = 0.0;
  for (double y : mu.points()) s += field.pair_kernel(x - y);
  return field.external_drift(x) + s / static_cast<double>(mu.size());
}

inline double eval_drift_divergence(const InteractionField& field, double x, const Moments& mu) {
  return field.external_divergence()(x) + convolve_at(field.pair_divergence(), mu, x);
}

inline double eval_running_cost(const RunningCost& rc, double x, const Moments& mu) {
  const double q = convolve_at(rc.gradient_potential.derivative(), mu, x);
  return rc.external(x) + convolve_at(rc.pair, mu, x) - rc.gradient_sq_coeff * q * q;
}

inline int running_max_k(const RunningCost& rc) { return std::max({rc.pair.max_k(), rc.gradient_potential.max_k(), 0}); }

inline double eval_running_cost(const RunningCost& rc, double x, const GridMeasure& mu) {
  return eval_running_cost(rc, x, grid_moments(mu, running_max_k(rc)));
}

inline double eval_running_cost(const RunningCost& rc, double x, const EmpiricalMeasure& mu) {
  double pair = 0.0, q = 0.0;
  const TrigSeries dv0 = rc.gradient_potential.derivative();
  for (double y : mu.points()) {
    pair += rc.pair(x - y);
    q += dv0(x - y);
  }
  const double n = static_cast<double>(mu.size());
  pair /= n;
  q /= n;
  return rc.external(x) + pair - rc.gradient_sq_coeff * q * q;
}

// ------------------------------------------------------------ grid evaluation

/// Grid-resolved evaluator of the drift, running cost and terminal cost.
/// Convolutions use midpoint quadrature: (k * rho)_j = h sum_i k(x_j - x_i) rho_i.
class GridModel {
 public:
  GridModel() = default;

  GridModel(const ProblemSpec& spec, int cells) : spec_(spec), cells_(cells) {
    spec.validate();
    detail::require(cells >= 2, "grid model: need at least two cells");
    table_ = TrigTable(cells, spec.max_wavenumber());
    kb_ = spec.drift.pair_kernel;
    kb_div_ = kb_.derivative();
    v1_ = spec.running.pair;
    dv0_ = spec.running.gradient_potential.derivative();
    c_ = spec.running.gradient_sq_coeff;
    b0_ = table_.sample(spec.drift.external_drift);
    b0_div_ = table_.sample(spec.drift.external_drift.derivative());
    vext_ = table_.sample(spec.running.external);
    if (spec.terminal.kind == TerminalCost::Kind::linear) g_ = table_.sample(spec.terminal.weight);
    else g_.assign(static_cast<std::size_t>(cells), 0.0);
  }

  const ProblemSpec& spec() const { return spec_; }
  int cells() const { return cells_; }
  double cell_width() const { return 1.0 / cells_; }
  const TrigTable& table() const { return table_; }
  bool interacting() const { return !kb_.is_zero(); }
  std::span<const double> external_drift() const { return b0_; }
  std::span<const double> terminal_weight() const { return g_; }

  /// out = b0 + k_b * rho
  void drift(std::span<const double> rho, std::span<double> out) const {
    table_.convolve(kb_, rho, out);
    for (int j = 0; j < cells_; ++j) out[static_cast<std::size_t>(j)] += b0_[static_cast<std::size_t>(j)];
  }

  std::vector<double> drift(std::span<const double> rho) const {
    std::vector<double> out(static_cast<std::size_t>(cells_));
    drift(rho, out);
    return out;
  }

  /// out = b0' + k_b' * rho
  void drift_divergence(std::span<const double> rho, std::span<double> out) const {
    table_.convolve(kb_div_, rho, out);
    for (int j = 0; j < cells_; ++j) out[static_cast<std::size_t>(j)] += b0_div_[static_cast<std::size_t>(j)];
  }

  /// out += K_b^T y, the transpose of the interaction part of the drift map.
  void drift_transpose_accumulate(std::span<const double> y, std::span<double> out) const {
    if (kb_.is_zero()) return;
    table_.convolve_transpose(kb_, y, out, true);
  }

  /// out_j = V(x_j, rho)
  void running_potential(std::span<const double> rho, std::span<double> out) const {
    table_.convolve(v1_, rho, out);
    if (c_ != 0.0 && !dv0_.is_zero()) {
      std::vector<double> q(static_cast<std::size_t>(cells_));
      table_.convolve(dv0_, rho, q);
      for (std::size_t j = 0; j < q.size(); ++j) out[j] -= c_ * q[j] * q[j];
    }
    for (int j = 0; j < cells_; ++j) out[static_cast<std::size_t>(j)] += vext_[static_cast<std::size_t>(j)];
  }

  /// h sum_j V(x_j, rho) rho_j
  double running_energy(std::span<const double> rho) const {
    std::vector<double> v(static_cast<std::size_t>(cells_));
    running_potential(rho, v);
    double s = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) s += v[j] * rho[j];
    return cell_width() * s;
  }

  /// out = gradient of running_energy with respect to the cell values of rho.
  void running_energy_gradient(std::span<const double> rho, std::span<double> out) const {
    const double h = cell_width();
    std::vector<double> v(static_cast<std::size_t>(cells_));
    running_potential(rho, v);
    if (!v1_.is_zero()) table_.convolve_transpose(v1_, rho, v, true);
    if (c_ != 0.0 && !dv0_.is_zero()) {
      std::vector<double> q(static_cast<std::size_t>(cells_)), qr(static_cast<std::size_t>(cells_));
      table_.convolve(dv0_, rho, q);
      for (std::size_t j = 0; j < q.size(); ++j) qr[j] = q[j] * rho[j];
      std::vector<double> t(static_cast<std::size_t>(cells_));
      table_.convolve_transpose(dv0_, qr, t);
      for (std::size_t j = 0; j < q.size(); ++j) v[j] -= 2.0 * c_ * t[j];
    }
    for (std::size_t j = 0; j < v.size(); ++j) out[j] = h * v[j];
  }

  /// h sum_j g_j rho_j, zero without a linear terminal cost.
  double terminal_cost(std::span<const double> rho) const {
    double s = 0.0;
    for (std::size_t j = 0; j < g_.size(); ++j) s += g_[j] * rho[j];
    return cell_width() * s;
  }

  GridMeasure initial_measure() const { return discretize(spec_.initial, cells_); }
  GridMeasure target_measure() const {
    detail::require(spec_.target.has_value(), "problem: no target law");
    return discretize(*spec_.target, cells_);
  }

 private:
  ProblemSpec spec_;
  int cells_ = 0;
  TrigTable table_;
  TrigSeries kb_, kb_div_, v1_, dv0_;
  double c_ = 0.0;
  std::vector<double> b0_, b0_div_, vext_, g_;
};

// ------------------------------------------------------------ convex family

/// Inputs of the convex family: b = b0 + 2 v0' * mu and
/// V = v_ext + v1 * mu - 4 |v0' * mu|^2, with v0 and v1 even cosine series.
struct ConvexAmplitudes {
  TrigSeries external_drift;
  TrigSeries external_potential;
  std::vector<double> v0_cos;  // index = wavenumber
  std::vector<double> v1_cos;
  TerminalCost terminal;
  DensitySpec initial;
  double horizon = 1.0;
};

inline TrigSeries cosine_series(std::span<const double> coeffs) {
  std::vector<TrigTerm> terms;
  for (std::size_t k = 0; k < coeffs.size(); ++k)
    if (coeffs[k] != 0.0) terms.push_back({static_cast<int>(k), coeffs[k], 0.0});
  return TrigSeries(std::move(terms));
}

/// Cosine spectrum of the second functional derivative 2 v1 + 4 v0'' of the
/// convexity functional.
inline std::vector<double> convexity_spectrum(std::span<const double> v0_cos, std::span<const double> v1_cos) {
  const std::size_t n = std::max(v0_cos.size(), v1_cos.size());
  std::vector<double> out(n, 0.0);
  for (std::size_t m = 0; m < n; ++m) {
    const double a0 = m < v0_cos.size() ? v0_cos[m] : 0.0;
    const double a1 = m < v1_cos.size() ? v1_cos[m] : 0.0;
    const double w = two_pi * static_cast<double>(m);
    out[m] = 2.0 * a1 - 4.0 * w * w * a0;
  }
  return out;
}

inline ProblemSpec make_convex_instance(const ConvexAmplitudes& amp) {
  for (double a : amp.v0_cos) detail::require(a >= 0.0, "convex instance: v0 cosine coefficients must be nonnegative");
  for (double a : amp.v1_cos) detail::require(a >= 0.0, "convex instance: v1 cosine coefficients must be nonnegative");
  const auto spectrum = convexity_spectrum(amp.v0_cos, amp.v1_cos);
  for (std::size_t m = 1; m < spectrum.size(); ++m) {
    const double a1 = m < amp.v1_cos.size() ? amp.v1_cos[m] : 0.0;
    detail::require(spectrum[m] > 0.0 || (a1 == 0.0 && spectrum[m] == 0.0),
                    "convex instance: 2 v1 + 4 v0'' must have a positive cosine spectrum on mode " + std::to_string(m));
  }
  ProblemSpec spec;
  const TrigSeries v0 = cosine_series(amp.v0_cos);
  spec.drift.external_drift = amp.external_drift;
  spec.drift.pair_kernel = v0.derivative().scaled(2.0);
  spec.running.external = amp.external_potential;
  spec.running.pair = cosine_series(amp.v1_cos);
  spec.running.gradient_potential = v0;
  spec.running.gradient_sq_coeff = v0.is_zero() ? 0.0 : 4.0;
  spec.terminal = amp.terminal;
  spec.initial = amp.initial;
  spec.horizon = amp.horizon;
  spec.mode = Mode::finite_horizon;
  spec.validate();
  return spec;
}

/// U(mu) = h^2 sum_ij v0(x_i - x_j) rho_i rho_j
inline double interaction_energy(const TrigSeries& v0, const GridMeasure& mu) {
  TrigTable table(mu.cells(), std::max(v0.max_k(), 1));
  std::vector<double> conv(static_cast<std::size_t>(mu.cells()));
  table.convolve(v0, mu.density(), conv);
  double s = 0.0;
  for (int j = 0; j < mu.cells(); ++j) s += conv[static_cast<std::size_t>(j)] * mu[static_cast<std::size_t>(j)];
  return mu.cell_width() * s;
}

/// K(mu) = \int (V + |grad dU/dmu|^2 + lap dU/dmu) dmu with dU/dmu = 2 v0 * mu.
inline double convexity_functional(const ProblemSpec& spec, const GridMeasure& mu) {
  const GridModel model(spec, mu.cells());
  const TrigSeries& v0 = spec.running.gradient_potential;
  const auto& table = model.table();
  const std::size_t m = static_cast<std::size_t>(mu.cells());
  std::vector<double> v(m), grad(m), lap(m);
  model.running_potential(mu.density(), v);
  table.convolve(v0.derivative().scaled(2.0), mu.density(), grad);
  table.convolve(v0.derivative().derivative().scaled(2.0), mu.density(), lap);
  double s = 0.0;
  for (std::size_t j = 0; j < m; ++j) s += (v[j] + grad[j] * grad[j] + lap[j]) * mu[j];
  return mu.cell_width() * s;
}

}  // namespace mfc
