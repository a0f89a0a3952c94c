// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mfc/mfc.hpp"
#include "oracles.hpp"

using namespace mfc;

namespace {

constexpr double pi = std::numbers::pi;

// ---- pinned tolerances
constexpr double identity_tol = 1e-3;
constexpr double refinement_gain = 1.8;
constexpr double de_bruijn_fraction = 0.02;
constexpr double adjoint_tol = 1e-5;
constexpr double entropy_tol = 1e-4;
constexpr double fisher_rel_tol = 0.01;
constexpr double tensor_tol = 1e-12;
constexpr double superadditivity_tol = 1e-6;
constexpr double separation_sigmas = 3.0;
constexpr double slope_lo = -0.7, slope_hi = -0.3;
constexpr double lift_w1_tol = 0.01;
constexpr double lift_kinetic_tol = 0.02;
constexpr double symmetrization_margin = 1e-9;
constexpr double uniqueness_tol = 1e-4;

// ---- sizes
constexpr int sweep_cells = 256;
constexpr int sweep_steps = 200;
constexpr int converge_replicas = 200;
constexpr int chaos_replicas = 100;
constexpr int kl_replicas = 100;
constexpr std::size_t lift_paths = 100000;
constexpr std::uint64_t sweep_seed_value = 20240917;

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int failures = 0;

void run(int id, const char* name, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!o.pass) ++failures;
  std::printf("%s  criterion %2d  %-28s %s  [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
  std::fflush(stdout);
}

// ---- instances

ProblemSpec free_instance() {
  ProblemSpec spec;
  spec.initial = DensitySpec::gaussian(0.3, 0.1);
  spec.horizon = 0.1;
  return spec;
}

ProblemSpec potential_instance() {
  ProblemSpec spec;
  spec.drift.external_drift = TrigSeries::sine(1, 0.5);
  spec.running.external = TrigSeries::cosine(1, 0.5);
  spec.terminal = TerminalCost::linear(TrigSeries::cosine(1, 0.2));
  spec.initial = DensitySpec::gaussian(0.3, 0.1);
  spec.horizon = 0.1;
  return spec;
}

ProblemSpec convex_instance() {
  ConvexAmplitudes amp;
  amp.external_drift = TrigSeries::sine(1, 0.5);
  amp.external_potential = TrigSeries::cosine(2, 0.3);
  amp.v0_cos = {0.0, 0.02};
  amp.v1_cos = {0.5, 2.0, 0.5};
  amp.terminal = TerminalCost::linear(TrigSeries::cosine(1, 0.2));
  amp.initial = DensitySpec::gaussian(0.25, 0.1);
  amp.horizon = 0.2;
  return make_convex_instance(amp);
}

ProblemSpec second_convex_instance() {
  ConvexAmplitudes amp;
  amp.external_drift = TrigSeries::cosine(1, 0.3);
  amp.external_potential = TrigSeries::sine(1, 0.4);
  amp.v0_cos = {0.0, 0.01};
  amp.v1_cos = {0.0, 1.0, 1.0};
  amp.terminal = TerminalCost::linear(TrigSeries::sine(2, 0.3));
  amp.initial = DensitySpec::gaussian(0.6, 0.15);
  amp.horizon = 0.3;
  return make_convex_instance(amp);
}

struct Named {
  const char* name;
  ProblemSpec spec;
};

std::vector<Named> identity_instances() {
  return {{"free", free_instance()}, {"potential", potential_instance()}, {"convex", convex_instance()}};
}

FieldFlow wave_control(const TimeGrid& grid, int cells, double amplitude) {
  FieldFlow a(grid, cells, FieldKind::control);
  for (int k = 0; k <= grid.steps; ++k)
    for (int j = 0; j < cells; ++j) {
      const double x = (j + 0.5) / cells, t = grid.time(k);
      a.at(k, j) = amplitude * (std::sin(2 * pi * x + 4.0 * t) + 0.3 * std::cos(4 * pi * x));
    }
  return a;
}

double cost_energy_defect(const ProblemSpec& spec, int cells, int steps) {
  const GridModel model(spec, cells);
  const FieldFlow a = wave_control(TimeGrid{steps, spec.horizon}, cells, 0.6);
  const MeasureFlow flow = solve_fokker_planck(model, a);
  const double cost = cost_of_flow(model, flow, a).total;
  const double energy = eval_energy(model, flow, control_to_velocity(model, flow, a)).total;
  return std::abs(cost - energy) / (1.0 + std::abs(cost));
}

double dot(const FieldFlow& a, const FieldFlow& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i) s += a.values()[i] * b.values()[i];
  return s;
}

FieldFlow shifted(const FieldFlow& a, const FieldFlow& d, double eps) {
  FieldFlow out = a;
  for (std::size_t i = 0; i < out.values().size(); ++i) out.values()[i] += eps * d.values()[i];
  return out;
}

bool separated(const SampleStats& hi, const SampleStats& lo) {
  return hi.mean - lo.mean > separation_sigmas * std::hypot(hi.std_error, lo.std_error);
}

double loglog_slope(const std::vector<int>& n, const std::vector<double>& y) {
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n.size(); ++i) {
    mx += std::log(n[i]);
    my += std::log(y[i]);
  }
  mx /= n.size();
  my /= n.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n.size(); ++i) {
    sxy += (std::log(n[i]) - mx) * (std::log(y[i]) - my);
    sxx += std::pow(std::log(n[i]) - mx, 2);
  }
  return sxy / sxx;
}

// ---- sweeps shared by criteria 6, 7, 8 and 11

const std::vector<int> converge_counts{8, 64};
const std::vector<int> chaos_counts{8, 64, 512};
const std::vector<int> kl_counts{8, 32, 128, 512};
const std::vector<double> chaos_times{0.0, 0.25, 0.5, 0.75, 1.0};

struct Sweeps {
  std::vector<ConvergeRow> converge;
  ChaosSweep chaos;
  std::vector<KlRow> kl;
  std::string converge_csv, chaos_csv, kl_csv;
};

Sweeps run_sweeps(const ProblemSpec& spec, const SolveResult& mf, int workers) {
  Sweeps s;
  s.converge = converge_sweep(spec, mf, converge_counts, converge_replicas, sweep_seed_value, workers);
  s.chaos = chaos_sweep(spec, mf, chaos_counts, chaos_times, chaos_replicas, sweep_seed_value, workers);
  s.kl = kl_sweep(spec, mf, kl_counts, 1, kl_replicas, sweep_seed_value, GirsanovConstant::unit, workers);
  CsvWriter c("N,cost_N,stderr,theta,gap");
  for (const auto& r : s.converge) c.row(r.particles, r.cost.mean, r.cost.std_error, r.theta, r.gap);
  CsvWriter w("N,t,W1,stderr");
  for (const auto& r : s.chaos.rows) w.row(r.particles, r.time, r.w1.mean, r.w1.std_error);
  CsvWriter k("N,k,kl_bound,kl_to_wiener_per_particle,tv_bound,stderr");
  for (const auto& r : s.kl)
    k.row(r.particles, r.marginal, r.kl_bound.mean, r.kl_to_wiener.mean, r.tv_bound, r.kl_bound.std_error);
  s.converge_csv = c.str();
  s.chaos_csv = w.str();
  s.kl_csv = k.str();
  return s;
}

}  // namespace

int main() {
  run(1, "cost-energy identity", [] {
    Outcome o;
    for (const auto& [name, spec] : identity_instances()) {
      const double coarse = cost_energy_defect(spec, 256, 200);
      const double fine = cost_energy_defect(spec, 512, 400);
      o.pass = o.pass && fine < identity_tol && coarse / fine >= refinement_gain;
      o.detail += fmt("%s %.2e (x%.2f)  ", name, fine, coarse / fine);
    }
    return o;
  });

  run(2, "heat flow has zero energy", [] {
    ProblemSpec spec;
    spec.initial = DensitySpec::gaussian(0.5, 0.08);
    spec.horizon = 0.02;
    const GridModel model(spec, 512);
    const TimeGrid grid{400, spec.horizon};
    const MeasureFlow flow = heat_flow(model.initial_measure(), grid);
    const EnergyReport r = eval_energy(model, flow, control_to_velocity(model, flow, FieldFlow(grid, 512, FieldKind::control)));
    const double ratio = std::abs(r.total) / r.kinetic;
    return Outcome{ratio < de_bruijn_fraction, fmt("|total|/kinetic = %.2e", ratio)};
  });

  run(3, "adjoint gradient", [] {
    Outcome o;
    for (const auto& [name, spec] : identity_instances()) {
      const GridModel model(spec, 32);
      const FieldFlow a = random_control(TimeGrid{40, spec.horizon}, 32, 123, 1.0);
      const CostGradient g = adjoint_gradient(model, a);
      double worst = 0.0;
      for (std::uint64_t q = 0; q < 10; ++q) {
        const FieldFlow d = random_control(a.time_grid(), 32, 1000 + q, 1.0);
        const double eps = 1e-5;
        const double fd = (eval_cost(model, shifted(a, d, eps)) - eval_cost(model, shifted(a, d, -eps))) / (2 * eps);
        const double ad = dot(g.gradient, d);
        worst = std::max(worst, std::abs(fd - ad) / std::abs(ad));
      }
      o.pass = o.pass && worst < adjoint_tol;
      o.detail += fmt("%s %.1e  ", name, worst);
    }
    return o;
  });

  run(4, "wrapped gaussian analytics", [] {
    const double sd = 0.05;
    const GridMeasure mu = wrapped_gaussian(1024, 0.5, sd);
    const double de = std::abs(entropy(mu) - oracle::gaussian_entropy(sd));
    const double df = std::abs(fisher_information(mu) * sd * sd - 1.0);
    return Outcome{de < entropy_tol && df < fisher_rel_tol, fmt("entropy err %.1e, Fisher rel err %.1e", de, df)};
  });

  run(5, "tensorization", [] {
    double worst_tensor = 0.0, worst_super = -INFINITY;
    for (std::uint64_t s = 0; s < 10; ++s) {
      const GridMeasure mu(oracle::smooth_density(48, s));
      const auto prod = GridMeasure2::product(mu, mu);
      worst_tensor = std::max(worst_tensor, std::abs(fisher_information(prod) / 2.0 - fisher_information(mu)) /
                                                fisher_information(mu));
      worst_tensor = std::max(worst_tensor, std::abs(entropy(prod) - 2.0 * entropy(mu)));
      const GridMeasure2 pair(32, oracle::smooth_density2(32, s));
      const double deficit =
          fisher_information(marginal(pair, 0)) + fisher_information(marginal(pair, 1)) - fisher_information(pair);
      worst_super = std::max(worst_super, deficit);
    }
    return Outcome{worst_tensor < tensor_tol && worst_super < superadditivity_tol,
                   fmt("product defect %.1e, worst superadditivity deficit %.1e", worst_tensor, worst_super)};
  });

  const ProblemSpec convex = convex_instance();
  SolveOptions sweep_opts;
  sweep_opts.tol = 1e-7;
  sweep_opts.max_iters = 2000;
  const SolveResult mf = solve_mean_field(convex, sweep_cells, sweep_steps, sweep_opts);
  std::printf("mean-field solve at M=%d K=%d: theta %.6f, %d iterations, %s\n", sweep_cells, sweep_steps, mf.theta,
              mf.iterations, mf.message.c_str());
  Sweeps wide;
  bool sweeps_ok = true;
  const auto sweep_start = std::chrono::steady_clock::now();
  try {
    wide = run_sweeps(convex, mf, 8);
  } catch (const std::exception& e) {
    sweeps_ok = false;
    std::printf("sweeps failed: %s\n", e.what());
  }
  std::printf("particle sweeps for criteria 6-8 with 8 workers: %.1fs\n",
              std::chrono::duration<double>(std::chrono::steady_clock::now() - sweep_start).count());

  run(6, "value convergence in N", [&] {
    if (!sweeps_ok || !mf.converged) return Outcome{false, "mean-field solve or sweep failed"};
    const auto& c8 = wide.converge[0];
    const auto& c64 = wide.converge[1];
    const SampleStats gap8{c8.gap, c8.cost.std_error}, gap64{c64.gap, c64.cost.std_error};
    return Outcome{separated(gap8, gap64), fmt("gap(8) %.4f +- %.4f, gap(64) %.4f +- %.4f", c8.gap, c8.cost.std_error,
                                               c64.gap, c64.cost.std_error)};
  });

  run(7, "Kac chaos", [&] {
    if (!sweeps_ok) return Outcome{false, "sweep failed"};
    const auto& sup = wide.chaos.sup_w1;
    bool ok = true;
    std::vector<double> means;
    std::string detail;
    for (std::size_t i = 0; i < sup.size(); ++i) {
      means.push_back(sup[i].mean);
      detail += fmt("N=%d %.4f  ", chaos_counts[i], sup[i].mean);
      if (i > 0) ok = ok && separated(sup[i - 1], sup[i]);
    }
    const double slope = loglog_slope(chaos_counts, means);
    ok = ok && slope >= slope_lo && slope <= slope_hi;
    return Outcome{ok, detail + fmt("slope %.3f", slope)};
  });

  run(8, "KL chaos bound decay", [&] {
    if (!sweeps_ok) return Outcome{false, "sweep failed"};
    bool ok = true;
    std::string detail;
    for (std::size_t i = 0; i < wide.kl.size(); ++i) {
      detail += fmt("N=%d %.2e  ", wide.kl[i].particles, wide.kl[i].kl_bound.mean);
      if (i > 0) ok = ok && wide.kl[i].kl_bound.mean < wide.kl[i - 1].kl_bound.mean;
    }
    ok = ok && separated(wide.kl.front().kl_bound, wide.kl.back().kl_bound);
    // the same sweep without interaction
    ConvexAmplitudes amp;
    amp.external_drift = TrigSeries::sine(1, 0.5);
    amp.external_potential = TrigSeries::cosine(2, 0.3);
    amp.terminal = TerminalCost::linear(TrigSeries::cosine(1, 0.2));
    amp.initial = DensitySpec::gaussian(0.25, 0.1);
    amp.horizon = 0.2;
    const ProblemSpec plain = make_convex_instance(amp);
    const SolveResult free_mf = solve_mean_field(plain, 64, 60);
    double worst = 0.0;
    for (const auto& r : kl_sweep(plain, free_mf, kl_counts, 1, 10, sweep_seed_value))
      worst = std::max(worst, std::abs(r.kl_bound.mean));
    ok = ok && worst == 0.0;
    return Outcome{ok, detail + fmt("non-interacting max %.1e", worst)};
  });

  run(9, "superposition lift", [&] {
    const GridModel model(convex, sweep_cells);
    const FieldFlow w = control_to_velocity(model, mf.flow, mf.control);
    const LiftReport rep = lift_report(mf.flow, w, lift_paths, chaos_times, sweep_seed_value);
    double worst = 0.0;
    for (const auto& r : rep.rows) worst = std::max(worst, r.w1);
    return Outcome{worst < lift_w1_tol && rep.kinetic_relative_error < lift_kinetic_tol,
                   fmt("max W1 %.4f over %zu times, kinetic rel err %.4f", worst, rep.rows.size(),
                       rep.kinetic_relative_error)};
  });

  run(10, "symmetrization", [&] {
    const PairModel pair(convex, 16);
    const TimeGrid grid{30, convex.horizon};
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(-0.8, 0.8);
    double worst = -INFINITY;
    for (int trial = 0; trial < 20; ++trial) {
      const double c1 = u(rng), c2 = u(rng), c3 = u(rng), c4 = u(rng);
      PairField a(grid, 16, FieldKind::control);
      for (int k = 0; k <= grid.steps; ++k)
        for (int i = 0; i < 16; ++i)
          for (int j = 0; j < 16; ++j) {
            const double x = (i + 0.5) / 16, y = (j + 0.5) / 16;
            a.first.at(k, i, j) = c1 * std::sin(2 * pi * x) + c2 * std::cos(2 * pi * y);
            a.second.at(k, i, j) = c3 * std::cos(2 * pi * (x - y)) + c4 * std::sin(2 * pi * x);
          }
      const PairMeasureFlow flow = solve_pair_fokker_planck(pair, a);
      const PairField w = pair_control_to_velocity(pair, flow, a);
      const auto [sym_flow, sym_w] = symmetrize_pair_flow(flow, w);
      worst = std::max(worst, eval_energy_pair(pair, sym_flow, sym_w).total - eval_energy_pair(pair, flow, w).total);
    }
    return Outcome{worst <= symmetrization_margin, fmt("max (sym - raw) over 20 flows %.2e", worst)};
  });

  run(11, "worker-count determinism", [&] {
    if (!sweeps_ok) return Outcome{false, "sweep failed"};
    const Sweeps narrow = run_sweeps(convex, mf, 1);
    const bool same = narrow.converge_csv == wide.converge_csv && narrow.chaos_csv == wide.chaos_csv &&
                      narrow.kl_csv == wide.kl_csv;
    return Outcome{same, same ? "converge, chaos and kl CSVs identical for 1 and 8 workers" : "CSV bytes differ"};
  });

  run(12, "uniqueness on convex instances", [] {
    Outcome o;
    for (const auto& [name, spec] : std::vector<Named>{{"first", convex_instance()}, {"second", second_convex_instance()}}) {
      const GridModel model(spec, 64);
      const TimeGrid grid{80, spec.horizon};
      SolveOptions opts;
      opts.init = InitialControl::random;
      opts.tol = 1e-7;
      opts.max_iters = 2000;
      opts.seed = 1;
      const SolveResult a = solve_mean_field(model, grid, opts);
      opts.seed = 2;
      opts.random_amplitude = 1.0;
      const SolveResult b = solve_mean_field(model, grid, opts);
      const double diff = std::abs(a.theta - b.theta);
      o.pass = o.pass && a.converged && b.converged && diff < uniqueness_tol;
      o.detail += fmt("%s |dTheta| %.1e  ", name, diff);
    }
    return o;
  });

  std::printf("%s: %d of 12 criteria failed\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}
