// Experiment runner: solves and particle sweeps driven by a JSON config.
//
//   mfc_cli solve    --config cfg.json --out DIR
//   mfc_cli converge --config cfg.json --out DIR --n 8,64 --replicas 200
//   mfc_cli chaos    --config cfg.json --out DIR --n 8,64,512 --times 0,0.5,1
//   mfc_cli kl       --config cfg.json --out DIR --n 8,32,128 --k 1
//   mfc_cli lift     --config cfg.json --out DIR --replicas 100000 --times 0,0.5,1
//
// Exit codes: 0 ok, 1 usage or config error, 2 solver did not converge
// (results are still written).

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mfc/mfc.hpp"

namespace fs = std::filesystem;
using namespace mfc;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config = 1;
constexpr int exit_not_converged = 2;

struct Flags {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  std::vector<int> counts;
  int marginal = 1;
  std::optional<int> replicas;
  std::vector<double> times{0.0, 0.25, 0.5, 0.75, 1.0};
};

class OutputDir {
 public:
  OutputDir(const std::string& path, RunManifest manifest) : root_(path), manifest_(std::move(manifest)) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec) throw ConfigError("--out", "cannot create '" + path + "': " + ec.message());
  }

  void write(const std::string& name, const std::string& text) {
    std::ofstream f(root_ / name, std::ios::binary);
    if (!f) throw Error(ErrorCode::io, "cannot write " + (root_ / name).string());
    f << text;
    manifest_.outputs.push_back(name);
  }

  void write_series(const std::string& name, const GridSeries& s) {
    std::ostringstream os;
    write_csv(os, s);
    write(name, os.str());
  }

  void write_pair(const std::string& name, const PairSeries& s) {
    CsvWriter csv("t,x,y,value");
    const double h = s.cell_width();
    for (int k = 0; k <= s.steps(); ++k)
      for (int i = 0; i < s.cells(); ++i)
        for (int j = 0; j < s.cells(); ++j)
          csv.row(s.time_grid().time(k), (i + 0.5) * h, (j + 0.5) * h, s.at(k, i, j));
    write(name, csv.str());
  }

  void finish() {
    std::ofstream f(root_ / "manifest.json", std::ios::binary);
    f << manifest_.str();
  }

 private:
  fs::path root_;
  RunManifest manifest_;
};

std::string history_csv(const std::vector<double>& history) {
  CsvWriter csv("iteration,objective");
  for (std::size_t i = 0; i < history.size(); ++i) csv.row(i, history[i]);
  return csv.str();
}

JsonFields solve_metadata(const RunConfig& cfg, const char* target, double theta, int iterations, double grad_norm,
                          double terminal_kl, bool converged, const std::string& message) {
  JsonFields f;
  f.add("target", target)
      .add("spec_hash", cfg.spec_hash)
      .add("theta", theta)
      .add("iterations", iterations)
      .add("grad_norm", grad_norm)
      .add("terminal_kl", terminal_kl)
      .add("converged", converged)
      .add("status", converged ? "OK" : to_string(ErrorCode::not_converged))
      .add("message", message)
      .raw("config", cfg.source.dump());
  return f;
}

/// Mean-field solve plus its output files; shared by every subcommand.
SolveResult solve_and_write(const RunConfig& cfg, OutputDir& out) {
  SolveOptions opts = cfg.solver;
  if (opts.init == InitialControl::random && opts.seed == 0) opts.seed = 1;
  const SolveResult r = solve_mean_field(cfg.problem, cfg.cells, cfg.steps, opts);
  const GridModel model(cfg.problem, cfg.cells);
  const FieldFlow w = control_to_velocity(model, r.flow, r.control);
  out.write("metadata.json",
            solve_metadata(cfg, "mean_field", r.theta, r.iterations, r.grad_norm, r.terminal_kl, r.converged, r.message)
                .str());
  out.write("energy.json", to_json(eval_energy(model, r.flow, w)));
  out.write_series("flow.csv", r.flow);
  out.write_series("control.csv", r.control);
  out.write_series("velocity.csv", w);
  out.write("objective.csv", history_csv(r.objective_history));
  if (!r.converged) std::cerr << "warning: mean-field solve did not converge: " << r.message << "\n";
  return r;
}

int cmd_solve(const RunConfig& cfg, OutputDir& out) {
  if (!cfg.pair_target) return solve_and_write(cfg, out).converged ? exit_ok : exit_not_converged;
  const PairSolveResult r = solve_pair_direct(cfg.problem, cfg.pair_cells, cfg.pair_steps, cfg.solver);
  const PairModel model(cfg.problem, cfg.pair_cells);
  const PairField w = pair_control_to_velocity(model, r.flow, r.control);
  out.write("metadata.json",
            solve_metadata(cfg, "pair", r.theta, r.iterations, r.grad_norm, r.terminal_kl, r.converged, r.message).str());
  out.write("energy.json", to_json(eval_energy_pair(model, r.flow, w)));
  out.write_pair("flow.csv", r.flow);
  out.write_pair("control.csv", r.control.first);
  out.write("objective.csv", history_csv(r.objective_history));
  return r.converged ? exit_ok : exit_not_converged;
}

int cmd_converge(const RunConfig& cfg, const Flags& flags, OutputDir& out) {
  check_particle_counts(flags.counts);
  const SolveResult mf = solve_and_write(cfg, out);
  const auto rows = converge_sweep(cfg.problem, mf, flags.counts, flags.replicas.value_or(cfg.replicas), flags.seed);
  CsvWriter csv("N,cost_N,stderr,theta,gap");
  for (const auto& r : rows) csv.row(r.particles, r.cost.mean, r.cost.std_error, r.theta, r.gap);
  out.write("converge.csv", csv.str());
  return mf.converged ? exit_ok : exit_not_converged;
}

int cmd_chaos(const RunConfig& cfg, const Flags& flags, OutputDir& out) {
  check_particle_counts(flags.counts);
  time_nodes(flags.times, cfg.steps);
  const SolveResult mf = solve_and_write(cfg, out);
  const auto sweep =
      chaos_sweep(cfg.problem, mf, flags.counts, flags.times, flags.replicas.value_or(cfg.replicas), flags.seed);
  CsvWriter csv("N,t,W1,stderr");
  for (const auto& r : sweep.rows) csv.row(r.particles, r.time, r.w1.mean, r.w1.std_error);
  out.write("chaos.csv", csv.str());
  CsvWriter sup("N,sup_W1,stderr");
  for (std::size_t i = 0; i < flags.counts.size(); ++i)
    sup.row(flags.counts[i], sweep.sup_w1[i].mean, sweep.sup_w1[i].std_error);
  out.write("chaos_sup.csv", sup.str());
  for (std::size_t i = 0; i < flags.counts.size(); ++i) {
    CsvWriter s("replica,t,W1_to_mf,running_cost");
    for (const auto& r : sweep.summaries[i]) s.row(r.replica, r.time, r.w1_to_mf, r.running_cost);
    out.write("particles_N" + std::to_string(flags.counts[i]) + ".csv", s.str());
  }
  return mf.converged ? exit_ok : exit_not_converged;
}

int cmd_kl(const RunConfig& cfg, const Flags& flags, OutputDir& out) {
  check_particle_counts(flags.counts);
  if (flags.marginal < 1) throw ConfigError("--k", "marginal size must be at least 1");
  const SolveResult mf = solve_and_write(cfg, out);
  const auto rows = kl_sweep(cfg.problem, mf, flags.counts, flags.marginal, flags.replicas.value_or(cfg.replicas),
                             flags.seed, cfg.girsanov);
  CsvWriter csv("N,k,kl_bound,kl_to_wiener_per_particle,tv_bound,stderr");
  for (const auto& r : rows)
    csv.row(r.particles, r.marginal, r.kl_bound.mean, r.kl_to_wiener.mean, r.tv_bound, r.kl_bound.std_error);
  out.write("kl.csv", csv.str());
  return mf.converged ? exit_ok : exit_not_converged;
}

int cmd_lift(const RunConfig& cfg, const Flags& flags, OutputDir& out) {
  time_nodes(flags.times, cfg.steps);
  const int paths = flags.replicas.value_or(cfg.replicas);
  if (paths < 1) throw ConfigError("--replicas", "must be at least 1");
  const SolveResult mf = solve_and_write(cfg, out);
  const GridModel model(cfg.problem, cfg.cells);
  const FieldFlow w = control_to_velocity(model, mf.flow, mf.control);
  const LiftReport rep = lift_report(mf.flow, w, static_cast<std::size_t>(paths), flags.times, flags.seed);
  CsvWriter csv("t,W1");
  for (const auto& r : rep.rows) csv.row(r.time, r.w1);
  out.write("lift.csv", csv.str());
  JsonFields f;
  f.add("paths", paths)
      .add("path_kinetic", rep.path_kinetic.mean)
      .add("path_kinetic_stderr", rep.path_kinetic.std_error)
      .add("grid_kinetic", rep.grid_kinetic)
      .add("kinetic_relative_error", rep.kinetic_relative_error);
  out.write("lift.json", f.str());
  return mf.converged ? exit_ok : exit_not_converged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-field control solver and particle experiments"};
  app.require_subcommand(1);
  Flags flags;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "problem JSON")->required();
    sub->add_option("--out", flags.out, "output directory")->required();
    sub->add_option("--seed", flags.seed, "64-bit seed");
  };
  auto add_counts = [&](CLI::App* sub) {
    sub->add_option("--n", flags.counts, "particle counts, e.g. 8,32,128")->delimiter(',')->required();
  };
  auto add_replicas = [&](CLI::App* sub, const char* help) { sub->add_option("--replicas", flags.replicas, help); };
  auto add_times = [&](CLI::App* sub) {
    sub->add_option("--times", flags.times, "sampled times as fractions of T")->delimiter(',');
  };

  auto* solve = app.add_subcommand("solve", "solve the mean-field (or pair) problem");
  add_common(solve);
  auto* converge = app.add_subcommand("converge", "N-particle cost against the mean-field value");
  add_common(converge);
  add_counts(converge);
  add_replicas(converge, "replicas per N");
  auto* chaos = app.add_subcommand("chaos", "W1 of particle marginals to the mean-field flow");
  add_common(chaos);
  add_counts(chaos);
  add_replicas(chaos, "replicas per N");
  add_times(chaos);
  auto* kl = app.add_subcommand("kl", "path-space KL bounds");
  add_common(kl);
  add_counts(kl);
  add_replicas(kl, "replicas per N");
  kl->add_option("--k", flags.marginal, "marginal size");
  auto* lift_cmd = app.add_subcommand("lift", "deterministic path lift of the optimal flow");
  add_common(lift_cmd);
  add_replicas(lift_cmd, "number of paths");
  add_times(lift_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? exit_ok : exit_config;
  }

  const CLI::App* sub = app.get_subcommands().front();
  try {
    const RunConfig cfg = load_config(flags.config);
    if (sub == converge || sub == chaos || sub == kl) check_particle_counts(flags.counts);
    if (sub == chaos || sub == lift_cmd) time_nodes(flags.times, cfg.steps);
    if (sub == kl && flags.marginal < 1) throw ConfigError("--k", "marginal size must be at least 1");
    if (sub == lift_cmd && flags.replicas && *flags.replicas < 1) throw ConfigError("--replicas", "must be at least 1");
    RunManifest manifest;
    manifest.spec_hash = cfg.spec_hash;
    manifest.seed = flags.seed;
    manifest.cells = cfg.pair_target && sub == solve ? cfg.pair_cells : cfg.cells;
    manifest.steps = cfg.pair_target && sub == solve ? cfg.pair_steps : cfg.steps;
    manifest.command = sub->get_name();
    for (int i = 2; i < argc; ++i) manifest.flags.emplace_back(argv[i]);
    OutputDir out(flags.out, manifest);

    int code = exit_ok;
    if (sub == solve) code = cmd_solve(cfg, out);
    else if (sub == converge) code = cmd_converge(cfg, flags, out);
    else if (sub == chaos) code = cmd_chaos(cfg, flags, out);
    else if (sub == kl) code = cmd_kl(cfg, flags, out);
    else code = cmd_lift(cfg, flags, out);
    out.finish();
    return code;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_config;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_config;
  }
}
