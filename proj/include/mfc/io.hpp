#pragma once

// Problem configuration (JSON, spec_version 1), run manifests and
// fixed-precision writers for reports.
//
// Config layout:
//   {
//     "spec_version": 1,
//     "mode": "finite_horizon" | "schrodinger",
//     "T": 0.2,
//     "mu0": {"kind": "wrapped_gaussian", "mean": 0.25, "sd": 0.1},
//     "muT": {...},                        bridge mode only
//     "b0": [{"k": 1, "a": 0.0, "b": 0.5}], "kb": [...],
//     "vext": [...], "v1": [...], "v0": [...], "c": 0.0, "g": [...],
//     "convex": {"v0_cos": [...], "v1_cos": [...]},   replaces kb, v1, v0, c
//     "grid": {"cells": 256, "steps": 400},
//     "solver": {...}, "particles": {...}, "pair": {...}
//   }
// Series entries are {"k": wavenumber, "a": cos coefficient, "b": sin coefficient}.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mfc/energy.hpp"
#include "mfc/errors.hpp"
#include "mfc/measure.hpp"
#include "mfc/model.hpp"
#include "mfc/pathlaw.hpp"
#include "mfc/series.hpp"
#include "mfc/solver.hpp"

namespace mfc {

inline constexpr const char* tool_version = "1.0.0";
inline constexpr int config_spec_version = 1;

/// Everything a command needs besides its command-line flags.
struct RunConfig {
  ProblemSpec problem;
  int cells = 256;
  int steps = 400;
  SolveOptions solver;
  bool pair_target = false;  // solve the two-particle problem instead
  int pair_cells = 24;
  int pair_steps = 40;
  int replicas = 200;
  GirsanovConstant girsanov = GirsanovConstant::unit;
  std::string spec_hash;  // FNV-1a of the canonical problem JSON
  nlohmann::json source;
};

/// 64-bit FNV-1a, printed as 16 hex digits.
inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace detail {

using json = nlohmann::json;

inline const json* find(const json& obj, const std::string& key) {
  const auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

inline double number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(path, "must be finite");
  return x;
}

inline double number_or(const json& obj, const std::string& key, double fallback, const std::string& path) {
  const json* v = find(obj, key);
  return v ? number(*v, path + "." + key) : fallback;
}

inline int integer(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
  return v.get<int>();
}

inline int integer_or(const json& obj, const std::string& key, int fallback, const std::string& path) {
  const json* v = find(obj, key);
  return v ? integer(*v, path + "." + key) : fallback;
}

inline TrigSeries parse_series(const json& obj, const std::string& key) {
  const json* v = find(obj, key);
  if (!v) return {};
  if (!v->is_array()) throw ConfigError(key, "expected an array of {k, a, b} terms");
  std::vector<TrigTerm> terms;
  for (std::size_t i = 0; i < v->size(); ++i) {
    const std::string path = key + "[" + std::to_string(i) + "]";
    const json& t = (*v)[i];
    if (!t.is_object()) throw ConfigError(path, "expected an object");
    const json* k = find(t, "k");
    if (!k) throw ConfigError(path + ".k", "missing wavenumber");
    TrigTerm term{integer(*k, path + ".k"), number_or(t, "a", 0.0, path), number_or(t, "b", 0.0, path)};
    if (term.k < 0) throw ConfigError(path + ".k", "wavenumber must be nonnegative");
    if (term.k == 0 && term.b != 0.0) throw ConfigError(path + ".b", "the k = 0 term has no sine part");
    terms.push_back(term);
  }
  try {
    return TrigSeries(std::move(terms));
  } catch (const Error& e) {
    throw ConfigError(key, e.what());
  }
}

inline DensitySpec parse_density(const json& v, const std::string& path) {
  if (!v.is_object()) throw ConfigError(path, "expected an object");
  const json* kind = find(v, "kind");
  if (!kind || !kind->is_string()) throw ConfigError(path + ".kind", "missing density kind");
  const std::string k = kind->get<std::string>();
  DensitySpec d;
  if (k == "uniform") {
    d.kind = DensitySpec::Kind::uniform;
  } else if (k == "wrapped_gaussian") {
    d.kind = DensitySpec::Kind::wrapped_gaussian;
    d.mean = number_or(v, "mean", 0.5, path);
    d.sd = number_or(v, "sd", 0.1, path);
    if (d.sd <= 0.0) throw ConfigError(path + ".sd", "must be positive");
  } else if (k == "cosine_bump") {
    d.kind = DensitySpec::Kind::cosine_bump;
    d.mean = number_or(v, "mean", 0.5, path);
    d.amplitude = number_or(v, "amplitude", 0.0, path);
    if (std::abs(d.amplitude) >= 1.0) throw ConfigError(path + ".amplitude", "must be below 1 in magnitude");
  } else if (k == "tabulated") {
    d.kind = DensitySpec::Kind::tabulated;
    const json* vals = find(v, "values");
    if (!vals || !vals->is_array() || vals->empty()) throw ConfigError(path + ".values", "expected a nonempty array");
    for (std::size_t i = 0; i < vals->size(); ++i) {
      const double x = number((*vals)[i], path + ".values[" + std::to_string(i) + "]");
      if (x < 0.0) throw ConfigError(path + ".values[" + std::to_string(i) + "]", "must be nonnegative");
      d.values.push_back(x);
    }
  } else {
    throw ConfigError(path + ".kind", "unknown density kind '" + k + "'");
  }
  return d;
}

inline std::vector<double> parse_numbers(const json& obj, const std::string& key, const std::string& path) {
  const json* v = find(obj, key);
  if (!v) return {};
  if (!v->is_array()) throw ConfigError(path + "." + key, "expected an array");
  std::vector<double> out;
  for (std::size_t i = 0; i < v->size(); ++i)
    out.push_back(number((*v)[i], path + "." + key + "[" + std::to_string(i) + "]"));
  return out;
}

inline ProblemSpec parse_problem(const json& j) {
  ProblemSpec p;
  const std::string mode = j.value("mode", std::string("finite_horizon"));
  if (mode == "finite_horizon") p.mode = Mode::finite_horizon;
  else if (mode == "schrodinger") p.mode = Mode::schrodinger;
  else throw ConfigError("mode", "expected 'finite_horizon' or 'schrodinger'");
  const json* t = find(j, "T");
  if (!t) throw ConfigError("T", "missing horizon");
  p.horizon = number(*t, "T");
  if (p.horizon <= 0.0) throw ConfigError("T", "must be positive");
  const json* mu0 = find(j, "mu0");
  if (!mu0) throw ConfigError("mu0", "missing initial law");
  p.initial = parse_density(*mu0, "mu0");
  if (const json* mut = find(j, "muT")) p.target = parse_density(*mut, "muT");
  if (p.mode == Mode::schrodinger && !p.target) throw ConfigError("muT", "bridge mode needs a target law");

  p.drift.external_drift = parse_series(j, "b0");
  p.running.external = parse_series(j, "vext");
  const TrigSeries g = parse_series(j, "g");
  if (!g.is_zero()) {
    if (p.mode == Mode::schrodinger) throw ConfigError("g", "bridge mode takes a target law, not a terminal cost");
    p.terminal = TerminalCost::linear(g);
  }

  if (const json* convex = find(j, "convex")) {
    for (const char* key : {"kb", "v1", "v0", "c"})
      if (find(j, key)) throw ConfigError(key, "must not be given together with 'convex'");
    if (p.mode != Mode::finite_horizon) throw ConfigError("convex", "the convex family is finite horizon");
    ConvexAmplitudes amp;
    amp.external_drift = p.drift.external_drift;
    amp.external_potential = p.running.external;
    amp.v0_cos = parse_numbers(*convex, "v0_cos", "convex");
    amp.v1_cos = parse_numbers(*convex, "v1_cos", "convex");
    amp.terminal = p.terminal;
    amp.initial = p.initial;
    amp.horizon = p.horizon;
    try {
      return make_convex_instance(amp);
    } catch (const Error& e) {
      throw ConfigError("convex", e.what());
    }
  }
  p.drift.pair_kernel = parse_series(j, "kb");
  p.running.pair = parse_series(j, "v1");
  p.running.gradient_potential = parse_series(j, "v0");
  p.running.gradient_sq_coeff = number_or(j, "c", 0.0, "");
  return p;
}

inline InitialControl parse_init(const std::string& s) {
  if (s == "heat_flow") return InitialControl::heat_flow;
  if (s == "zero") return InitialControl::zero;
  if (s == "random") return InitialControl::random;
  throw ConfigError("solver.init", "expected 'heat_flow', 'zero' or 'random'");
}

}  // namespace detail

/// Parses and validates a configuration document.
inline RunConfig parse_config(const nlohmann::json& j) {
  using detail::find;
  using json = nlohmann::json;
  if (!j.is_object()) throw ConfigError("$", "expected a JSON object");
  const json* version = find(j, "spec_version");
  if (!version) throw ConfigError("spec_version", "missing");
  if (detail::integer(*version, "spec_version") != config_spec_version)
    throw ConfigError("spec_version", "unsupported version (expected 1)");

  RunConfig cfg;
  cfg.source = j;
  cfg.problem = detail::parse_problem(j);

  if (const json* grid = find(j, "grid")) {
    cfg.cells = detail::integer_or(*grid, "cells", cfg.cells, "grid");
    cfg.steps = detail::integer_or(*grid, "steps", cfg.steps, "grid");
  }
  if (cfg.cells < 8) throw ConfigError("grid.cells", "must be at least 8");
  if (cfg.steps < 1) throw ConfigError("grid.steps", "must be at least 1");

  if (const json* s = find(j, "solver")) {
    SolveOptions& o = cfg.solver;
    o.max_iters = detail::integer_or(*s, "max_iters", o.max_iters, "solver");
    o.tol = detail::number_or(*s, "tol", o.tol, "solver");
    o.step = detail::number_or(*s, "step", o.step, "solver");
    o.terminal_tol = detail::number_or(*s, "terminal_tol", o.terminal_tol, "solver");
    o.density_offset = detail::number_or(*s, "density_offset", o.density_offset, "solver");
    if (find(*s, "penalty_schedule")) {
      o.penalty_schedule = detail::parse_numbers(*s, "penalty_schedule", "solver");
      if (o.penalty_schedule.empty()) throw ConfigError("solver.penalty_schedule", "must not be empty");
    }
    if (const json* init = find(*s, "init")) {
      if (!init->is_string()) throw ConfigError("solver.init", "expected a string");
      o.init = detail::parse_init(init->get<std::string>());
    }
    if (const json* target = find(*s, "target")) {
      if (!target->is_string()) throw ConfigError("solver.target", "expected a string");
      const std::string t = target->get<std::string>();
      if (t == "pair") cfg.pair_target = true;
      else if (t != "mean_field") throw ConfigError("solver.target", "expected 'mean_field' or 'pair'");
    }
    if (o.max_iters < 0) throw ConfigError("solver.max_iters", "must be nonnegative");
    if (o.tol <= 0.0) throw ConfigError("solver.tol", "must be positive");
    if (o.step <= 0.0) throw ConfigError("solver.step", "must be positive");
  }
  if (const json* pair = find(j, "pair")) {
    cfg.pair_cells = detail::integer_or(*pair, "cells", cfg.pair_cells, "pair");
    cfg.pair_steps = detail::integer_or(*pair, "steps", cfg.pair_steps, "pair");
    if (cfg.pair_cells < 8 || cfg.pair_cells > 64) throw ConfigError("pair.cells", "must lie in [8, 64]");
    if (cfg.pair_steps < 1 || cfg.pair_steps > 100) throw ConfigError("pair.steps", "must lie in [1, 100]");
  }
  if (const json* parts = find(j, "particles")) {
    cfg.replicas = detail::integer_or(*parts, "replicas", cfg.replicas, "particles");
    if (cfg.replicas < 1) throw ConfigError("particles.replicas", "must be at least 1");
    if (const json* gc = find(*parts, "girsanov_constant")) {
      const std::string s = gc->is_string() ? gc->get<std::string>() : "";
      if (s == "paper") cfg.girsanov = GirsanovConstant::unit;
      else if (s == "standard") cfg.girsanov = GirsanovConstant::standard;
      else throw ConfigError("particles.girsanov_constant", "expected 'paper' or 'standard'");
    }
  }

  // hash only the problem data, in canonical (sorted-key) form
  nlohmann::json problem = j;
  for (const char* key : {"grid", "solver", "particles", "pair"}) problem.erase(key);
  cfg.spec_hash = fnv1a_hex(problem.dump());
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("--config", std::string("malformed JSON: ") + e.what());
  }
  return parse_config(j);
}

// ------------------------------------------------------------------ writers

/// %.17g, with non-finite values as JSON null.
inline std::string json_number(double x) {
  if (!std::isfinite(x)) return "null";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Flat JSON object with numbers at 17 significant digits.
class JsonFields {
 public:
  JsonFields& add(const std::string& key, double v) { return raw(key, json_number(v)); }
  JsonFields& add(const std::string& key, int v) { return raw(key, std::to_string(v)); }
  JsonFields& add(const std::string& key, bool v) { return raw(key, v ? "true" : "false"); }
  JsonFields& add(const std::string& key, const std::string& v) { return raw(key, nlohmann::json(v).dump()); }
  JsonFields& add(const std::string& key, const char* v) { return add(key, std::string(v)); }
  JsonFields& raw(const std::string& key, const std::string& text) {
    items_.emplace_back(key, text);
    return *this;
  }

  std::string str() const {
    std::string out = "{\n";
    for (std::size_t i = 0; i < items_.size(); ++i) {
      out += "  " + nlohmann::json(items_[i].first).dump() + ": " + items_[i].second;
      out += i + 1 < items_.size() ? ",\n" : "\n";
    }
    return out + "}\n";
  }

 private:
  std::vector<std::pair<std::string, std::string>> items_;
};

inline std::string to_json(const EnergyReport& r) {
  JsonFields f;
  f.add("kinetic", r.kinetic)
      .add("drift_sq", r.drift_sq)
      .add("fisher_half", r.fisher_half)
      .add("entropy_diff", r.entropy_diff)
      .add("cross", r.cross)
      .add("div_term", r.div_term)
      .add("running", r.running)
      .add("terminal", r.terminal)
      .add("total", r.total);
  return f.str();
}

/// Parses the nine report fields back (null reads as NaN).
inline EnergyReport energy_report_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  auto get = [&](const char* key) {
    const auto& v = j.at(key);
    return v.is_null() ? std::nan("") : v.get<double>();
  };
  EnergyReport r;
  r.kinetic = get("kinetic");
  r.drift_sq = get("drift_sq");
  r.fisher_half = get("fisher_half");
  r.entropy_diff = get("entropy_diff");
  r.cross = get("cross");
  r.div_term = get("div_term");
  r.running = get("running");
  r.terminal = get("terminal");
  r.total = get("total");
  return r;
}

/// Comma-separated row with numbers at 17 significant digits.
class CsvWriter {
 public:
  explicit CsvWriter(std::string header) : text_(std::move(header) + "\n") {}

  template <class... Ts>
  void row(const Ts&... values) {
    std::string line;
    (append(line, values), ...);
    line.back() = '\n';
    text_ += line;
  }

  const std::string& str() const { return text_; }

 private:
  static void append(std::string& line, double v) { line += json_number(v) + ","; }
  static void append(std::string& line, int v) { line += std::to_string(v) + ","; }
  static void append(std::string& line, std::size_t v) { line += std::to_string(v) + ","; }
  static void append(std::string& line, const std::string& v) { line += v + ","; }

  std::string text_;
};

// ------------------------------------------------------------------ manifest

struct RunManifest {
  std::string spec_hash;
  std::uint64_t seed = 0;
  int cells = 0;
  int steps = 0;
  std::string command;
  std::vector<std::string> flags;
  std::vector<std::string> outputs;

  std::string str() const {
    nlohmann::ordered_json j;
    j["spec_hash"] = spec_hash;
    j["seed"] = seed;
    j["grid"] = {{"M", cells}, {"K", steps}};
    j["command"] = {{"subcommand", command}, {"flags", flags}};
    j["tool_version"] = tool_version;
    j["outputs"] = outputs;
    return j.dump(2) + "\n";
  }
};

}  // namespace mfc
