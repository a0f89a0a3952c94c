#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

#include "mfc/io.hpp"

using namespace mfc;
using nlohmann::json;

namespace {

json base_config() {
  return json::parse(R"({
    "spec_version": 1,
    "T": 0.2,
    "mu0": {"kind": "wrapped_gaussian", "mean": 0.25, "sd": 0.1},
    "b0": [{"k": 1, "b": 0.5}],
    "vext": [{"k": 2, "a": 0.3}],
    "g": [{"k": 1, "a": 0.2}],
    "convex": {"v0_cos": [0.0, 0.02], "v1_cos": [0.5, 2.0, 0.5]},
    "grid": {"cells": 64, "steps": 80}
  })");
}

/// Field named by the ConfigError that parsing raises, or "" if none.
std::string failing_field(const json& j) {
  try {
    parse_config(j);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

}  // namespace

TEST(Fnv1a, KnownDigests) {
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
  EXPECT_EQ(fnv1a_hex("foobar"), "85944171f73967e8");
}

TEST(ParseConfig, ConvexInstanceRoundTrips) {
  const RunConfig cfg = parse_config(base_config());
  EXPECT_EQ(cfg.cells, 64);
  EXPECT_EQ(cfg.steps, 80);
  EXPECT_DOUBLE_EQ(cfg.problem.horizon, 0.2);
  EXPECT_DOUBLE_EQ(cfg.problem.drift.external_drift(0.125), 0.5 * std::sin(2 * std::numbers::pi * 0.125));
  EXPECT_FALSE(cfg.problem.drift.pair_kernel.is_zero());
  EXPECT_EQ(cfg.spec_hash.size(), 16u);
}

TEST(ParseConfig, HashIgnoresNumericsButNotProblemData) {
  json a = base_config(), b = base_config(), c = base_config();
  b["grid"]["cells"] = 128;
  b["solver"] = {{"max_iters", 10}};
  c["T"] = 0.3;
  EXPECT_EQ(parse_config(a).spec_hash, parse_config(b).spec_hash);
  EXPECT_NE(parse_config(a).spec_hash, parse_config(c).spec_hash);
  // key order in the source text does not matter
  const json reordered = json::parse(base_config().dump());
  EXPECT_EQ(parse_config(reordered).spec_hash, parse_config(a).spec_hash);
}

TEST(ParseConfig, ErrorsNameTheField) {
  json j = base_config();
  j["grid"]["cells"] = 3;
  EXPECT_EQ(failing_field(j), "grid.cells");

  j = base_config();
  j.erase("spec_version");
  EXPECT_EQ(failing_field(j), "spec_version");

  j = base_config();
  j["spec_version"] = 2;
  EXPECT_EQ(failing_field(j), "spec_version");

  j = base_config();
  j["mu0"]["sd"] = -0.1;
  EXPECT_EQ(failing_field(j), "mu0.sd");

  j = base_config();
  j["b0"][0]["k"] = "one";
  EXPECT_EQ(failing_field(j), "b0[0].k");

  j = base_config();
  j["kb"] = json::array();
  EXPECT_EQ(failing_field(j), "kb");

  j = base_config();
  j["convex"]["v0_cos"] = {0.0, 0.5};
  EXPECT_EQ(failing_field(j), "convex");

  j = base_config();
  j["mode"] = "schrodinger";
  j.erase("convex");
  j.erase("g");
  EXPECT_EQ(failing_field(j), "muT");

  j = base_config();
  j["solver"] = {{"init", "warm"}};
  EXPECT_EQ(failing_field(j), "solver.init");

  j = base_config();
  j["pair"] = {{"cells", 128}};
  EXPECT_EQ(failing_field(j), "pair.cells");

  j = base_config();
  j["particles"] = {{"girsanov_constant", "other"}};
  EXPECT_EQ(failing_field(j), "particles.girsanov_constant");
}

TEST(ParseConfig, BridgeModeReadsTarget) {
  json j = base_config();
  j.erase("convex");
  j.erase("g");
  j["mode"] = "schrodinger";
  j["muT"] = {{"kind", "cosine_bump"}, {"mean", 0.6}, {"amplitude", 0.5}};
  const RunConfig cfg = parse_config(j);
  EXPECT_EQ(cfg.problem.mode, Mode::schrodinger);
  ASSERT_TRUE(cfg.problem.target.has_value());
  EXPECT_EQ(cfg.problem.target->kind, DensitySpec::Kind::cosine_bump);
}

TEST(LoadConfig, MissingFileAndMalformedJson) {
  try {
    load_config("/nonexistent/config.json");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "--config");
  }
  const auto path = std::filesystem::temp_directory_path() / "mfc_malformed.json";
  std::ofstream(path) << "{\"spec_version\": 1,";
  try {
    load_config(path.string());
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "--config");
    EXPECT_NE(std::string(e.what()).find("malformed"), std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST(JsonNumber, FullPrecisionAndNullForNonFinite) {
  EXPECT_EQ(json_number(0.1), "0.10000000000000001");
  EXPECT_EQ(json_number(std::numeric_limits<double>::quiet_NaN()), "null");
  EXPECT_EQ(json_number(std::numeric_limits<double>::infinity()), "null");
  for (double x : {1.0 / 3.0, -2.5e-300, 6.02214076e23}) EXPECT_EQ(std::stod(json_number(x)), x);
}

TEST(EnergyReportJson, RoundTripIsExact) {
  EnergyReport r;
  r.kinetic = 1.0 / 3.0;
  r.drift_sq = 0.1;
  r.fisher_half = 2.0 / 7.0;
  r.entropy_diff = -0.0123456789;
  r.cross = 1e-17;
  r.div_term = std::numeric_limits<double>::quiet_NaN();
  r.running = 5.0;
  r.terminal = -1.25;
  r.total = 9.87654321;
  const EnergyReport back = energy_report_from_json(to_json(r));
  EXPECT_EQ(back.kinetic, r.kinetic);
  EXPECT_EQ(back.drift_sq, r.drift_sq);
  EXPECT_EQ(back.fisher_half, r.fisher_half);
  EXPECT_EQ(back.entropy_diff, r.entropy_diff);
  EXPECT_EQ(back.cross, r.cross);
  EXPECT_TRUE(std::isnan(back.div_term));
  EXPECT_EQ(back.running, r.running);
  EXPECT_EQ(back.terminal, r.terminal);
  EXPECT_EQ(back.total, r.total);
  EXPECT_NE(to_json(r).find("\"div_term\": null"), std::string::npos);
}

TEST(CsvWriter, RowsUseFullPrecision) {
  CsvWriter csv("N,value,label");
  csv.row(8, 0.1, std::string("a"));
  EXPECT_EQ(csv.str(), "N,value,label\n8,0.10000000000000001,a\n");
}

TEST(RunManifest, ListsEveryField) {
  RunManifest m;
  m.spec_hash = "0123456789abcdef";
  m.seed = 42;
  m.cells = 64;
  m.steps = 80;
  m.command = "solve";
  m.flags = {"--config", "x.json"};
  m.outputs = {"control.csv", "flow.csv"};
  const json j = json::parse(m.str());
  EXPECT_EQ(j.at("spec_hash"), "0123456789abcdef");
  EXPECT_EQ(j.at("seed"), 42);
  EXPECT_EQ(j.at("grid").at("M"), 64);
  EXPECT_EQ(j.at("grid").at("K"), 80);
  EXPECT_EQ(j.at("command").at("subcommand"), "solve");
  EXPECT_EQ(j.at("command").at("flags").size(), 2u);
  EXPECT_EQ(j.at("tool_version"), tool_version);
  EXPECT_EQ(j.at("outputs"), json({"control.csv", "flow.csv"}));
}
