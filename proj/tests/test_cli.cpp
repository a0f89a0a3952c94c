#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string config(const std::string& name) { return std::string(MFC_CONFIG_DIR) + "/" + name; }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    root_ = fs::temp_directory_path() / (std::string("mfc_cli_") + info->name());
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  fs::path dir(const std::string& name) const { return root_ / name; }

  /// Runs the tool with `args`, stderr captured; returns the exit status.
  int run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " \"" + std::string(MFC_CLI_PATH) + "\" " + args + " >/dev/null 2>\"" +
                            (root_ / "stderr.txt").string() + "\"";
    const int status = std::system(cmd.c_str());
    stderr_ = read_file(root_ / "stderr.txt");
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  /// Writes `j` to a config file under the test directory.
  std::string write_config(const std::string& name, const json& j) const {
    const fs::path p = root_ / name;
    std::ofstream(p) << j.dump(2);
    return p.string();
  }

  fs::path root_;
  std::string stderr_;
};

json load_json(const fs::path& p) { return json::parse(read_file(p)); }

}  // namespace

TEST_F(Cli, FreeInstanceSolvesToZero) {
  ASSERT_EQ(run("solve --config " + config("free.json") + " --out " + dir("out").string()), 0) << stderr_;
  const json meta = load_json(dir("out") / "metadata.json");
  EXPECT_LT(std::abs(meta.at("theta").get<double>()), 1e-6);
  EXPECT_TRUE(meta.at("converged").get<bool>());
  EXPECT_EQ(meta.at("status"), "OK");
}

TEST_F(Cli, TooFewCellsNamesTheField) {
  json j = load_json(config("free.json"));
  j["grid"]["cells"] = 3;
  EXPECT_EQ(run("solve --config " + write_config("bad.json", j) + " --out " + dir("out").string()), 1);
  EXPECT_NE(stderr_.find("grid.cells"), std::string::npos) << stderr_;
  EXPECT_FALSE(fs::exists(dir("out")));
}

TEST_F(Cli, UsageErrorsExitWithOne) {
  const std::string common = "--config " + config("free.json") + " --out " + dir("out").string();
  EXPECT_EQ(run("converge " + common + " --n"), 1);
  EXPECT_EQ(run("converge " + common + " --n 0"), 1);
  EXPECT_EQ(run("chaos " + common + " --n 8 --times 0,0.5,0.5"), 1);
  EXPECT_NE(stderr_.find("--times"), std::string::npos) << stderr_;
  EXPECT_EQ(run("kl " + common + " --n 8 --k 0"), 1);
  EXPECT_NE(stderr_.find("--k"), std::string::npos) << stderr_;
  EXPECT_EQ(run("solve --out " + dir("out").string()), 1);
  EXPECT_EQ(run("frobnicate " + common), 1);
  EXPECT_EQ(run("solve --config " + dir("missing.json").string() + " --out " + dir("out").string()), 1);
  EXPECT_FALSE(fs::exists(dir("out")));
}

TEST_F(Cli, NonConvergenceExitsWithTwoAndStillWrites) {
  json j = load_json(config("convex_interacting.json"));
  j["solver"]["max_iters"] = 2;
  EXPECT_EQ(run("solve --config " + write_config("short.json", j) + " --out " + dir("out").string()), 2);
  const json meta = load_json(dir("out") / "metadata.json");
  EXPECT_FALSE(meta.at("converged").get<bool>());
  EXPECT_EQ(meta.at("status"), "NOT_CONVERGED");
  EXPECT_TRUE(fs::exists(dir("out") / "flow.csv"));
  EXPECT_TRUE(fs::exists(dir("out") / "manifest.json"));
}

TEST_F(Cli, RerunGivesIdenticalBytes) {
  const std::string args = "converge --config " + config("convex_interacting.json") + " --n 8,16 --replicas 10 --seed 7";
  ASSERT_EQ(run(args + " --out " + dir("a").string()), 0) << stderr_;
  ASSERT_EQ(run(args + " --out " + dir("b").string()), 0) << stderr_;
  for (const char* f : {"converge.csv", "flow.csv", "control.csv", "velocity.csv", "energy.json", "metadata.json"})
    EXPECT_EQ(read_file(dir("a") / f), read_file(dir("b") / f)) << f;
}

TEST_F(Cli, WorkerCountDoesNotChangeOutputs) {
  const std::string args = " --config " + config("convex_interacting.json") + " --n 8,16 --replicas 12 --seed 9";
  for (const char* sub : {"converge", "chaos", "kl"}) {
    const fs::path one = dir(std::string(sub) + "_1"), eight = dir(std::string(sub) + "_8");
    ASSERT_EQ(run(sub + args + " --out " + one.string(), "MFC_THREADS=1"), 0) << stderr_;
    ASSERT_EQ(run(sub + args + " --out " + eight.string(), "MFC_THREADS=8"), 0) << stderr_;
    for (const auto& entry : fs::directory_iterator(one)) {
      if (entry.path().filename() == "manifest.json") continue;
      EXPECT_EQ(read_file(entry.path()), read_file(eight / entry.path().filename())) << sub << " " << entry.path();
    }
  }
}

TEST_F(Cli, ManifestListsEveryOutputOnce) {
  const std::string common = " --config " + config("convex_interacting.json") + " --seed 3";
  ASSERT_EQ(run("chaos" + common + " --n 8,16 --replicas 5 --times 0,1 --out " + dir("chaos").string()), 0);
  ASSERT_EQ(run("lift" + common + " --replicas 1000 --out " + dir("lift").string()), 0);
  ASSERT_EQ(run("solve --config " + config("convex_pair.json") + " --out " + dir("pair").string()), 0);
  for (const char* d : {"chaos", "lift", "pair"}) {
    std::set<std::string> files;
    int manifests = 0;
    for (const auto& entry : fs::directory_iterator(dir(d))) {
      const std::string name = entry.path().filename().string();
      if (name == "manifest.json") ++manifests;
      else files.insert(name);
    }
    EXPECT_EQ(manifests, 1) << d;
    const json m = load_json(dir(d) / "manifest.json");
    const auto listed = m.at("outputs").get<std::vector<std::string>>();
    EXPECT_EQ(std::set<std::string>(listed.begin(), listed.end()), files) << d;
    EXPECT_EQ(listed.size(), files.size()) << d;
    EXPECT_EQ(m.at("seed"), std::string(d) == "pair" ? 0 : 3);
    EXPECT_EQ(m.at("spec_hash").get<std::string>().size(), 16u);
  }
  const json pair = load_json(dir("pair") / "manifest.json");
  EXPECT_EQ(pair.at("grid").at("M"), 24);
  EXPECT_EQ(pair.at("grid").at("K"), 40);
}

TEST_F(Cli, SingleParticleGapIsMonteCarloError) {
  ASSERT_EQ(run("converge --config " + config("non_interacting.json") + " --n 1 --replicas 4000 --seed 3 --out " +
                dir("out").string()),
            0);
  std::ifstream in(dir("out") / "converge.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "N,cost_N,stderr,theta,gap");
  double n, cost, se, theta, gap;
  char c;
  std::istringstream(row) >> n >> c >> cost >> c >> se >> c >> theta >> c >> gap;
  EXPECT_EQ(n, 1.0);
  EXPECT_DOUBLE_EQ(gap, std::abs(cost - theta));
  // Euler-Maruyama against the grid scheme adds a small bias on top of the sampling error
  EXPECT_LT(gap, 3 * se + 2e-3);
}

TEST_F(Cli, NonInteractingKlBoundIsZero) {
  ASSERT_EQ(run("kl --config " + config("non_interacting.json") + " --n 4,16 --replicas 10 --out " +
                dir("out").string()),
            0);
  std::ifstream in(dir("out") / "kl.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "N,k,kl_bound,kl_to_wiener_per_particle,tv_bound,stderr");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    std::istringstream is(line);
    std::string n, k, bound, wiener, tv;
    std::getline(is, n, ',');
    std::getline(is, k, ',');
    std::getline(is, bound, ',');
    std::getline(is, wiener, ',');
    std::getline(is, tv, ',');
    EXPECT_EQ(std::stod(bound), 0.0) << line;
    EXPECT_EQ(std::stod(tv), 0.0) << line;
    EXPECT_GT(std::stod(wiener), 0.0) << line;
  }
  EXPECT_EQ(rows, 2);
}
