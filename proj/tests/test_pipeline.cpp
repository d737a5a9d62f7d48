#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "fleetad/pipeline.hpp"

namespace fs = std::filesystem;
using namespace fleetad;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Result {
  int status;
  std::string out, err;
};

// A six-device fleet and a config with a deliberately tiny model.
class PipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fixtures::temp_dir("pipeline");
    std::ofstream(root_ / "fleet.ini") << "[fleet]\nn_devices = 6\nn_clusters = 2\nt_train = 400\nt_test = 300\nseed = 3\n";
    CommandOptions gen;
    gen.config = root_ / "fleet.ini";
    gen.out = root_ / "data";
    std::ostringstream out, err;
    ASSERT_EQ(execute("genfleet", gen, out, err), 0) << err.str();
    std::ofstream(root_ / "run.ini") << "[run]\nid = t\n[data]\nroot = data\n[clustering]\nk = 2\n"
                                        "[model]\nwindow_size = 5\nhidden_size = 4\nmax_epochs = 3\n"
                                        "transfer_max_epochs = 1\n[sweep]\nk_values = 1,2\n";
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static Result run(const std::string& cmd, const std::string& out_dir, CommandOptions o = {}) {
    if (o.config.empty()) o.config = root_ / "run.ini";
    o.out = root_ / out_dir;
    std::ostringstream out, err;
    const int status = execute(cmd, o, out, err);
    return {status, out.str(), err.str()};
  }

  static void run_all(const std::string& out_dir) {
    for (const auto& s : kStages) ASSERT_EQ(run(s, out_dir).status, 0) << s;
  }

  static RunManifest manifest(const std::string& out_dir) { return RunManifest::load(root_ / out_dir / "t" / "manifest.txt"); }

  static inline fs::path root_;
};

}  // namespace

TEST_F(PipelineTest, MissingDependencyExitsTwo) {
  const auto r = run("cluster", "fresh");
  EXPECT_EQ(r.status, 2);
  EXPECT_EQ(r.err.rfind("error: StageDependencyMissing:", 0), 0u) << r.err;
}

TEST_F(PipelineTest, MissingConfigExitsTwo) {
  CommandOptions o;
  o.config = root_ / "absent.ini";
  const auto r = run("inspect", "x", o);
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("ConfigInvalid"), std::string::npos);
  std::ofstream(root_ / "rootless.ini") << "[run]\nid = r\n";
  o.config = root_ / "rootless.ini";
  EXPECT_EQ(run("inspect", "x", o).status, 2);
}

TEST_F(PipelineTest, FullRunRecordsEveryStage) {
  run_all("full");
  const auto m = manifest("full");
  for (const auto& s : kStages) EXPECT_TRUE(m.has("stage." + s + ".outputs")) << s;
  const fs::path dir = root_ / "full" / "t";
  for (const char* f : {"inspect.txt", "metrics.txt", "graph.csv", "clusters.txt", "plan.txt", "models/index.txt",
                        "timings.txt", "evaluation.csv", "report.txt"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_TRUE(m.has("volatile.timings.txt"));
  const auto csv = slurp(dir / "evaluation.csv");
  for (const char* s : {"\ngm,", "\nmpd,", "\ncm,", "\nicptl,"}) EXPECT_NE(csv.find(s), std::string::npos) << s;
  EXPECT_EQ(csv.find("wall"), std::string::npos);
}

TEST_F(PipelineTest, IdenticalRunsMatchOutsideTimestamps) {
  run_all("det_a");
  run_all("det_b");
  auto strip = [](const RunManifest& m) {
    std::map<std::string, std::string> kept;
    for (const auto& [k, v] : m.entries)
      if (!is_time_dependent(k)) kept[k] = v;
    return kept;
  };
  const auto a = strip(manifest("det_a")), b = strip(manifest("det_b"));
  EXPECT_EQ(a, b);
  EXPECT_GT(a.size(), 20u);
  EXPECT_TRUE(is_time_dependent("stage.train.completed"));
  EXPECT_TRUE(is_time_dependent("volatile.timings.txt"));
  EXPECT_FALSE(is_time_dependent("artifact.evaluation.csv"));
}

TEST_F(PipelineTest, RerunIsUpToDateUnlessForced) {
  run_all("idem");
  const auto before = manifest("idem").at("artifact.models/index.txt");
  EXPECT_NE(run("train", "idem").out.find("train: up to date"), std::string::npos);
  CommandOptions forced;
  forced.force = true;
  const auto r = run("train", "idem", forced);
  EXPECT_NE(r.out.find("train: wrote"), std::string::npos);
  EXPECT_EQ(manifest("idem").at("artifact.models/index.txt"), before);

  // A changed k invalidates clustering downstream.
  CommandOptions k3;
  k3.k = 3;
  EXPECT_NE(run("cluster", "idem", k3).out.find("cluster: wrote"), std::string::npos);
}

TEST_F(PipelineTest, TamperedArtifactIsDetected) {
  for (const char* s : {"inspect", "select-metrics", "similarity", "cluster"}) ASSERT_EQ(run(s, "tamper").status, 0);
  std::ofstream(root_ / "tamper" / "t" / "clusters.txt", std::ios::app) << "cluster.9 = nobody\n";
  const auto r = run("plan", "tamper");
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.err.find("ArtifactCorrupt"), std::string::npos) << r.err;
}

TEST_F(PipelineTest, SweepAtOneClusterEqualsGlobalModel) {
  run_all("sweep");
  const auto r = run("sweep-k", "sweep");
  ASSERT_EQ(r.status, 0) << r.err;
  const auto table = slurp(root_ / "sweep" / "t" / "sweep_cm.csv");
  const auto csv = slurp(root_ / "sweep" / "t" / "evaluation.csv");
  const auto gm = csv.find("\ngm,", csv.find("strategy,mean_auc"));
  ASSERT_NE(gm, std::string::npos);
  const std::string gm_row = csv.substr(gm + 4, csv.find('\n', gm + 1) - gm - 4);
  const auto k1 = table.find("\n1,");
  ASSERT_NE(k1, std::string::npos);
  const std::string k1_row = table.substr(k1 + 3, table.find('\n', k1 + 1) - k1 - 3);
  EXPECT_EQ(k1_row, gm_row);
  EXPECT_NE(table.find("best_k,"), std::string::npos);

  std::ofstream(root_ / "empty.ini") << "[run]\nid = t\n[data]\nroot = data\n";
  CommandOptions o;
  o.config = root_ / "empty.ini";
  EXPECT_EQ(run("sweep-k", "sweep", o).status, 2);
  CommandOptions gm_sweep;
  gm_sweep.strategy = "gm";
  EXPECT_EQ(run("sweep-k", "sweep", gm_sweep).status, 2);
}

TEST_F(PipelineTest, FleetEventsUpdateArtifacts) {
  run_all("events");
  const fs::path dir = root_ / "events" / "t";
  const auto clusters_before = slurp(dir / "clusters.txt");
  CommandOptions o;
  o.args = {"remove", "dev-00"};
  auto r = run("fleet-event", "events", o);
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "events" / "0001-device_removed.txt"));
  EXPECT_EQ(slurp(dir / "clusters.txt").find("dev-00"), std::string::npos);
  EXPECT_NE(clusters_before.find("dev-00"), std::string::npos);
  EXPECT_EQ(slurp(dir / "models" / "index.txt").find(",dev-00,"), std::string::npos);

  o.args = {"add", "dev-00"};
  r = run("fleet-event", "events", o);
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.out.find("icptl_transfer"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(dir / "events" / "0001-device_removed.txt"));
  EXPECT_TRUE(fs::exists(dir / "events" / "0002-device_added.txt"));
  EXPECT_EQ(run("evaluate", "events").status, 0);

  o.args = {"remove", "ghost"};
  EXPECT_EQ(run("fleet-event", "events", o).status, 1);
  o.args = {"explode", "dev-01"};
  EXPECT_EQ(run("fleet-event", "events", o).status, 2);
}

TEST(Cli, ExitCodes) {
  const std::string bin = FLEETAD_BIN;
  EXPECT_EQ(std::system((bin + " --help > /dev/null").c_str()), 0);
  EXPECT_EQ(WEXITSTATUS(std::system((bin + " > /dev/null 2>&1").c_str())), 2);
  EXPECT_EQ(WEXITSTATUS(std::system((bin + " frobnicate > /dev/null 2>&1").c_str())), 2);
  const auto dir = fixtures::temp_dir("cli");
  std::ofstream(dir / "run.ini") << "[run]\nid = c\n[data]\nroot = data\n";
  const std::string plan = bin + " plan --config " + (dir / "run.ini").string() + " --out " + (dir / "runs").string() +
                           " > /dev/null 2>&1";
  EXPECT_EQ(WEXITSTATUS(std::system(plan.c_str())), 2);
  fs::remove_all(dir);
}
