#include <fstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "fleetad/config.hpp"
#include "fleetad/error.hpp"

using namespace fleetad;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::IoError;
}

}  // namespace

TEST(Config, EmptyFileGivesDefaults) {
  const auto c = parse_config("");
  EXPECT_EQ(c.run_id, "default");
  EXPECT_EQ(c.k, 3u);
  EXPECT_EQ(c.similarity.bins, 100u);
  EXPECT_EQ(c.strategy.model.window_size, 10u);
  EXPECT_EQ(c.strategy.pooled_budget, PooledBudget::Device);
  EXPECT_EQ(c.f1_mode, F1Mode::Pointwise);
  EXPECT_TRUE(c.sweep_k.empty());
}

TEST(Config, ReadsEverySection) {
  const auto c = parse_config(
      "[run]\nid = r1\nseed = 9\n"
      "[data]\nroot = data\nlayout = single_dir\nforward_fill = true\ntop_n = 4\n"
      "[similarity]\nbins = 50\n[clustering]\nk = 2\n"
      "[model]\nwindow_size = 6\nhidden_size = 3\nactivation = relu\nearly_stopping = false\n"
      "[strategy]\npooled_budget = full\ncm_retrain_threshold = 0.5\n"
      "[eval]\nf1_mode = point_adjust\n[sweep]\nk_values = 1, 2,4\nstrategy = icptl\n",
      "/base");
  EXPECT_EQ(c.run_id, "r1");
  EXPECT_EQ(c.strategy.global_seed, 9u);
  EXPECT_EQ(c.data_root, std::filesystem::path("/base/data"));
  EXPECT_EQ(c.ingest.layout, Layout::SingleDir);
  EXPECT_TRUE(c.ingest.forward_fill);
  EXPECT_EQ(c.selection.top_n, 4u);
  EXPECT_EQ(c.similarity.bins, 50u);
  EXPECT_EQ(c.k, 2u);
  EXPECT_EQ(c.strategy.model.window_size, 6u);
  EXPECT_EQ(c.strategy.model.activation, Activation::Relu);
  EXPECT_FALSE(c.strategy.model.early_stopping);
  EXPECT_EQ(c.strategy.pooled_budget, PooledBudget::Full);
  EXPECT_EQ(c.strategy.cm_retrain_threshold, 0.5);
  EXPECT_EQ(c.f1_mode, F1Mode::PointAdjust);
  EXPECT_EQ(c.sweep_k, (std::vector<std::size_t>{1, 2, 4}));
  EXPECT_EQ(c.sweep_strategy, Strategy::Icptl);
}

TEST(Config, AbsoluteRootIsKept) {
  EXPECT_EQ(parse_config("[data]\nroot = /abs/path\n", "/base").data_root, std::filesystem::path("/abs/path"));
}

TEST(Config, InvalidInputsAreRejected) {
  for (const char* text : {"[model]\nwindw_size = 4\n", "[clustering]\nk = two\n", "[clustering]\nk = -1\n",
                           "[model]\nactivation = sigmoid\n", "[data]\nlayout = flat\n", "[sweep]\nk_values = 1,0\n",
                           "[sweep]\nstrategy = gm\n", "[strategy]\ntrain_stride = 0\n",
                           "[model]\nmax_epochs = 5\ntransfer_max_epochs = 6\n", "[run\nid = x\n"})
    EXPECT_EQ(code_of([&] { parse_config(text); }), ErrorCode::ConfigInvalid) << text;
  EXPECT_EQ(code_of([] { load_config("/nonexistent/fleetad.ini"); }), ErrorCode::ConfigInvalid);
}

TEST(Config, CanonicalFormRoundTrips) {
  const auto c = parse_config("[run]\nid = x\n[model]\nlearning_rate = 0.003\n[sweep]\nk_values = 2,3\n");
  const auto text = canonical_config(c);
  EXPECT_EQ(canonical_config(parse_config(text)), text);
  EXPECT_EQ(canonical_config(parse_config("[run]\nid=x\n[model]\nlearning_rate=3e-3\n[sweep]\nk_values=2,3")), text);
}

TEST(Config, LoadsRelativeToFile) {
  const auto dir = fixtures::temp_dir("config");
  std::ofstream(dir / "run.ini") << "[data]\nroot = fleet\n";
  EXPECT_EQ(load_config(dir / "run.ini").data_root, dir / "fleet");
  std::filesystem::remove_all(dir);
}

TEST(FleetSpec, ParsesAndRoundTrips) {
  const auto s = parse_fleet_spec("[fleet]\nn_devices = 12\nn_clusters = 4\nanomaly_types = spike\nseed = 5\n");
  EXPECT_EQ(s.n_devices, 12u);
  EXPECT_EQ(s.n_clusters, 4u);
  EXPECT_EQ(s.anomaly_types, (std::vector<AnomalyType>{AnomalyType::Spike}));
  EXPECT_EQ(s.seed, 5u);
  const auto text = canonical_fleet_spec(s);
  EXPECT_EQ(canonical_fleet_spec(parse_fleet_spec(text)), text);
}

TEST(FleetSpec, InvalidSpecsAreBadSpec) {
  for (const char* text : {"[fleet]\nn_clusters = 20\n", "[fleet]\nanomaly_types = wobble\n", "[fleet]\ncolour = red\n"})
    EXPECT_EQ(code_of([&] { parse_fleet_spec(text); }), ErrorCode::BadSpec) << text;
}
