#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "fleetad/error.hpp"
#include "fleetad/strategies.hpp"

using namespace fleetad;

namespace {

struct Fleet {
  SyntheticFleet synthetic;
  fixtures::Clustered clustered;
  const std::vector<DeviceDataset>& ds() const { return synthetic.datasets; }
};

const Fleet& fleet6() {
  static const Fleet f = [] {
    Fleet out;
    out.synthetic = synthesize_fleet(fixtures::small_spec(6, 2, 3));
    out.clustered = fixtures::cluster_fleet(out.synthetic.datasets, 2);
    return out;
  }();
  return f;
}

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

TEST(Seeds, DependOnMemberSetOnly) {
  std::vector<std::string> a{"x", "y", "z"}, b{"x", "y"};
  EXPECT_EQ(model_seed(42, a), model_seed(42, a));
  EXPECT_NE(model_seed(42, a), model_seed(42, b));
  EXPECT_NE(model_seed(42, a), model_seed(43, a));
  // Joining must not be ambiguous.
  std::vector<std::string> c{"ab", "c"}, d{"a", "bc"};
  EXPECT_NE(model_seed(1, c), model_seed(1, d));
}

TEST(Windows, ChronologicalValidationTail) {
  const auto& d = fleet6().ds()[0];
  AutoencoderConfig c;
  c.window_size = 5;
  std::vector<const Eigen::MatrixXd*> v{&d.train};
  const auto norm = fit_normalization(v);
  const auto w = device_windows(d, norm, c, 1);
  const std::size_t total = d.train_length() - c.window_size + 1;
  EXPECT_EQ(static_cast<std::size_t>(w.train.cols() + w.val.cols()), total);
  EXPECT_EQ(static_cast<std::size_t>(w.val.cols()), total / 10);
  const auto all = make_windows(apply_normalization(norm, d.train), c.window_size, 1).flat;
  EXPECT_EQ(w.val.col(w.val.cols() - 1), all.col(all.cols() - 1));
  EXPECT_EQ(w.train.col(0), all.col(0));
}

TEST(Strategies, RoutingCoversEveryDevice) {
  const auto& f = fleet6();
  const auto o = fixtures::quick_options(2, 1);
  const auto gm = run_gm(f.ds(), o);
  const auto mpd = run_mpd(f.ds(), o);
  const auto cm = run_cm(f.ds(), f.clustered.clusters, o);
  const auto icptl = run_icptl(f.ds(), plan_training(f.clustered.graph, f.clustered.clusters), o);
  EXPECT_EQ(gm.models.size(), 1u);
  EXPECT_EQ(mpd.models.size(), 6u);
  EXPECT_EQ(cm.models.size(), 2u);
  EXPECT_EQ(icptl.models.size(), 6u);
  for (const auto& d : f.ds()) {
    EXPECT_EQ(gm.routing.at(d.device_id), "global");
    EXPECT_EQ(mpd.routing.at(d.device_id), d.device_id);
    EXPECT_EQ(cm.routing.at(d.device_id), cluster_key(f.clustered.clusters.cluster_of(d.device_id)));
    EXPECT_EQ(icptl.model_for(d.device_id).provenance.model_id, d.device_id);
  }
  EXPECT_EQ(code_of([&] { gm.model_for("nope"); }), ErrorCode::UnknownDevice);
}

TEST(Strategies, IcptlFollowsThePlan) {
  const auto& f = fleet6();
  const auto o = fixtures::quick_options(3, 2);
  const auto plan = plan_training(f.clustered.graph, f.clustered.clusters);
  const auto icptl = run_icptl(f.ds(), plan, o);
  for (const auto& cp : plan) {
    EXPECT_EQ(icptl.model_for(cp.root).provenance.source_model_id, "");
    EXPECT_EQ(icptl.model_for(cp.root).provenance.epochs_run, 3u);
    for (const auto& s : cp.steps) {
      EXPECT_EQ(icptl.model_for(s.target).provenance.source_model_id, s.source);
      EXPECT_LE(icptl.model_for(s.target).provenance.epochs_run, 2u);
    }
  }
}

TEST(Strategies, CostLawWithoutEarlyStopping) {
  const auto& f = fleet6();
  auto o = fixtures::quick_options(4, 2);
  o.model.early_stopping = false;
  EXPECT_EQ(run_gm(f.ds(), o).cost.total_epochs, 4u);
  EXPECT_EQ(run_mpd(f.ds(), o).cost.total_epochs, 24u);
  EXPECT_EQ(run_cm(f.ds(), f.clustered.clusters, o).cost.total_epochs, 8u);
  const auto icptl = run_icptl(f.ds(), plan_training(f.clustered.graph, f.clustered.clusters), o);
  EXPECT_EQ(icptl.cost.total_epochs, 2u * 4 + 4u * 2);
  EXPECT_EQ(icptl.cost.models_trained, 6u);
}

TEST(Strategies, PooledBudgetMatchesLargestDevice) {
  const auto& f = fleet6();
  auto o = fixtures::quick_options(1, 1);
  std::vector<const DeviceDataset*> members;
  for (const auto& d : f.ds()) members.push_back(&d);
  const auto device_budget = train_pooled(members, o, "gm", "global");
  o.pooled_budget = PooledBudget::Full;
  const auto full = train_pooled(members, o, "gm", "global");
  EXPECT_NE(parameter_bytes(device_budget), parameter_bytes(full));
  EXPECT_EQ(device_budget.normalization.offset, full.normalization.offset);
}

TEST(Strategies, PlanMismatchIsRejected) {
  const auto& f = fleet6();
  const auto o = fixtures::quick_options(1, 1);
  ClusterMap partial = f.clustered.clusters;
  partial.clusters.erase(partial.clusters.begin());
  EXPECT_EQ(code_of([&] { run_cm(f.ds(), partial, o); }), ErrorCode::PlanMismatch);
  auto plan = plan_training(f.clustered.graph, f.clustered.clusters);
  plan.pop_back();
  EXPECT_EQ(code_of([&] { run_icptl(f.ds(), plan, o); }), ErrorCode::PlanMismatch);
}

TEST(Strategies, SameOptionsGiveIdenticalModels) {
  const auto& f = fleet6();
  const auto o = fixtures::quick_options(2, 1);
  const auto a = run_cm(f.ds(), f.clustered.clusters, o), b = run_cm(f.ds(), f.clustered.clusters, o);
  for (const auto& [key, m] : a.models) EXPECT_EQ(parameter_bytes(m), parameter_bytes(b.models.at(key)));
}

TEST(Jaccard, Distance) {
  EXPECT_DOUBLE_EQ(jaccard_distance({"a", "b"}, {"a", "b"}), 0.0);
  EXPECT_DOUBLE_EQ(jaccard_distance({"a", "b", "c"}, {"a", "b"}), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(jaccard_distance({"a"}, {"b"}), 1.0);
  EXPECT_DOUBLE_EQ(jaccard_distance({}, {}), 0.0);
}

TEST(FleetEvents, StaleOrUnknownInputsAreRejected) {
  const auto& f = fleet6();
  const auto state = initial_fleet_state(f.clustered.graph, f.clustered.clusters);
  const std::string existing = f.ds()[0].device_id;
  EXPECT_EQ(code_of([&] { handle_fleet_event(state, {FleetEventType::DeviceAdded, existing}, f.clustered.graph); }),
            ErrorCode::StaleState);
  EXPECT_EQ(code_of([&] { handle_fleet_event(state, {FleetEventType::DeviceAdded, "new"}, f.clustered.graph); }),
            ErrorCode::StaleState);
  EXPECT_EQ(code_of([&] { handle_fleet_event(state, {FleetEventType::DeviceRemoved, "ghost"}, f.clustered.graph); }),
            ErrorCode::UnknownDevice);
  auto inconsistent = state;
  inconsistent.graph = f.clustered.graph.without(existing);
  EXPECT_EQ(code_of([&] { handle_fleet_event(inconsistent, {FleetEventType::DeviceRemoved, existing}, inconsistent.graph); }),
            ErrorCode::StaleState);
}

TEST(FleetEvents, RemovingWholeClusterRetiresItsModel) {
  const auto g = fixtures::graph_from({{0, 1, 9}, {1, 0, 9}, {9, 9, 0}});
  const auto state = initial_fleet_state(g, cluster_devices(g, 2));
  const auto u = handle_fleet_event(state, {FleetEventType::DeviceRemoved, "d2"}, g);
  ASSERT_EQ(u.actions.size(), 1u);
  EXPECT_EQ(u.actions[0].kind, ActionKind::CmRetireCluster);
  EXPECT_EQ(u.actions[0].cluster, 1);
  EXPECT_EQ(u.state.clusters.size(), 1u);
  EXPECT_EQ(u.state.plan.size(), 1u);
  EXPECT_EQ(format_actions(u.actions), "cm_retire,cluster-1\n");
}

TEST(FleetEvents, ApplyingAnAdditionTrainsOnlyWhatTheActionsSay) {
  auto synthetic = synthesize_fleet(fixtures::small_spec(5, 2, 4));
  std::vector<DeviceDataset> initial(synthetic.datasets.begin(), synthetic.datasets.end() - 1);
  const std::string newcomer = synthetic.datasets.back().device_id;
  const auto o = fixtures::quick_options(2, 1);
  const auto clustered = fixtures::cluster_fleet(initial, 2);
  auto icptl = run_icptl(initial, plan_training(clustered.graph, clustered.clusters), o);
  auto cm = run_cm(initial, clustered.clusters, o);
  const auto before_icptl = icptl.cost, before_cm = cm.cost;

  const auto graph = build_similarity_graph(synthetic.datasets, clustered.subset);
  const auto state = initial_fleet_state(clustered.graph, clustered.clusters);
  const FleetEvent event{FleetEventType::DeviceAdded, newcomer};
  const auto u = handle_fleet_event(state, event, graph);
  apply_fleet_update(u, event, synthetic.datasets, o, &icptl, &cm);

  ASSERT_FALSE(u.actions.empty());
  EXPECT_EQ(u.actions[0].kind, ActionKind::IcptlTransfer);
  EXPECT_EQ(icptl.model_for(newcomer).provenance.source_model_id, u.actions[0].source);
  EXPECT_EQ(icptl.cost.models_trained, before_icptl.models_trained + 1);
  const bool retrained = u.actions.size() > 1;
  EXPECT_EQ(cm.cost.models_trained, before_cm.models_trained + (retrained ? 1 : 0));
  EXPECT_EQ(cm.routing.at(newcomer), cluster_key(u.placement->to));
}
