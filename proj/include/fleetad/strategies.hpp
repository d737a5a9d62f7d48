#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fleetad/clustering.hpp"
#include "fleetad/data.hpp"
#include "fleetad/model.hpp"
#include "fleetad/similarity.hpp"

namespace fleetad {

enum class Strategy { Gm, Mpd, Cm, Icptl };

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view s);

// How much data a pooled (GM/CM) model sees per epoch.
//   Device: as many windows as its largest member device has, drawn evenly
//           from every member, so each model costs about one device's worth
//           of compute per epoch.
//   Full:   every member window.
enum class PooledBudget { Device, Full };

struct StrategyOptions {
  AutoencoderConfig model;
  std::uint64_t global_seed = 42;
  std::size_t train_stride = 1;
  PooledBudget pooled_budget = PooledBudget::Device;
  double cm_retrain_threshold = 0.25;  // membership Jaccard distance
};

struct TrainingCost {
  std::size_t models_trained = 0;
  std::size_t total_epochs = 0;
  double total_wall_time_ms = 0.0;
};

struct StrategyRun {
  Strategy strategy = Strategy::Mpd;
  std::map<std::string, TrainedModel> models;    // by model key
  std::map<std::string, std::string> routing;    // device -> model key
  TrainingCost cost;

  const TrainedModel& model_for(const std::string& device) const;
};

// Seed of the model trained on exactly this (sorted) member set. Models with
// the same training data therefore share a seed across strategies.
std::uint64_t model_seed(std::uint64_t global_seed, std::span<const std::string> members);

std::string cluster_key(ClusterId id);

// Training and validation windows of one device under a normalization.
struct DeviceWindows {
  Eigen::MatrixXd train;
  Eigen::MatrixXd val;
};

// Chronological split: the last validation_fraction of windows (at least one
// when fraction > 0 and there are two or more windows) become validation.
DeviceWindows device_windows(const DeviceDataset& dataset, const Normalization& norm, const AutoencoderConfig& config,
                             std::size_t stride);

// Train one model on the pooled data of `members` (sorted by id).
TrainedModel train_pooled(std::span<const DeviceDataset* const> members, const StrategyOptions& options,
                          const std::string& strategy, const std::string& key);
TrainedModel train_single(const DeviceDataset& device, const StrategyOptions& options, const std::string& strategy);
TrainedModel transfer_single(const TrainedModel& source, const DeviceDataset& target, const StrategyOptions& options);

StrategyRun run_gm(std::span<const DeviceDataset> datasets, const StrategyOptions& options);
StrategyRun run_mpd(std::span<const DeviceDataset> datasets, const StrategyOptions& options);
StrategyRun run_cm(std::span<const DeviceDataset> datasets, const ClusterMap& clusters, const StrategyOptions& options);
StrategyRun run_icptl(std::span<const DeviceDataset> datasets, const TrainingPlan& plan, const StrategyOptions& options);

// `models_trained,total_epochs,wall_time_ms`
std::string format_cost(const TrainingCost& cost);

// ---- fleet dynamics ----

enum class FleetEventType { DeviceAdded, DeviceRemoved, DeviceDrifted };

std::string_view to_string(FleetEventType t);
FleetEventType parse_fleet_event(std::string_view s);

struct FleetEvent {
  FleetEventType type = FleetEventType::DeviceAdded;
  std::string device_id;
};

struct FleetState {
  SimilarityGraph graph;
  ClusterMap clusters;
  TrainingPlan plan;
  // Cluster membership at the time each CM model was (re)trained.
  std::map<ClusterId, std::set<std::string>> cm_trained_members;
};

FleetState initial_fleet_state(const SimilarityGraph& graph, const ClusterMap& clusters);

enum class ActionKind {
  IcptlTransfer,     // fine-tune `target` from `source`'s model
  CmRetrainCluster,  // retrain the model of `cluster` on its current members
  CmRetireCluster,   // `cluster` has no members left
};

struct RetrainAction {
  ActionKind kind = ActionKind::IcptlTransfer;
  std::string target;
  std::string source;
  ClusterId cluster = -1;

  bool operator==(const RetrainAction&) const = default;
};

struct FleetUpdate {
  FleetState state;
  std::vector<RetrainAction> actions;
  std::optional<Reassignment> placement;
};

double jaccard_distance(const std::set<std::string>& a, const std::set<std::string>& b);

// `updated_graph` must cover the post-event device set (for removals it may be
// the prior graph; the device is dropped from it).
FleetUpdate handle_fleet_event(const FleetState& state, const FleetEvent& event, const SimilarityGraph& updated_graph,
                               double cm_retrain_threshold = 0.25);

// Execute the actions against ICPTL and CM runs (either may be null) and
// update routing for the event. `datasets` must contain every device involved.
void apply_fleet_update(const FleetUpdate& update, const FleetEvent& event, std::span<const DeviceDataset> datasets,
                        const StrategyOptions& options, StrategyRun* icptl, StrategyRun* cm);

std::string format_actions(const std::vector<RetrainAction>& actions);

}  // namespace fleetad
