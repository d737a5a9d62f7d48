#include "fleetad/strategies.hpp"

#include <algorithm>
#include <set>

#include "fleetad/error.hpp"
#include "text_util.hpp"

namespace fleetad {

namespace {

std::map<std::string, const DeviceDataset*> index_devices(std::span<const DeviceDataset> datasets) {
  std::map<std::string, const DeviceDataset*> out;
  for (const auto& d : datasets)
    if (!out.emplace(d.device_id, &d).second) throw Error(ErrorCode::ConfigInvalid, "duplicate device " + d.device_id);
  return out;
}

const DeviceDataset& lookup(const std::map<std::string, const DeviceDataset*>& index, const std::string& id) {
  auto it = index.find(id);
  if (it == index.end()) throw Error(ErrorCode::UnknownDevice, "no dataset for device " + id);
  return *it->second;
}

// Evenly spaced subset of `take` columns, order preserved.
Eigen::MatrixXd take_even(const Eigen::MatrixXd& windows, std::size_t take) {
  const auto n = static_cast<std::size_t>(windows.cols());
  if (take >= n) return windows;
  Eigen::MatrixXd out(windows.rows(), static_cast<Eigen::Index>(take));
  for (std::size_t j = 0; j < take; ++j) out.col(static_cast<Eigen::Index>(j)) = windows.col(static_cast<Eigen::Index>(j * n / take));
  return out;
}

Eigen::MatrixXd pool(const std::vector<Eigen::MatrixXd>& parts, std::optional<std::size_t> budget) {
  std::vector<Eigen::MatrixXd> chosen;
  const std::size_t n = parts.size();
  Eigen::Index total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t share = budget ? *budget / n + (i < *budget % n ? 1 : 0) : static_cast<std::size_t>(parts[i].cols());
    chosen.push_back(take_even(parts[i], share));
    total += chosen.back().cols();
  }
  Eigen::MatrixXd out(parts.empty() ? 0 : parts.front().rows(), total);
  Eigen::Index at = 0;
  for (const auto& c : chosen) {
    out.middleCols(at, c.cols()) = c;
    at += c.cols();
  }
  return out;
}

void add_cost(TrainingCost& cost, const TrainedModel& model) {
  ++cost.models_trained;
  cost.total_epochs += model.provenance.epochs_run;
  cost.total_wall_time_ms += model.provenance.wall_time_ms;
}

}  // namespace

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::Gm: return "gm";
    case Strategy::Mpd: return "mpd";
    case Strategy::Cm: return "cm";
    case Strategy::Icptl: return "icptl";
  }
  return "?";
}

Strategy parse_strategy(std::string_view s) {
  if (s == "gm") return Strategy::Gm;
  if (s == "mpd") return Strategy::Mpd;
  if (s == "cm") return Strategy::Cm;
  if (s == "icptl") return Strategy::Icptl;
  throw Error(ErrorCode::ConfigInvalid, "unknown strategy '" + std::string(s) + "'");
}

const TrainedModel& StrategyRun::model_for(const std::string& device) const {
  auto r = routing.find(device);
  if (r == routing.end()) throw Error(ErrorCode::UnknownDevice, "device " + device + " is not routed");
  auto m = models.find(r->second);
  if (m == models.end()) throw Error(ErrorCode::StaleState, "routing points at missing model " + r->second);
  return m->second;
}

std::uint64_t model_seed(std::uint64_t global_seed, std::span<const std::string> members) {
  std::vector<std::string> sorted(members.begin(), members.end());
  std::sort(sorted.begin(), sorted.end());
  // FNV-1a over the seed bytes and the newline-joined ids, then a splitmix64 finalizer.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](unsigned char byte) {
    h ^= byte;
    h *= 0x100000001b3ULL;
  };
  for (int i = 0; i < 8; ++i) mix(static_cast<unsigned char>(global_seed >> (8 * i)));
  for (const auto& m : sorted) {
    for (unsigned char c : m) mix(c);
    mix('\n');
  }
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebULL;
  h ^= h >> 31;
  return h;
}

std::string cluster_key(ClusterId id) { return "cluster-" + std::to_string(id); }

DeviceWindows device_windows(const DeviceDataset& dataset, const Normalization& norm, const AutoencoderConfig& config,
                             std::size_t stride) {
  const auto windows = make_windows(apply_normalization(norm, dataset.train), config.window_size, stride);
  const auto n = static_cast<std::size_t>(windows.count());
  std::size_t n_val = static_cast<std::size_t>(static_cast<double>(n) * config.validation_fraction);
  if (config.validation_fraction > 0.0 && n_val == 0 && n >= 2) n_val = 1;
  const std::size_t n_train = n - n_val;
  DeviceWindows out;
  out.train = windows.flat.leftCols(static_cast<Eigen::Index>(n_train));
  out.val = windows.flat.rightCols(static_cast<Eigen::Index>(n_val));
  return out;
}

TrainedModel train_pooled(std::span<const DeviceDataset* const> members_in, const StrategyOptions& options,
                          const std::string& strategy, const std::string& key) {
  if (members_in.empty()) throw Error(ErrorCode::EmptyCluster, "model " + key + " has no member devices");
  std::vector<const DeviceDataset*> members(members_in.begin(), members_in.end());
  std::sort(members.begin(), members.end(), [](auto* a, auto* b) { return a->device_id < b->device_id; });

  std::vector<const Eigen::MatrixXd*> series;
  std::vector<std::string> ids;
  for (const auto* d : members) {
    series.push_back(&d->train);
    ids.push_back(d->device_id);
  }
  const Normalization norm = fit_normalization(series);

  std::vector<Eigen::MatrixXd> train_parts, val_parts;
  std::size_t max_train = 0, max_val = 0;
  for (const auto* d : members) {
    auto w = device_windows(*d, norm, options.model, options.train_stride);
    max_train = std::max<std::size_t>(max_train, static_cast<std::size_t>(w.train.cols()));
    max_val = std::max<std::size_t>(max_val, static_cast<std::size_t>(w.val.cols()));
    train_parts.push_back(std::move(w.train));
    val_parts.push_back(std::move(w.val));
  }
  const bool capped = options.pooled_budget == PooledBudget::Device;
  const Eigen::MatrixXd train_windows = pool(train_parts, capped ? std::optional(max_train) : std::nullopt);
  const Eigen::MatrixXd val_windows = pool(val_parts, capped ? std::optional(max_val) : std::nullopt);

  TrainedModel model = init_model(options.model, members.front()->num_metrics(), model_seed(options.global_seed, ids));
  model.normalization = norm;
  model.provenance.strategy = strategy;
  model.provenance.model_id = key;
  auto trained = train(std::move(model), train_windows, val_windows, options.model.max_epochs);
  return trained;
}

TrainedModel train_single(const DeviceDataset& device, const StrategyOptions& options, const std::string& strategy) {
  const DeviceDataset* members[] = {&device};
  return train_pooled(members, options, strategy, device.device_id);
}

TrainedModel transfer_single(const TrainedModel& source, const DeviceDataset& target, const StrategyOptions& options) {
  const Eigen::MatrixXd* series[] = {&target.train};
  const Normalization norm = fit_normalization(series);
  const auto w = device_windows(target, norm, options.model, options.train_stride);
  AutoencoderConfig cfg = options.model;
  const std::string ids[] = {target.device_id};
  cfg.seed = model_seed(options.global_seed, ids);
  auto model = transfer_train(source, w.train, w.val, cfg, norm);
  model.provenance.strategy = "icptl";
  model.provenance.model_id = target.device_id;
  return model;
}

StrategyRun run_gm(std::span<const DeviceDataset> datasets, const StrategyOptions& options) {
  if (datasets.empty()) throw Error(ErrorCode::ConfigInvalid, "no devices");
  std::vector<const DeviceDataset*> members;
  for (const auto& d : datasets) members.push_back(&d);
  StrategyRun run;
  run.strategy = Strategy::Gm;
  auto model = train_pooled(members, options, "gm", "global");
  add_cost(run.cost, model);
  run.models.emplace("global", std::move(model));
  for (const auto& d : datasets) run.routing[d.device_id] = "global";
  return run;
}

StrategyRun run_mpd(std::span<const DeviceDataset> datasets, const StrategyOptions& options) {
  StrategyRun run;
  run.strategy = Strategy::Mpd;
  index_devices(datasets);
  for (const auto& d : datasets) {
    auto model = train_single(d, options, "mpd");
    add_cost(run.cost, model);
    run.models.emplace(d.device_id, std::move(model));
    run.routing[d.device_id] = d.device_id;
  }
  return run;
}

StrategyRun run_cm(std::span<const DeviceDataset> datasets, const ClusterMap& clusters, const StrategyOptions& options) {
  const auto index = index_devices(datasets);
  if (clusters.devices() != [&] {
        std::vector<std::string> ids;
        for (const auto& [id, d] : index) ids.push_back(id);
        return ids;
      }())
    throw Error(ErrorCode::PlanMismatch, "cluster map devices differ from the dataset devices");
  StrategyRun run;
  run.strategy = Strategy::Cm;
  for (const auto& [id, member_ids] : clusters.clusters) {
    if (member_ids.empty()) throw Error(ErrorCode::EmptyCluster, "cluster " + std::to_string(id) + " is empty");
    std::vector<const DeviceDataset*> members;
    for (const auto& m : member_ids) members.push_back(&lookup(index, m));
    const std::string key = cluster_key(id);
    auto model = train_pooled(members, options, "cm", key);
    add_cost(run.cost, model);
    run.models.emplace(key, std::move(model));
    for (const auto& m : member_ids) run.routing[m] = key;
  }
  return run;
}

StrategyRun run_icptl(std::span<const DeviceDataset> datasets, const TrainingPlan& plan, const StrategyOptions& options) {
  const auto index = index_devices(datasets);
  std::set<std::string> planned;
  for (const auto& c : plan) {
    if (!planned.insert(c.root).second) throw Error(ErrorCode::PlanMismatch, "device " + c.root + " planned twice");
    for (const auto& s : c.steps)
      if (!planned.insert(s.target).second) throw Error(ErrorCode::PlanMismatch, "device " + s.target + " planned twice");
  }
  std::set<std::string> available;
  for (const auto& [id, d] : index) available.insert(id);
  if (planned != available) throw Error(ErrorCode::PlanMismatch, "plan devices differ from the dataset devices");

  StrategyRun run;
  run.strategy = Strategy::Icptl;
  for (const auto& c : plan) {
    auto root = train_single(lookup(index, c.root), options, "icptl");
    add_cost(run.cost, root);
    run.models.emplace(c.root, std::move(root));
    run.routing[c.root] = c.root;
    // Steps are sequential: each source must already be trained.
    for (const auto& s : c.steps) {
      auto src = run.models.find(s.source);
      if (src == run.models.end())
        throw Error(ErrorCode::PlanMismatch, "step source " + s.source + " is not trained before " + s.target);
      auto model = transfer_single(src->second, lookup(index, s.target), options);
      add_cost(run.cost, model);
      run.models.emplace(s.target, std::move(model));
      run.routing[s.target] = s.target;
    }
  }
  return run;
}

std::string format_cost(const TrainingCost& cost) {
  return std::to_string(cost.models_trained) + "," + std::to_string(cost.total_epochs) + "," +
         detail::format_g17(cost.total_wall_time_ms);
}

// ---- fleet dynamics ----

std::string_view to_string(FleetEventType t) {
  switch (t) {
    case FleetEventType::DeviceAdded: return "device_added";
    case FleetEventType::DeviceRemoved: return "device_removed";
    case FleetEventType::DeviceDrifted: return "device_drifted";
  }
  return "?";
}

FleetEventType parse_fleet_event(std::string_view s) {
  if (s == "device_added" || s == "add") return FleetEventType::DeviceAdded;
  if (s == "device_removed" || s == "remove") return FleetEventType::DeviceRemoved;
  if (s == "device_drifted" || s == "drift") return FleetEventType::DeviceDrifted;
  throw Error(ErrorCode::ConfigInvalid, "unknown fleet event '" + std::string(s) + "'");
}

FleetState initial_fleet_state(const SimilarityGraph& graph, const ClusterMap& clusters) {
  FleetState state;
  state.graph = graph;
  state.clusters = clusters;
  state.plan = plan_training(graph, clusters);
  state.cm_trained_members = clusters.clusters;
  return state;
}

double jaccard_distance(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t common = 0;
  for (const auto& x : a) common += b.count(x);
  const std::size_t uni = a.size() + b.size() - common;
  return 1.0 - static_cast<double>(common) / static_cast<double>(uni);
}

namespace {

void check_cm_cluster(FleetUpdate& update, ClusterId id, double threshold) {
  auto& state = update.state;
  auto current = state.clusters.clusters.find(id);
  auto trained = state.cm_trained_members.find(id);
  if (current == state.clusters.clusters.end()) {
    if (trained != state.cm_trained_members.end()) {
      update.actions.push_back({ActionKind::CmRetireCluster, {}, {}, id});
      state.cm_trained_members.erase(trained);
    }
    return;
  }
  const bool changed = trained == state.cm_trained_members.end() ||
                       jaccard_distance(current->second, trained->second) > threshold;
  if (changed) {
    update.actions.push_back({ActionKind::CmRetrainCluster, {}, {}, id});
    state.cm_trained_members[id] = current->second;
  }
}

void check_consistent(const FleetState& state) {
  if (state.clusters.devices() != state.graph.vertices())
    throw Error(ErrorCode::StaleState, "cluster map and similarity graph cover different devices");
}

}  // namespace

FleetUpdate handle_fleet_event(const FleetState& state, const FleetEvent& event, const SimilarityGraph& updated_graph,
                               double cm_retrain_threshold) {
  check_consistent(state);
  FleetUpdate update;
  update.state = state;
  const std::string& dev = event.device_id;

  switch (event.type) {
    case FleetEventType::DeviceAdded: {
      if (state.clusters.contains(dev)) throw Error(ErrorCode::StaleState, "device " + dev + " is already in the fleet");
      if (!updated_graph.contains(dev))
        throw Error(ErrorCode::StaleState, "updated graph has no vertex for added device " + dev);
      for (const auto& d : state.clusters.devices())
        if (!updated_graph.contains(d)) throw Error(ErrorCode::StaleState, "updated graph lost device " + d);
      update.state.graph = updated_graph.subgraph([&] {
        auto ids = state.clusters.devices();
        ids.push_back(dev);
        return ids;
      }());
      auto placement = reassign_device(update.state.graph, state.clusters, dev);
      update.state.clusters = placement.clusters;
      update.actions.push_back({ActionKind::IcptlTransfer, dev, placement.nearest_neighbor, placement.to});
      check_cm_cluster(update, placement.to, cm_retrain_threshold);
      update.placement = std::move(placement);
      break;
    }
    case FleetEventType::DeviceRemoved: {
      const ClusterId from = state.clusters.cluster_of(dev);
      update.state.clusters = remove_device(state.clusters, dev);
      update.state.graph = state.graph.without(dev);
      // ICPTL models of the remaining devices stay valid; nothing to retrain.
      check_cm_cluster(update, from, cm_retrain_threshold);
      break;
    }
    case FleetEventType::DeviceDrifted: {
      state.clusters.cluster_of(dev);
      for (const auto& d : state.clusters.devices())
        if (!updated_graph.contains(d)) throw Error(ErrorCode::StaleState, "updated graph lost device " + d);
      update.state.graph = updated_graph.subgraph(state.clusters.devices());
      auto placement = reassign_device(update.state.graph, state.clusters, dev);
      update.state.clusters = placement.clusters;
      if (placement.action == ReassignAction::Moved) {
        update.actions.push_back({ActionKind::IcptlTransfer, dev, placement.nearest_neighbor, placement.to});
        check_cm_cluster(update, placement.from, cm_retrain_threshold);
        check_cm_cluster(update, placement.to, cm_retrain_threshold);
      }
      update.placement = std::move(placement);
      break;
    }
  }
  update.state.plan = plan_training(update.state.graph, update.state.clusters);
  return update;
}

void apply_fleet_update(const FleetUpdate& update, const FleetEvent& event, std::span<const DeviceDataset> datasets,
                        const StrategyOptions& options, StrategyRun* icptl, StrategyRun* cm) {
  const auto index = index_devices(datasets);
  if (event.type == FleetEventType::DeviceRemoved) {
    if (icptl) {
      icptl->routing.erase(event.device_id);
      icptl->models.erase(event.device_id);
    }
    if (cm) cm->routing.erase(event.device_id);
  }
  for (const auto& a : update.actions) {
    switch (a.kind) {
      case ActionKind::IcptlTransfer: {
        if (!icptl) break;
        const auto& source = icptl->model_for(a.source);
        auto model = transfer_single(source, lookup(index, a.target), options);
        add_cost(icptl->cost, model);
        icptl->models.insert_or_assign(a.target, std::move(model));
        icptl->routing[a.target] = a.target;
        break;
      }
      case ActionKind::CmRetrainCluster: {
        if (!cm) break;
        std::vector<const DeviceDataset*> members;
        for (const auto& m : update.state.clusters.clusters.at(a.cluster)) members.push_back(&lookup(index, m));
        const std::string key = cluster_key(a.cluster);
        auto model = train_pooled(members, options, "cm", key);
        add_cost(cm->cost, model);
        cm->models.insert_or_assign(key, std::move(model));
        break;
      }
      case ActionKind::CmRetireCluster:
        if (cm) cm->models.erase(cluster_key(a.cluster));
        break;
    }
  }
  if (cm && event.type != FleetEventType::DeviceRemoved && update.placement)
    cm->routing[event.device_id] = cluster_key(update.placement->to);
}

std::string format_actions(const std::vector<RetrainAction>& actions) {
  std::string out;
  for (const auto& a : actions) {
    switch (a.kind) {
      case ActionKind::IcptlTransfer:
        out += "icptl_transfer," + a.target + "," + a.source + "\n";
        break;
      case ActionKind::CmRetrainCluster:
        out += "cm_retrain," + cluster_key(a.cluster) + "\n";
        break;
      case ActionKind::CmRetireCluster:
        out += "cm_retire," + cluster_key(a.cluster) + "\n";
        break;
    }
  }
  return out;
}

}  // namespace fleetad
