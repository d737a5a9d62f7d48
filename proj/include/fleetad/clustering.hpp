#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fleetad/similarity.hpp"

namespace fleetad {

using ClusterId = int;

// Partition of devices. Cluster ids are stable across reassignments.
struct ClusterMap {
  std::map<ClusterId, std::set<std::string>> clusters;

  std::size_t size() const { return clusters.size(); }
  // Throws UnknownDevice.
  ClusterId cluster_of(const std::string& device) const;
  bool contains(const std::string& device) const;
  std::vector<std::string> devices() const;
  ClusterId next_id() const { return clusters.empty() ? 0 : clusters.rbegin()->first + 1; }

  bool operator==(const ClusterMap&) const = default;
};

// Kruskal-style agglomeration: merge across the globally shortest remaining
// edge until k clusters remain. Ties break on (a, b). Resulting ids are
// numbered 0..k-1 in order of each cluster's smallest device id.
ClusterMap cluster_devices(const SimilarityGraph& graph, std::size_t k);

struct TransferStep {
  std::string source;
  std::string target;
  double weight = 0.0;
};

struct ClusterPlan {
  ClusterId cluster = 0;
  std::string root;
  std::vector<TransferStep> steps;
};

// Per cluster, in cluster-id order.
using TrainingPlan = std::vector<ClusterPlan>;

// Prim-style spanning tree from the smaller endpoint of the cluster's
// shortest edge; each step attaches the nearest unvisited device.
ClusterPlan plan_cluster_training(const SimilarityGraph& graph, const std::set<std::string>& cluster, ClusterId id = 0);
TrainingPlan plan_training(const SimilarityGraph& graph, const ClusterMap& clusters);

enum class ReassignAction { JoinedExisting, Moved, Unchanged };

struct Reassignment {
  ClusterMap clusters;
  ReassignAction action = ReassignAction::Unchanged;
  std::string nearest_neighbor;
  ClusterId from = -1;  // -1 when the device was new
  ClusterId to = -1;
};

// Nearest device among those already clustered (ties break by id).
std::string nearest_neighbor(const SimilarityGraph& graph, const ClusterMap& clusters, const std::string& device);

// Place `device` in its nearest neighbour's cluster. A cluster emptied by a
// move disappears.
Reassignment reassign_device(const SimilarityGraph& graph, const ClusterMap& clusters, const std::string& device);
ClusterMap remove_device(const ClusterMap& clusters, const std::string& device);

std::string format_clusters(const ClusterMap& clusters);
ClusterMap parse_clusters(const std::string& text);
std::string format_plan(const TrainingPlan& plan);
TrainingPlan parse_plan(const std::string& text);

}  // namespace fleetad
