#include "fleetad/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

#include "fleetad/error.hpp"
#include "text_util.hpp"

namespace fleetad {

namespace {

class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n) : parent_(n), rank_(n, 0) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> rank_;
};

bool edge_less(const WeightedEdge& x, const WeightedEdge& y) {
  return std::tie(x.weight, x.a, x.b) < std::tie(y.weight, y.a, y.b);
}

}  // namespace

ClusterId ClusterMap::cluster_of(const std::string& device) const {
  for (const auto& [id, members] : clusters)
    if (members.count(device)) return id;
  throw Error(ErrorCode::UnknownDevice, "device " + device + " is not in any cluster");
}

bool ClusterMap::contains(const std::string& device) const {
  for (const auto& [id, members] : clusters)
    if (members.count(device)) return true;
  return false;
}

std::vector<std::string> ClusterMap::devices() const {
  std::vector<std::string> out;
  for (const auto& [id, members] : clusters) out.insert(out.end(), members.begin(), members.end());
  std::sort(out.begin(), out.end());
  return out;
}

ClusterMap cluster_devices(const SimilarityGraph& graph, std::size_t k) {
  const std::size_t n = graph.size();
  if (k < 1 || k > n)
    throw Error(ErrorCode::KOutOfRange, "k=" + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");

  auto edges = graph.edges();
  std::sort(edges.begin(), edges.end(), edge_less);

  DisjointSet sets(n);
  std::size_t remaining = n;
  // Intra-cluster edges are removed without merging.
  for (std::size_t e = 0; e < edges.size() && remaining > k; ++e) {
    if (sets.unite(graph.index_of(edges[e].a), graph.index_of(edges[e].b))) --remaining;
  }

  std::map<std::size_t, std::set<std::string>> by_root;
  for (std::size_t i = 0; i < n; ++i) by_root[sets.find(i)].insert(graph.vertices()[i]);
  std::vector<std::set<std::string>> groups;
  for (auto& [root, members] : by_root) groups.push_back(std::move(members));
  std::sort(groups.begin(), groups.end(), [](const auto& x, const auto& y) { return *x.begin() < *y.begin(); });

  ClusterMap out;
  for (std::size_t c = 0; c < groups.size(); ++c) out.clusters[static_cast<ClusterId>(c)] = std::move(groups[c]);
  return out;
}

ClusterPlan plan_cluster_training(const SimilarityGraph& graph, const std::set<std::string>& cluster, ClusterId id) {
  if (cluster.empty()) throw Error(ErrorCode::EmptyCluster, "cannot plan an empty cluster");
  for (const auto& d : cluster)
    if (!graph.contains(d)) throw Error(ErrorCode::UnknownDevice, "device " + d + " is not in the graph");

  ClusterPlan plan;
  plan.cluster = id;
  if (cluster.size() == 1) {
    plan.root = *cluster.begin();
    return plan;
  }

  const std::vector<std::string> members(cluster.begin(), cluster.end());
  std::vector<WeightedEdge> edges;
  for (std::size_t i = 0; i < members.size(); ++i)
    for (std::size_t j = i + 1; j < members.size(); ++j) {
      const double w = graph.weight(members[i], members[j]);
      if (std::isnan(w)) throw Error(ErrorCode::DisconnectedCluster, "missing edge " + members[i] + "," + members[j]);
      edges.push_back({members[i], members[j], w});
    }
  std::sort(edges.begin(), edges.end(), edge_less);
  plan.root = edges.front().a;

  std::set<std::string> visited{plan.root};
  while (visited.size() < members.size()) {
    // Edges are sorted, so the first crossing edge is the minimum one.
    const WeightedEdge* best = nullptr;
    for (const auto& e : edges) {
      if (visited.count(e.a) != visited.count(e.b)) {
        best = &e;
        break;
      }
    }
    if (!best) throw Error(ErrorCode::DisconnectedCluster, "cluster " + std::to_string(id) + " is disconnected");
    const bool a_visited = visited.count(best->a) > 0;
    TransferStep step{a_visited ? best->a : best->b, a_visited ? best->b : best->a, best->weight};
    visited.insert(step.target);
    plan.steps.push_back(std::move(step));
  }
  return plan;
}

TrainingPlan plan_training(const SimilarityGraph& graph, const ClusterMap& clusters) {
  TrainingPlan plan;
  for (const auto& [id, members] : clusters.clusters) plan.push_back(plan_cluster_training(graph, members, id));
  return plan;
}

std::string nearest_neighbor(const SimilarityGraph& graph, const ClusterMap& clusters, const std::string& device) {
  if (!graph.contains(device)) throw Error(ErrorCode::UnknownDevice, "device " + device + " is not in the graph");
  std::string best;
  double best_w = std::numeric_limits<double>::infinity();
  for (const auto& other : clusters.devices()) {
    if (other == device) continue;
    if (!graph.contains(other)) throw Error(ErrorCode::StaleState, "clustered device " + other + " missing from graph");
    const double w = graph.weight(device, other);
    if (w < best_w || (w == best_w && other < best)) {
      best_w = w;
      best = other;
    }
  }
  if (best.empty()) throw Error(ErrorCode::UnknownDevice, "no other clustered device to compare " + device + " with");
  return best;
}

Reassignment reassign_device(const SimilarityGraph& graph, const ClusterMap& clusters, const std::string& device) {
  Reassignment out;
  out.nearest_neighbor = nearest_neighbor(graph, clusters, device);
  out.to = clusters.cluster_of(out.nearest_neighbor);
  out.clusters = clusters;
  if (clusters.contains(device)) {
    out.from = clusters.cluster_of(device);
    if (out.from == out.to) {
      out.action = ReassignAction::Unchanged;
      return out;
    }
    out.clusters = remove_device(clusters, device);
    out.action = ReassignAction::Moved;
  } else {
    out.action = ReassignAction::JoinedExisting;
  }
  out.clusters.clusters[out.to].insert(device);
  return out;
}

ClusterMap remove_device(const ClusterMap& clusters, const std::string& device) {
  ClusterMap out = clusters;
  const ClusterId id = clusters.cluster_of(device);
  out.clusters[id].erase(device);
  if (out.clusters[id].empty()) out.clusters.erase(id);
  return out;
}

std::string format_clusters(const ClusterMap& clusters) {
  std::string out;
  for (const auto& [id, members] : clusters.clusters) {
    out += "cluster." + std::to_string(id) + " = ";
    bool first = true;
    for (const auto& m : members) {
      if (!first) out += ',';
      out += m;
      first = false;
    }
    out += "\n";
  }
  return out;
}

namespace {

ClusterId parse_cluster_id(std::string_view s) {
  auto v = detail::parse_double(s);
  if (!v || *v < 0 || std::floor(*v) != *v) throw Error(ErrorCode::ArtifactCorrupt, "bad cluster id");
  return static_cast<ClusterId>(*v);
}

}  // namespace

ClusterMap parse_clusters(const std::string& text) {
  ClusterMap out;
  std::set<std::string> seen;
  for (auto line : detail::split(text, '\n')) {
    line = detail::trim(line);
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    auto key = detail::trim(line.substr(0, eq));
    if (eq == std::string_view::npos || key.substr(0, 8) != "cluster.")
      throw Error(ErrorCode::ArtifactCorrupt, "bad cluster line");
    auto& members = out.clusters[parse_cluster_id(key.substr(8))];
    for (auto m : detail::split(line.substr(eq + 1), ',')) {
      auto name = std::string(detail::trim(m));
      if (name.empty()) continue;
      if (!seen.insert(name).second) throw Error(ErrorCode::ArtifactCorrupt, "device " + name + " in two clusters");
      members.insert(name);
    }
    if (members.empty()) throw Error(ErrorCode::ArtifactCorrupt, "empty cluster");
  }
  return out;
}

// Format: one block per cluster.
//   cluster <id> root <device>
//   step <source> <target> <weight>
std::string format_plan(const TrainingPlan& plan) {
  std::string out;
  for (const auto& c : plan) {
    out += "cluster " + std::to_string(c.cluster) + " root " + c.root + "\n";
    for (const auto& s : c.steps) out += "step " + s.source + " " + s.target + " " + detail::format_g17(s.weight) + "\n";
  }
  return out;
}

TrainingPlan parse_plan(const std::string& text) {
  TrainingPlan plan;
  for (auto line : detail::split(text, '\n')) {
    line = detail::trim(line);
    if (line.empty()) continue;
    auto f = detail::split(line, ' ');
    if (f.size() == 4 && f[0] == "cluster" && f[2] == "root") {
      plan.push_back({parse_cluster_id(f[1]), std::string(f[3]), {}});
    } else if (f.size() == 4 && f[0] == "step" && !plan.empty()) {
      auto w = detail::parse_double(f[3]);
      if (!w) throw Error(ErrorCode::ArtifactCorrupt, "bad plan weight");
      plan.back().steps.push_back({std::string(f[1]), std::string(f[2]), *w});
    } else {
      throw Error(ErrorCode::ArtifactCorrupt, "bad plan line: " + std::string(line));
    }
  }
  return plan;
}

}  // namespace fleetad
