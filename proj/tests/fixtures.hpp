#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "fleetad/clustering.hpp"
#include "fleetad/data.hpp"
#include "fleetad/fleet.hpp"
#include "fleetad/similarity.hpp"
#include "fleetad/strategies.hpp"
#include "oracles.hpp"

namespace fixtures {

inline std::string name(std::size_t i) { return "d" + std::to_string(i); }

// Graph over d0..d{n-1} with the given distances.
inline fleetad::SimilarityGraph graph_from(const oracle::Matrix& d) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < d.size(); ++i) ids.push_back(name(i));
  fleetad::SimilarityGraph g(ids);
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = i + 1; j < d.size(); ++j) g.set_weight(name(i), name(j), d[i][j]);
  return g;
}

inline fleetad::SyntheticFleetSpec small_spec(std::size_t devices, std::size_t clusters, std::uint64_t seed = 7) {
  fleetad::SyntheticFleetSpec s;
  s.n_devices = devices;
  s.n_clusters = clusters;
  s.t_train = 400;
  s.t_test = 300;
  s.seed = seed;
  return s;
}

// The clustering front half of the pipeline.
struct Clustered {
  fleetad::MetricSubset subset;
  fleetad::SimilarityGraph graph;
  fleetad::ClusterMap clusters;
};

inline Clustered cluster_fleet(const std::vector<fleetad::DeviceDataset>& datasets, std::size_t k) {
  Clustered c;
  c.subset = fleetad::select_metrics(datasets);
  c.graph = fleetad::build_similarity_graph(datasets, c.subset);
  c.clusters = fleetad::cluster_devices(c.graph, k);
  return c;
}

inline fleetad::StrategyOptions quick_options(std::size_t epochs = 5, std::size_t transfer_epochs = 2) {
  fleetad::StrategyOptions o;
  o.model.window_size = 5;
  o.model.hidden_size = 4;
  o.model.max_epochs = epochs;
  o.model.transfer_max_epochs = transfer_epochs;
  return o;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
  static std::mt19937_64 rng(std::random_device{}());
  auto p = std::filesystem::temp_directory_path() / ("fleetad-" + tag + "-" + std::to_string(rng() % 1000000000));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace fixtures
