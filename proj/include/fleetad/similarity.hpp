#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fleetad/data.hpp"

namespace fleetad {

// Histogram of one metric for one device. Edges are shared by all devices.
struct MetricDistribution {
  std::vector<double> bin_edges;      // B + 1, strictly increasing
  std::vector<double> probabilities;  // B, sums to 1
  bool degenerate = false;
};

// Per device (in ScaledData order), one distribution per representative metric.
using DeviceDistributions = std::vector<MetricDistribution>;

std::vector<DeviceDistributions> estimate_distributions(const ScaledData& scaled, std::size_t bins);

// Natural log. Returns +infinity when q(i) = 0 for some p(i) > 0.
double kl_divergence(std::span<const double> p, std::span<const double> q);
// In [0, ln 2].
double js_divergence(std::span<const double> p, std::span<const double> q);
// Square root of js_divergence; a metric on probability vectors.
double js_distance(std::span<const double> p, std::span<const double> q);

// L2 norm over metrics of the per-metric JS distances.
double sim_dist(const DeviceDistributions& a, const DeviceDistributions& b);

struct WeightedEdge {
  std::string a;  // a < b lexicographically
  std::string b;
  double weight = 0.0;
};

// Complete undirected graph over devices, weights are similarity distances.
class SimilarityGraph {
 public:
  SimilarityGraph() = default;
  explicit SimilarityGraph(std::vector<std::string> vertices);

  const std::vector<std::string>& vertices() const { return vertices_; }
  std::size_t size() const { return vertices_.size(); }
  bool contains(const std::string& device) const;
  std::size_t index_of(const std::string& device) const;

  void set_weight(const std::string& a, const std::string& b, double weight);
  double weight(const std::string& a, const std::string& b) const;
  double weight(std::size_t i, std::size_t j) const { return weights_[i * vertices_.size() + j]; }

  // Every unordered pair once, sorted by (a, b).
  std::vector<WeightedEdge> edges() const;
  // Induced subgraph over the given devices.
  SimilarityGraph subgraph(std::span<const std::string> devices) const;
  // Copy without one vertex.
  SimilarityGraph without(const std::string& device) const;

 private:
  std::vector<std::string> vertices_;  // sorted
  std::vector<double> weights_;        // dense symmetric, NaN = unset
};

struct SimilarityOptions {
  std::size_t bins = 100;
  bool full_minmax = false;
};

SimilarityGraph build_similarity_graph(std::span<const DeviceDataset> datasets, const MetricSubset& subset,
                                       const SimilarityOptions& options = {});

// `device_i,device_j,weight` with 17 significant digits, sorted.
std::string format_graph(const SimilarityGraph& graph);
SimilarityGraph parse_graph(const std::string& text);

}  // namespace fleetad
