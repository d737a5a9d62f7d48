#include "fleetad/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fleetad/error.hpp"
#include "text_util.hpp"

namespace fleetad {

namespace {

constexpr double kNormTolerance = 1e-9;

void check_pair(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty())
    throw Error(ErrorCode::LengthMismatch,
                "distributions have lengths " + std::to_string(p.size()) + " and " + std::to_string(q.size()));
  auto check = [](std::span<const double> v, const char* name) {
    double sum = 0.0;
    for (double x : v) {
      if (!(x >= 0.0)) throw Error(ErrorCode::NotNormalized, std::string(name) + " has a negative or NaN entry");
      sum += x;
    }
    if (std::abs(sum - 1.0) > kNormTolerance)
      throw Error(ErrorCode::NotNormalized, std::string(name) + " sums to " + detail::format_g17(sum));
  };
  check(p, "p");
  check(q, "q");
}

// KL without validation; 0 * log(0 / q) = 0.
double kl_unchecked(std::span<const double> p, std::span<const double> q) {
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) return std::numeric_limits<double>::infinity();
    sum += p[i] * std::log(p[i] / q[i]);
  }
  return sum;
}

double js_unchecked(std::span<const double> p, std::span<const double> q) {
  std::vector<double> m(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
  // Rounding can push the sum a hair below zero for identical inputs.
  return std::max(0.0, 0.5 * kl_unchecked(p, m) + 0.5 * kl_unchecked(q, m));
}

}  // namespace

std::vector<DeviceDistributions> estimate_distributions(const ScaledData& scaled, std::size_t bins) {
  if (bins < 2) throw Error(ErrorCode::ConfigInvalid, "histogram needs at least 2 bins");
  if (scaled.values.empty()) throw Error(ErrorCode::ConfigInvalid, "no scaled data");
  const auto h = static_cast<std::size_t>(scaled.values.front().rows());
  const double b = static_cast<double>(bins);

  std::vector<DeviceDistributions> out(scaled.values.size(), DeviceDistributions(h));
  for (std::size_t k = 0; k < h; ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& v : scaled.values) {
      if (v.rows() != static_cast<Eigen::Index>(h)) throw Error(ErrorCode::BinMismatch, "metric count differs");
      if (v.cols() == 0) continue;
      lo = std::min(lo, v.row(row).minCoeff());
      hi = std::max(hi, v.row(row).maxCoeff());
    }
    const bool flagged = k < scaled.degenerate.size() && scaled.degenerate[k];
    const bool degenerate = flagged || !(hi > lo);
    const double span = degenerate ? 1.0 : hi - lo;

    std::vector<double> edges(bins + 1);
    for (std::size_t e = 0; e <= bins; ++e) edges[e] = lo + span * static_cast<double>(e) / b;
    if (!degenerate) edges[bins] = hi;

    for (std::size_t d = 0; d < scaled.values.size(); ++d) {
      auto& dist = out[d][k];
      dist.bin_edges = edges;
      dist.degenerate = degenerate;
      dist.probabilities.assign(bins, 0.0);
      const auto& values = scaled.values[d];
      const auto t = values.cols();
      if (t == 0) throw Error(ErrorCode::ConfigInvalid, scaled.device_ids[d] + " has no samples");
      if (degenerate) {
        dist.probabilities[0] = 1.0;
        continue;
      }
      std::vector<std::size_t> counts(bins, 0);
      for (Eigen::Index i = 0; i < t; ++i) {
        const double pos = (values(row, i) - lo) / span * b;
        auto idx = static_cast<std::ptrdiff_t>(std::floor(pos));
        idx = std::clamp<std::ptrdiff_t>(idx, 0, static_cast<std::ptrdiff_t>(bins) - 1);
        ++counts[static_cast<std::size_t>(idx)];
      }
      for (std::size_t i = 0; i < bins; ++i) dist.probabilities[i] = static_cast<double>(counts[i]) / static_cast<double>(t);
    }
  }
  return out;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  check_pair(p, q);
  return kl_unchecked(p, q);
}

double js_divergence(std::span<const double> p, std::span<const double> q) {
  check_pair(p, q);
  return js_unchecked(p, q);
}

double js_distance(std::span<const double> p, std::span<const double> q) { return std::sqrt(js_divergence(p, q)); }

double sim_dist(const DeviceDistributions& a, const DeviceDistributions& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::BinMismatch, "devices have different metric counts");
  double sum = 0.0;
  for (std::size_t h = 0; h < a.size(); ++h) {
    if (a[h].bin_edges != b[h].bin_edges) throw Error(ErrorCode::BinMismatch, "bin edges differ for metric " + std::to_string(h));
    // js_distance squared is the divergence itself.
    sum += js_divergence(a[h].probabilities, b[h].probabilities);
  }
  return std::sqrt(sum);
}

SimilarityGraph::SimilarityGraph(std::vector<std::string> vertices) : vertices_(std::move(vertices)) {
  std::sort(vertices_.begin(), vertices_.end());
  if (std::adjacent_find(vertices_.begin(), vertices_.end()) != vertices_.end())
    throw Error(ErrorCode::ConfigInvalid, "duplicate vertex in similarity graph");
  weights_.assign(vertices_.size() * vertices_.size(), std::numeric_limits<double>::quiet_NaN());
}

bool SimilarityGraph::contains(const std::string& device) const {
  return std::binary_search(vertices_.begin(), vertices_.end(), device);
}

std::size_t SimilarityGraph::index_of(const std::string& device) const {
  auto it = std::lower_bound(vertices_.begin(), vertices_.end(), device);
  if (it == vertices_.end() || *it != device) throw Error(ErrorCode::UnknownDevice, "unknown device " + device);
  return static_cast<std::size_t>(it - vertices_.begin());
}

void SimilarityGraph::set_weight(const std::string& a, const std::string& b, double weight) {
  if (a == b) throw Error(ErrorCode::ConfigInvalid, "self edge on " + a);
  if (!std::isfinite(weight) || weight < 0.0) throw Error(ErrorCode::ConfigInvalid, "edge weight must be finite and >= 0");
  const auto i = index_of(a), j = index_of(b), n = vertices_.size();
  weights_[i * n + j] = weight;
  weights_[j * n + i] = weight;
}

double SimilarityGraph::weight(const std::string& a, const std::string& b) const {
  return weight(index_of(a), index_of(b));
}

std::vector<WeightedEdge> SimilarityGraph::edges() const {
  std::vector<WeightedEdge> out;
  const auto n = vertices_.size();
  out.reserve(n * (n - (n ? 1 : 0)) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) out.push_back({vertices_[i], vertices_[j], weights_[i * n + j]});
  return out;
}

SimilarityGraph SimilarityGraph::subgraph(std::span<const std::string> devices) const {
  SimilarityGraph sub(std::vector<std::string>(devices.begin(), devices.end()));
  const auto& v = sub.vertices();
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = i + 1; j < v.size(); ++j) {
      const double w = weight(v[i], v[j]);
      if (std::isnan(w)) throw Error(ErrorCode::DisconnectedCluster, "missing edge " + v[i] + "," + v[j]);
      sub.set_weight(v[i], v[j], w);
    }
  return sub;
}

SimilarityGraph SimilarityGraph::without(const std::string& device) const {
  index_of(device);
  std::vector<std::string> rest;
  for (const auto& v : vertices_)
    if (v != device) rest.push_back(v);
  return subgraph(rest);
}

SimilarityGraph build_similarity_graph(std::span<const DeviceDataset> datasets, const MetricSubset& subset,
                                       const SimilarityOptions& options) {
  if (datasets.size() < 2) throw Error(ErrorCode::ConfigInvalid, "similarity graph needs at least 2 devices");
  const ScaledData scaled = scale_by_range(datasets, subset, options.full_minmax);
  const auto dists = estimate_distributions(scaled, options.bins);
  SimilarityGraph graph(scaled.device_ids);
  // scaled.device_ids is sorted, matching the graph's vertex order.
  for (std::size_t i = 0; i < dists.size(); ++i)
    for (std::size_t j = i + 1; j < dists.size(); ++j)
      graph.set_weight(scaled.device_ids[i], scaled.device_ids[j], sim_dist(dists[i], dists[j]));
  return graph;
}

std::string format_graph(const SimilarityGraph& graph) {
  std::string out;
  for (const auto& e : graph.edges()) out += e.a + "," + e.b + "," + detail::format_g17(e.weight) + "\n";
  return out;
}

SimilarityGraph parse_graph(const std::string& text) {
  struct Row {
    std::string a, b;
    double w;
  };
  std::vector<Row> rows;
  std::vector<std::string> names;
  for (auto line : detail::split(text, '\n')) {
    line = detail::trim(line);
    if (line.empty()) continue;
    auto cells = detail::split(line, ',');
    if (cells.size() != 3) throw Error(ErrorCode::ArtifactCorrupt, "graph line must have 3 fields");
    auto w = detail::parse_double(cells[2]);
    if (!w) throw Error(ErrorCode::ArtifactCorrupt, "graph weight is not numeric");
    rows.push_back({std::string(detail::trim(cells[0])), std::string(detail::trim(cells[1])), *w});
    names.push_back(rows.back().a);
    names.push_back(rows.back().b);
  }
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  SimilarityGraph graph(names);
  for (const auto& r : rows) graph.set_weight(r.a, r.b, r.w);
  for (const auto& e : graph.edges())
    if (std::isnan(e.weight)) throw Error(ErrorCode::ArtifactCorrupt, "graph is not complete: missing " + e.a + "," + e.b);
  return graph;
}

}  // namespace fleetad
