#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fleetad/data.hpp"

namespace fleetad {

enum class AnomalyType { LevelShift, Spike, VarianceBurst };

// Synthetic device fleet with planted clusters. Each cluster has its own
// per-metric mean and seasonal amplitude/period; devices jitter around their
// cluster. Only the first `informative_metrics` metrics differ in mean across
// clusters; the rest share one mean.
struct SyntheticFleetSpec {
  std::size_t n_devices = 9;
  std::size_t n_clusters = 3;
  std::size_t metrics = 6;
  std::size_t informative_metrics = 4;
  std::size_t t_train = 2000;
  std::size_t t_test = 1000;
  double cluster_separation = 1.0;  // spread of cluster means
  double device_jitter = 0.02;      // per-device offset scale
  double noise = 0.05;
  std::vector<AnomalyType> anomaly_types{AnomalyType::LevelShift, AnomalyType::Spike, AnomalyType::VarianceBurst};
  double anomaly_magnitude = 1.5;  // in units of the metric's normal std
  std::size_t anomaly_duration = 20;
  double anomaly_rate = 0.05;  // target fraction of labeled test timesteps
  std::uint64_t seed = 7;

  void validate() const;
};

struct SyntheticFleet {
  std::vector<DeviceDataset> datasets;
  std::vector<std::size_t> true_cluster;  // parallel to datasets
};

SyntheticFleet synthesize_fleet(const SyntheticFleetSpec& spec);

// Synthesize and write in the SMD-like layout; also writes `clusters.txt`
// with the planted partition.
SyntheticFleet generate_fleet(const SyntheticFleetSpec& spec, const std::filesystem::path& root);

std::string_view to_string(AnomalyType t);

}  // namespace fleetad
