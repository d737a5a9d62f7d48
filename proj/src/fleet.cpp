#include "fleetad/fleet.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>

#include "fleetad/clustering.hpp"
#include "fleetad/error.hpp"
#include "text_util.hpp"

namespace fleetad {

namespace {

// Portable streams: mt19937_64 output is fixed by the standard, the
// conversions below are ours.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }
  double normal() {
    if (spare_) {
      const double v = *spare_;
      spare_.reset();
      return v;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

struct MetricShape {
  double mean = 0.0;
  double amplitude = 0.0;
  double phase = 0.0;
  double loading = 0.0;
};

struct ClusterShape {
  double period = 0.0;
  std::vector<MetricShape> metrics;
};

std::string device_name(std::size_t i, std::size_t n) {
  const std::size_t digits = std::max<std::size_t>(2, std::to_string(n - 1).size());
  std::string s = std::to_string(i);
  return "dev-" + std::string(digits - s.size(), '0') + s;
}

}  // namespace

std::string_view to_string(AnomalyType t) {
  switch (t) {
    case AnomalyType::LevelShift: return "level_shift";
    case AnomalyType::Spike: return "spike";
    case AnomalyType::VarianceBurst: return "variance_burst";
  }
  return "?";
}

void SyntheticFleetSpec::validate() const {
  auto bad = [](const std::string& msg) { throw Error(ErrorCode::BadSpec, msg); };
  if (n_devices == 0) bad("n_devices must be positive");
  if (n_clusters == 0 || n_clusters > n_devices) bad("n_clusters must lie in [1, n_devices]");
  if (metrics == 0) bad("metrics must be positive");
  if (informative_metrics > metrics) bad("informative_metrics exceeds metrics");
  if (t_train < 2 || t_test < 2) bad("t_train and t_test must be at least 2");
  if (!(anomaly_rate > 0.0 && anomaly_rate < 0.5)) bad("anomaly_rate must lie in (0, 0.5)");
  if (anomaly_duration == 0 || anomaly_duration * 2 > t_test) bad("anomaly_duration must be positive and below t_test / 2");
  if (anomaly_types.empty()) bad("at least one anomaly type is required");
  if (!(noise >= 0.0) || !(device_jitter >= 0.0) || !(cluster_separation >= 0.0) || !(anomaly_magnitude > 0.0))
    bad("scales must be non-negative and the anomaly magnitude positive");
}

SyntheticFleet synthesize_fleet(const SyntheticFleetSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t k = spec.n_clusters;

  // Informative metrics: cluster means are a shuffled ladder so every pair of
  // clusters differs by at least separation / k on each of them.
  std::vector<ClusterShape> clusters(k);
  for (auto& c : clusters) {
    c.period = rng.uniform(16.0, 64.0);
    c.metrics.resize(spec.metrics);
  }
  for (std::size_t m = 0; m < spec.metrics; ++m) {
    std::vector<std::size_t> rung(k);
    for (std::size_t c = 0; c < k; ++c) rung[c] = c;
    for (std::size_t i = k; i > 1; --i) std::swap(rung[i - 1], rung[rng.index(i)]);
    for (std::size_t c = 0; c < k; ++c) {
      auto& ms = clusters[c].metrics[m];
      ms.mean = m < spec.informative_metrics ? spec.cluster_separation * (static_cast<double>(rung[c]) + 0.5) / static_cast<double>(k)
                                             : 0.5 * spec.cluster_separation;
      ms.amplitude = rng.uniform(0.05, 0.2);
      ms.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      ms.loading = rng.uniform(-0.15, 0.15);
    }
  }

  SyntheticFleet fleet;
  const std::size_t total = spec.t_train + spec.t_test;
  for (std::size_t d = 0; d < spec.n_devices; ++d) {
    const std::size_t cid = d * k / spec.n_devices;
    const auto& cs = clusters[cid];
    std::vector<MetricShape> shape = cs.metrics;
    for (auto& ms : shape) {
      ms.mean += spec.device_jitter * rng.normal();
      ms.amplitude *= 1.0 + spec.device_jitter * rng.normal();
      ms.phase += spec.device_jitter * rng.normal();
    }

    Eigen::MatrixXd series(static_cast<Eigen::Index>(spec.metrics), static_cast<Eigen::Index>(total));
    double latent = 0.0;
    for (std::size_t t = 0; t < total; ++t) {
      latent = 0.9 * latent + std::sqrt(1.0 - 0.81) * rng.normal();
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(t) / cs.period;
      for (std::size_t m = 0; m < spec.metrics; ++m) {
        const auto& ms = shape[m];
        series(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(t)) =
            ms.mean + ms.amplitude * std::sin(angle + ms.phase) + ms.loading * latent + spec.noise * rng.normal();
      }
    }

    DeviceDataset ds;
    ds.device_id = device_name(d, spec.n_devices);
    for (std::size_t m = 0; m < spec.metrics; ++m) ds.metric_names.push_back("m" + std::to_string(m));
    ds.train = series.leftCols(static_cast<Eigen::Index>(spec.t_train));
    Eigen::MatrixXd test = series.rightCols(static_cast<Eigen::Index>(spec.t_test));
    std::vector<std::uint8_t> labels(spec.t_test, 0);

    Eigen::VectorXd sigma(static_cast<Eigen::Index>(spec.metrics));
    for (Eigen::Index m = 0; m < sigma.size(); ++m) {
      const auto row = ds.train.row(m).array();
      sigma(m) = std::sqrt((row - row.mean()).square().mean());
    }

    // Non-overlapping events, one per slot, placed after a lead-in so the
    // scored region covers them.
    const double mean_len = static_cast<double>(spec.anomaly_duration);
    const auto events = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(spec.anomaly_rate * static_cast<double>(spec.t_test) / mean_len)));
    const std::size_t slot = spec.t_test / events;
    std::size_t type_index = rng.index(spec.anomaly_types.size());
    for (std::size_t e = 0; e < events; ++e) {
      const AnomalyType type = spec.anomaly_types[type_index++ % spec.anomaly_types.size()];
      const std::size_t len = type == AnomalyType::Spike ? 1 : std::min(spec.anomaly_duration, slot / 2);
      const std::size_t lead = slot / 4;
      if (lead + len > slot) continue;
      const std::size_t begin = e * slot + lead + rng.index(slot - lead - len + 1);

      std::vector<std::size_t> affected;
      for (std::size_t m = 0; m < spec.metrics; ++m)
        if (rng.uniform() < 0.5) affected.push_back(m);
      if (affected.empty()) affected.push_back(rng.index(spec.metrics));

      for (auto m : affected) {
        const auto row = static_cast<Eigen::Index>(m);
        const double amp = spec.anomaly_magnitude * sigma(row);
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        for (std::size_t t = begin; t < begin + len; ++t) {
          auto& v = test(row, static_cast<Eigen::Index>(t));
          switch (type) {
            case AnomalyType::LevelShift: v += sign * amp; break;
            case AnomalyType::Spike: v += sign * 1.5 * amp; break;
            case AnomalyType::VarianceBurst: v += 0.5 * amp * rng.normal(); break;
          }
        }
      }
      for (std::size_t t = begin; t < begin + len; ++t) labels[t] = 1;
    }

    ds.test = std::move(test);
    ds.test_labels = std::move(labels);
    fleet.datasets.push_back(std::move(ds));
    fleet.true_cluster.push_back(cid);
  }
  return fleet;
}

SyntheticFleet generate_fleet(const SyntheticFleetSpec& spec, const std::filesystem::path& root) {
  auto fleet = synthesize_fleet(spec);
  write_dataset(root, fleet.datasets);
  ClusterMap planted;
  for (std::size_t i = 0; i < fleet.datasets.size(); ++i)
    planted.clusters[static_cast<ClusterId>(fleet.true_cluster[i])].insert(fleet.datasets[i].device_id);
  detail::write_text_atomic(root / "clusters.txt", format_clusters(planted));
  return fleet;
}

}  // namespace fleetad
