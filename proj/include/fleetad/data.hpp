#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fleetad {

// Normal-operation telemetry of one device. Matrices are metrics x timesteps,
// so each column is one timestep.
struct DeviceDataset {
  std::string device_id;
  std::vector<std::string> metric_names;
  Eigen::MatrixXd train;
  std::optional<Eigen::MatrixXd> test;
  std::optional<std::vector<std::uint8_t>> test_labels;
  // Number of cells filled forward during ingestion (0 when gaps are rejected).
  std::size_t filled_cells = 0;

  std::size_t num_metrics() const { return static_cast<std::size_t>(train.rows()); }
  std::size_t train_length() const { return static_cast<std::size_t>(train.cols()); }
  bool has_labeled_test() const { return test.has_value() && test_labels.has_value(); }
};

enum class Layout { SmdLike, SingleDir };

struct IngestOptions {
  Layout layout = Layout::SmdLike;
  bool forward_fill = false;
};

// Reads `<root>/train/<device>.txt` (+ optional test/ and test_label/) for the
// SMD-like layout, or `<root>/<device>.txt` for single_dir. Devices are
// returned sorted by id.
std::vector<DeviceDataset> ingest_dataset(const std::filesystem::path& root,
                                          const IngestOptions& options = {});

// One row per timestep, comma-separated, no header. Returns metrics x timesteps.
Eigen::MatrixXd read_matrix_file(const std::filesystem::path& file, bool forward_fill = false,
                                 std::size_t* filled_cells = nullptr);
std::vector<std::uint8_t> read_label_file(const std::filesystem::path& file);

// Shortest round-trip representation, so read(write(x)) == x bit-for-bit.
void write_matrix_file(const std::filesystem::path& file, const Eigen::MatrixXd& metrics_by_time);
void write_label_file(const std::filesystem::path& file, std::span<const std::uint8_t> labels);
void write_dataset(const std::filesystem::path& root, std::span<const DeviceDataset> datasets);

// Population variance over devices of each metric's train-split mean.
Eigen::VectorXd variance_of_mean(std::span<const DeviceDataset> datasets);

enum class DropReason { Kept, AllZeroMajority, CollinearWith, LowVariance };

struct MetricRationale {
  double variance_of_mean = 0.0;
  DropReason reason = DropReason::LowVariance;
  std::optional<std::size_t> collinear_with;
};

struct MetricSubset {
  std::vector<std::size_t> indices;
  std::vector<MetricRationale> rationale;  // one per metric
};

struct SelectionOptions {
  std::size_t top_n = 6;
  double zero_fraction_limit = 0.5;
  double collinearity_threshold = 0.95;
};

MetricSubset select_metrics(std::span<const DeviceDataset> datasets, const SelectionOptions& options = {});

std::string format_metric_subset(const MetricSubset& subset, std::span<const std::string> metric_names);
MetricSubset parse_metric_subset(const std::string& text);

double pearson(std::span<const double> x, std::span<const double> y);

// Representative metrics of every device, divided by the metric's global range.
struct ScaledData {
  std::vector<std::string> device_ids;
  std::vector<Eigen::MatrixXd> values;  // per device: kept metrics x train timesteps
  std::vector<bool> degenerate;         // per kept metric: global range was zero
};

ScaledData scale_by_range(std::span<const DeviceDataset> datasets, const MetricSubset& subset,
                          bool full_minmax = false);

enum class Split { Train, Test };

// Window i covers timesteps [i*stride, i*stride + window). Windows are stored
// flattened, one per column, timestep-major (all metrics of the first step,
// then the next step, ...).
struct WindowSet {
  std::size_t window = 0;
  std::size_t stride = 1;
  std::size_t metrics = 0;
  Eigen::MatrixXd flat;

  std::size_t count() const { return static_cast<std::size_t>(flat.cols()); }
  std::size_t start(std::size_t i) const { return i * stride; }
  Eigen::Map<const Eigen::MatrixXd> matrix(std::size_t i) const {
    return {flat.col(static_cast<Eigen::Index>(i)).data(), static_cast<Eigen::Index>(metrics),
            static_cast<Eigen::Index>(window)};
  }
};

WindowSet make_windows(const Eigen::MatrixXd& series, std::size_t window, std::size_t stride);
WindowSet make_windows(const DeviceDataset& dataset, Split split, std::size_t window, std::size_t stride);

}  // namespace fleetad
