#include "fleetad/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "fleetad/error.hpp"
#include "text_util.hpp"

namespace fleetad {

namespace fs = std::filesystem;
using detail::parse_double;
using detail::split;
using detail::trim;

namespace {

std::vector<std::string> default_metric_names(std::size_t m) {
  std::vector<std::string> names;
  names.reserve(m);
  for (std::size_t i = 0; i < m; ++i) names.push_back("m" + std::to_string(i));
  return names;
}

std::vector<fs::path> list_files(const fs::path& dir) {
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) return files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().filename().string().front() != '.') files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<const DeviceDataset*> sorted_by_id(std::span<const DeviceDataset> datasets) {
  std::vector<const DeviceDataset*> out;
  for (const auto& d : datasets) out.push_back(&d);
  std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->device_id < b->device_id; });
  return out;
}

void check_schema(std::span<const DeviceDataset> datasets) {
  if (datasets.empty()) throw Error(ErrorCode::HeterogeneousSchema, "no datasets");
  const auto& first = datasets.front();
  for (const auto& d : datasets) {
    if (d.num_metrics() != first.num_metrics() || d.metric_names != first.metric_names)
      throw Error(ErrorCode::HeterogeneousSchema,
                  "device " + d.device_id + " has a different metric schema than " + first.device_id);
  }
}

}  // namespace

Eigen::MatrixXd read_matrix_file(const fs::path& file, bool forward_fill, std::size_t* filled_cells) {
  const std::string text = detail::read_text(file);
  std::vector<double> values;
  std::size_t columns = 0;
  std::size_t rows = 0;
  std::size_t filled = 0;
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    auto cells = split(line, ',');
    if (rows == 0) {
      columns = cells.size();
    } else if (cells.size() != columns) {
      throw Error(ErrorCode::RaggedRows, file.string() + ":" + std::to_string(line_no) + ": expected " +
                                             std::to_string(columns) + " columns, got " +
                                             std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      auto cell = trim(cells[c]);
      std::optional<double> v;
      if (!cell.empty()) {
        v = parse_double(cell);
        if (!v) {
          throw Error(ErrorCode::NonNumeric,
                      file.string() + ":" + std::to_string(line_no) + ": cannot parse '" + std::string(cell) + "'");
        }
      }
      if (!v || std::isnan(*v)) {
        if (!forward_fill || rows == 0) {
          throw Error(ErrorCode::MissingValue,
                      file.string() + ":" + std::to_string(line_no) + ": missing value in column " + std::to_string(c));
        }
        v = values[(rows - 1) * columns + c];
        ++filled;
      }
      values.push_back(*v);
    }
    ++rows;
  }
  if (filled_cells) *filled_cells += filled;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(columns), static_cast<Eigen::Index>(rows));
  for (std::size_t t = 0; t < rows; ++t)
    for (std::size_t m = 0; m < columns; ++m) out(m, t) = values[t * columns + m];
  return out;
}

std::vector<std::uint8_t> read_label_file(const fs::path& file) {
  const std::string text = detail::read_text(file);
  std::vector<std::uint8_t> labels;
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    if (line == "0") {
      labels.push_back(0);
    } else if (line == "1") {
      labels.push_back(1);
    } else {
      throw Error(ErrorCode::NonNumeric,
                  file.string() + ":" + std::to_string(line_no) + ": label must be 0 or 1, got '" + std::string(line) + "'");
    }
  }
  return labels;
}

void write_matrix_file(const fs::path& file, const Eigen::MatrixXd& metrics_by_time) {
  std::string out;
  out.reserve(static_cast<std::size_t>(metrics_by_time.size()) * 12);
  for (Eigen::Index t = 0; t < metrics_by_time.cols(); ++t) {
    for (Eigen::Index m = 0; m < metrics_by_time.rows(); ++m) {
      if (m) out += ',';
      out += detail::format_double(metrics_by_time(m, t));
    }
    out += '\n';
  }
  detail::write_text_atomic(file, out);
}

void write_label_file(const fs::path& file, std::span<const std::uint8_t> labels) {
  std::string out;
  out.reserve(labels.size() * 2);
  for (auto l : labels) {
    out += l ? '1' : '0';
    out += '\n';
  }
  detail::write_text_atomic(file, out);
}

void write_dataset(const fs::path& root, std::span<const DeviceDataset> datasets) {
  for (const auto& d : datasets) {
    const std::string name = d.device_id + ".txt";
    write_matrix_file(root / "train" / name, d.train);
    if (d.test) write_matrix_file(root / "test" / name, *d.test);
    if (d.test_labels) write_label_file(root / "test_label" / name, *d.test_labels);
  }
}

std::vector<DeviceDataset> ingest_dataset(const fs::path& root, const IngestOptions& options) {
  const fs::path train_dir = options.layout == Layout::SmdLike ? root / "train" : root;
  auto files = list_files(train_dir);
  if (files.empty()) throw Error(ErrorCode::MissingFile, "no device files under " + train_dir.string());

  std::vector<DeviceDataset> out;
  std::set<std::string> seen;
  for (const auto& file : files) {
    DeviceDataset d;
    d.device_id = file.stem().string();
    if (!seen.insert(d.device_id).second)
      throw Error(ErrorCode::HeterogeneousSchema, "duplicate device id " + d.device_id);
    d.train = read_matrix_file(file, options.forward_fill, &d.filled_cells);
    if (d.train.cols() == 0) throw Error(ErrorCode::MissingFile, file.string() + " is empty");
    d.metric_names = default_metric_names(d.num_metrics());

    if (options.layout == Layout::SmdLike) {
      const fs::path test_file = root / "test" / file.filename();
      const fs::path label_file = root / "test_label" / file.filename();
      if (fs::exists(test_file)) {
        if (!fs::exists(label_file))
          throw Error(ErrorCode::MissingFile, "test split present but labels missing: " + label_file.string());
        d.test = read_matrix_file(test_file, options.forward_fill, &d.filled_cells);
        if (d.test->rows() != d.train.rows())
          throw Error(ErrorCode::RaggedRows, test_file.string() + ": column count differs from train split");
        d.test_labels = read_label_file(label_file);
        if (static_cast<Eigen::Index>(d.test_labels->size()) != d.test->cols())
          throw Error(ErrorCode::LengthMismatch, label_file.string() + ": " + std::to_string(d.test_labels->size()) +
                                                     " labels for " + std::to_string(d.test->cols()) + " test rows");
      }
    }
    out.push_back(std::move(d));
  }
  check_schema(out);
  return out;
}

Eigen::VectorXd variance_of_mean(std::span<const DeviceDataset> datasets) {
  check_schema(datasets);
  const auto sorted = sorted_by_id(datasets);
  const auto m = static_cast<Eigen::Index>(datasets.front().num_metrics());
  const double n = static_cast<double>(sorted.size());
  Eigen::MatrixXd means(m, static_cast<Eigen::Index>(sorted.size()));
  for (std::size_t i = 0; i < sorted.size(); ++i) means.col(static_cast<Eigen::Index>(i)) = sorted[i]->train.rowwise().mean();
  Eigen::VectorXd out(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    const double mu = means.row(r).sum() / n;
    out(r) = (means.row(r).array() - mu).square().sum() / n;
  }
  return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.empty()) throw Error(ErrorCode::LengthMismatch, "pearson: length mismatch");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

MetricSubset select_metrics(std::span<const DeviceDataset> datasets, const SelectionOptions& options) {
  check_schema(datasets);
  const std::size_t m = datasets.front().num_metrics();
  if (options.top_n == 0 || options.top_n > m)
    throw Error(ErrorCode::ConfigInvalid, "top_n must be in [1, " + std::to_string(m) + "]");
  if (!(options.zero_fraction_limit > 0.0 && options.zero_fraction_limit <= 1.0) ||
      !(options.collinearity_threshold > 0.0 && options.collinearity_threshold <= 1.0))
    throw Error(ErrorCode::ConfigInvalid, "selection thresholds must lie in (0, 1]");

  const Eigen::VectorXd vom = variance_of_mean(datasets);
  MetricSubset subset;
  subset.rationale.resize(m);
  for (std::size_t i = 0; i < m; ++i) subset.rationale[i].variance_of_mean = vom(static_cast<Eigen::Index>(i));

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vom(a) > vom(b); });

  const auto sorted = sorted_by_id(datasets);
  std::vector<std::size_t> candidates;
  for (std::size_t rank = 0; rank < options.top_n; ++rank) {
    const std::size_t metric = order[rank];
    std::size_t all_zero = 0;
    for (const auto* d : sorted) {
      if ((d->train.row(static_cast<Eigen::Index>(metric)).array() == 0.0).all()) ++all_zero;
    }
    if (static_cast<double>(all_zero) > options.zero_fraction_limit * static_cast<double>(sorted.size())) {
      subset.rationale[metric].reason = DropReason::AllZeroMajority;
    } else {
      candidates.push_back(metric);
    }
  }

  // Pooled train data, range-scaled per metric. Pearson is invariant to the
  // scaling, but the pooled series are built the same way as for clustering.
  MetricSubset pool_subset;
  pool_subset.indices = candidates;
  pool_subset.rationale = subset.rationale;
  std::vector<std::vector<double>> pooled(candidates.size());
  if (!candidates.empty()) {
    const ScaledData scaled = scale_by_range(datasets, pool_subset);
    for (std::size_t c = 0; c < candidates.size(); ++c)
      for (const auto& values : scaled.values)
        for (Eigen::Index t = 0; t < values.cols(); ++t) pooled[c].push_back(values(static_cast<Eigen::Index>(c), t));
  }

  // Candidates are already in descending variance-of-mean order, so the
  // earlier of a collinear pair is the one to keep.
  std::vector<std::size_t> kept_slots;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    std::optional<std::size_t> partner;
    for (std::size_t k : kept_slots) {
      if (std::abs(pearson(pooled[c], pooled[k])) >= options.collinearity_threshold) {
        partner = candidates[k];
        break;
      }
    }
    auto& r = subset.rationale[candidates[c]];
    if (partner) {
      r.reason = DropReason::CollinearWith;
      r.collinear_with = partner;
    } else {
      r.reason = DropReason::Kept;
      kept_slots.push_back(c);
      subset.indices.push_back(candidates[c]);
    }
  }
  if (subset.indices.empty()) throw Error(ErrorCode::EmptySelection, "every candidate metric was dropped");
  return subset;
}

std::string format_metric_subset(const MetricSubset& subset, std::span<const std::string> metric_names) {
  std::string out = "[metric_subset]\nkept = ";
  for (std::size_t i = 0; i < subset.indices.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(subset.indices[i]);
  }
  out += "\nmetrics = " + std::to_string(subset.rationale.size()) + "\n";
  for (std::size_t i = 0; i < subset.rationale.size(); ++i) {
    const auto& r = subset.rationale[i];
    const std::string prefix = "metric." + std::to_string(i) + ".";
    if (i < metric_names.size()) out += prefix + "name = " + metric_names[i] + "\n";
    out += prefix + "variance_of_mean = " + detail::format_g17(r.variance_of_mean) + "\n";
    out += prefix + "status = ";
    switch (r.reason) {
      case DropReason::Kept: out += "kept"; break;
      case DropReason::AllZeroMajority: out += "all_zero_majority"; break;
      case DropReason::LowVariance: out += "low_variance"; break;
      case DropReason::CollinearWith: out += "collinear_with:" + std::to_string(*r.collinear_with); break;
    }
    out += "\n";
  }
  return out;
}

MetricSubset parse_metric_subset(const std::string& text) {
  std::map<std::string, std::string> kv;
  for (auto line : split(text, '\n')) {
    line = trim(line);
    if (line.empty() || line.front() == '[' || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorCode::ArtifactCorrupt, "metric subset: bad line");
    kv[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw Error(ErrorCode::ArtifactCorrupt, "metric subset: missing " + key);
    return it->second;
  };
  auto to_index = [](std::string_view s) {
    auto v = parse_double(s);
    if (!v || *v < 0 || std::floor(*v) != *v) throw Error(ErrorCode::ArtifactCorrupt, "metric subset: bad index");
    return static_cast<std::size_t>(*v);
  };
  MetricSubset subset;
  for (auto part : split(get("kept"), ',')) {
    if (!trim(part).empty()) subset.indices.push_back(to_index(part));
  }
  const std::size_t m = to_index(get("metrics"));
  subset.rationale.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    const std::string prefix = "metric." + std::to_string(i) + ".";
    auto v = parse_double(get(prefix + "variance_of_mean"));
    if (!v) throw Error(ErrorCode::ArtifactCorrupt, "metric subset: bad variance");
    subset.rationale[i].variance_of_mean = *v;
    const std::string& status = get(prefix + "status");
    if (status == "kept") {
      subset.rationale[i].reason = DropReason::Kept;
    } else if (status == "all_zero_majority") {
      subset.rationale[i].reason = DropReason::AllZeroMajority;
    } else if (status == "low_variance") {
      subset.rationale[i].reason = DropReason::LowVariance;
    } else if (status.rfind("collinear_with:", 0) == 0) {
      subset.rationale[i].reason = DropReason::CollinearWith;
      subset.rationale[i].collinear_with = to_index(std::string_view(status).substr(15));
    } else {
      throw Error(ErrorCode::ArtifactCorrupt, "metric subset: unknown status " + status);
    }
  }
  for (auto idx : subset.indices)
    if (idx >= m) throw Error(ErrorCode::ArtifactCorrupt, "metric subset: index out of range");
  return subset;
}

ScaledData scale_by_range(std::span<const DeviceDataset> datasets, const MetricSubset& subset, bool full_minmax) {
  check_schema(datasets);
  if (subset.indices.empty()) throw Error(ErrorCode::EmptySelection, "scale_by_range: empty metric subset");
  const auto sorted = sorted_by_id(datasets);
  const auto h = static_cast<Eigen::Index>(subset.indices.size());
  for (auto idx : subset.indices)
    if (idx >= datasets.front().num_metrics()) throw Error(ErrorCode::BadShape, "metric index out of range");

  Eigen::VectorXd lo = Eigen::VectorXd::Constant(h, std::numeric_limits<double>::infinity());
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(h, -std::numeric_limits<double>::infinity());
  for (const auto* d : sorted) {
    for (Eigen::Index k = 0; k < h; ++k) {
      const auto row = d->train.row(static_cast<Eigen::Index>(subset.indices[static_cast<std::size_t>(k)]));
      lo(k) = std::min(lo(k), row.minCoeff());
      hi(k) = std::max(hi(k), row.maxCoeff());
    }
  }

  ScaledData out;
  out.degenerate.resize(static_cast<std::size_t>(h));
  for (Eigen::Index k = 0; k < h; ++k) out.degenerate[static_cast<std::size_t>(k)] = !(hi(k) - lo(k) > 0.0);

  for (const auto* d : sorted) {
    Eigen::MatrixXd values(h, d->train.cols());
    for (Eigen::Index k = 0; k < h; ++k) {
      const auto row = d->train.row(static_cast<Eigen::Index>(subset.indices[static_cast<std::size_t>(k)]));
      if (out.degenerate[static_cast<std::size_t>(k)]) {
        values.row(k).setZero();
      } else if (full_minmax) {
        values.row(k) = (row.array() - lo(k)) / (hi(k) - lo(k));
      } else {
        values.row(k) = row.array() / (hi(k) - lo(k));
      }
    }
    out.device_ids.push_back(d->device_id);
    out.values.push_back(std::move(values));
  }
  return out;
}

WindowSet make_windows(const Eigen::MatrixXd& series, std::size_t window, std::size_t stride) {
  if (window == 0 || stride == 0) throw Error(ErrorCode::BadShape, "window and stride must be positive");
  const auto t = static_cast<std::size_t>(series.cols());
  if (window > t)
    throw Error(ErrorCode::WindowTooLong,
                "window " + std::to_string(window) + " exceeds series length " + std::to_string(t));
  WindowSet ws;
  ws.window = window;
  ws.stride = stride;
  ws.metrics = static_cast<std::size_t>(series.rows());
  const std::size_t count = (t - window) / stride + 1;
  const auto dim = static_cast<Eigen::Index>(ws.metrics * window);
  ws.flat.resize(dim, static_cast<Eigen::Index>(count));
  // Column-major storage makes the block starting at column s contiguous.
  for (std::size_t i = 0; i < count; ++i) {
    ws.flat.col(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::VectorXd>(series.col(static_cast<Eigen::Index>(i * stride)).data(), dim);
  }
  return ws;
}

WindowSet make_windows(const DeviceDataset& dataset, Split split, std::size_t window, std::size_t stride) {
  if (split == Split::Test) {
    if (!dataset.test) throw Error(ErrorCode::MissingFile, dataset.device_id + " has no test split");
    return make_windows(*dataset.test, window, stride);
  }
  return make_windows(dataset.train, window, stride);
}

}  // namespace fleetad
