#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "fleetad/data.hpp"
#include "fleetad/error.hpp"

using namespace fleetad;
namespace fs = std::filesystem;

namespace {

void write(const fs::path& file, const std::string& text) {
  fs::create_directories(file.parent_path());
  std::ofstream(file) << text;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::IoError;
}

DeviceDataset device(const std::string& id, Eigen::MatrixXd train) {
  DeviceDataset d;
  d.device_id = id;
  for (Eigen::Index i = 0; i < train.rows(); ++i) d.metric_names.push_back("m" + std::to_string(i));
  d.train = std::move(train);
  return d;
}

}  // namespace

TEST(Ingest, ReadsSmdLayoutSortedById) {
  auto root = fixtures::temp_dir("ingest");
  write(root / "train/b.txt", "1,2\n3,4\n5,6\n");
  write(root / "train/a.txt", "0,0\n1,1\n2,2\n");
  write(root / "test/a.txt", "9,9\n8,8\n");
  write(root / "test_label/a.txt", "0\n1\n");
  const auto ds = ingest_dataset(root);
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds[0].device_id, "a");
  EXPECT_EQ(ds[1].device_id, "b");
  EXPECT_EQ(ds[1].train.rows(), 2);
  EXPECT_EQ(ds[1].train.cols(), 3);
  EXPECT_DOUBLE_EQ(ds[1].train(1, 2), 6.0);
  ASSERT_TRUE(ds[0].has_labeled_test());
  EXPECT_EQ(*ds[0].test_labels, (std::vector<std::uint8_t>{0, 1}));
  EXPECT_FALSE(ds[1].test.has_value());
}

TEST(Ingest, ReadsSingleDirectoryLayout) {
  auto root = fixtures::temp_dir("single");
  write(root / "x.txt", "1,2,3\n4,5,6\n");
  const auto ds = ingest_dataset(root, {Layout::SingleDir, false});
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds[0].num_metrics(), 3u);
  EXPECT_EQ(ds[0].train_length(), 2u);
}

TEST(Ingest, RejectsMalformedInput) {
  auto root = fixtures::temp_dir("bad");
  write(root / "ragged.txt", "1,2\n3\n");
  write(root / "text.txt", "1,abc\n");
  write(root / "gap.txt", "1,2\n3,\n");
  EXPECT_EQ(code_of([&] { read_matrix_file(root / "ragged.txt"); }), ErrorCode::RaggedRows);
  EXPECT_EQ(code_of([&] { read_matrix_file(root / "text.txt"); }), ErrorCode::NonNumeric);
  EXPECT_EQ(code_of([&] { read_matrix_file(root / "gap.txt"); }), ErrorCode::MissingValue);
  EXPECT_EQ(code_of([&] { read_matrix_file(root / "absent.txt"); }), ErrorCode::MissingFile);
  EXPECT_EQ(code_of([&] { ingest_dataset(root / "nowhere"); }), ErrorCode::MissingFile);
}

TEST(Ingest, ForwardFillCountsFilledCells) {
  auto root = fixtures::temp_dir("ffill");
  write(root / "gap.txt", "1,2\n3,\n,\n");
  std::size_t filled = 0;
  const auto m = read_matrix_file(root / "gap.txt", true, &filled);
  EXPECT_EQ(filled, 3u);
  EXPECT_DOUBLE_EQ(m(1, 1), 2.0);
  EXPECT_DOUBLE_EQ(m(0, 2), 3.0);
  EXPECT_DOUBLE_EQ(m(1, 2), 2.0);
}

TEST(Ingest, RejectsHeterogeneousSchema) {
  auto root = fixtures::temp_dir("schema");
  write(root / "train/a.txt", "1,2\n");
  write(root / "train/b.txt", "1,2,3\n");
  EXPECT_EQ(code_of([&] { ingest_dataset(root); }), ErrorCode::HeterogeneousSchema);
}

TEST(Ingest, LabelLengthMustMatchTestSplit) {
  auto root = fixtures::temp_dir("labels");
  write(root / "train/a.txt", "1\n2\n");
  write(root / "test/a.txt", "1\n2\n3\n");
  write(root / "test_label/a.txt", "0\n1\n");
  EXPECT_EQ(code_of([&] { ingest_dataset(root); }), ErrorCode::LengthMismatch);
}

TEST(Ingest, WriteReadRoundTripIsBitExact) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1e3);
  Eigen::MatrixXd m(3, 50);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng) * std::pow(10.0, static_cast<double>(rng() % 20) - 10);
  auto root = fixtures::temp_dir("roundtrip");
  write_matrix_file(root / "m.txt", m);
  const auto back = read_matrix_file(root / "m.txt");
  ASSERT_EQ(back.rows(), m.rows());
  for (Eigen::Index i = 0; i < m.size(); ++i) EXPECT_EQ(back.data()[i], m.data()[i]);
}

TEST(Selection, VarianceOfMeanIsPopulationVariance) {
  std::vector<DeviceDataset> ds{device("a", Eigen::MatrixXd::Constant(2, 4, 1.0)),
                                device("b", Eigen::MatrixXd::Constant(2, 4, 3.0))};
  ds[1].train.row(1).setConstant(1.0);
  const auto v = variance_of_mean(ds);
  EXPECT_DOUBLE_EQ(v(0), 1.0);
  EXPECT_DOUBLE_EQ(v(1), 0.0);
}

TEST(Selection, DropsMostlyZeroAndCollinearMetrics) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<DeviceDataset> ds;
  for (int d = 0; d < 4; ++d) {
    Eigen::MatrixXd m(4, 100);
    for (Eigen::Index t = 0; t < 100; ++t) {
      const double x = n(rng) + 3.0 * d;
      m(0, t) = x;                          // high variance of mean
      m(1, t) = 2.0 * x + 1.0;              // collinear with metric 0
      m(2, t) = d < 3 ? 0.0 : 50.0 + n(rng);  // zero on 3 of 4 devices
      m(3, t) = n(rng) + 0.5 * d;           // kept, weaker
    }
    ds.push_back(device("d" + std::to_string(d), m));
  }
  const auto s = select_metrics(ds, {4, 0.5, 0.95});
  EXPECT_EQ(s.indices, (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(s.rationale[0].reason, DropReason::CollinearWith);
  EXPECT_EQ(s.rationale[0].collinear_with, std::optional<std::size_t>(1));
  EXPECT_EQ(s.rationale[2].reason, DropReason::AllZeroMajority);
  EXPECT_EQ(s.rationale[3].reason, DropReason::Kept);
}

TEST(Selection, TopNLimitsCandidates) {
  std::vector<DeviceDataset> ds;
  for (int d = 0; d < 3; ++d) {
    Eigen::MatrixXd m(3, 10);
    for (Eigen::Index t = 0; t < 10; ++t) {
      m(0, t) = d * 1.0 + 0.1 * static_cast<double>(t % 3);
      m(1, t) = d * 5.0 + 0.2 * static_cast<double>(t % 4);
      m(2, t) = d * 0.1 + 0.3 * static_cast<double>(t % 5);
    }
    ds.push_back(device("d" + std::to_string(d), m));
  }
  const auto s = select_metrics(ds, {1, 0.5, 0.95});
  EXPECT_EQ(s.indices, (std::vector<std::size_t>{1}));
  EXPECT_EQ(s.rationale[0].reason, DropReason::LowVariance);
  EXPECT_THROW(select_metrics(ds, {0, 0.5, 0.95}), Error);
}

TEST(Selection, IndependentOfDeviceOrder) {
  const auto fleet = synthesize_fleet(fixtures::small_spec(6, 2));
  auto shuffled = fleet.datasets;
  std::reverse(shuffled.begin(), shuffled.end());
  const auto a = select_metrics(fleet.datasets);
  const auto b = select_metrics(shuffled);
  EXPECT_EQ(a.indices, b.indices);
}

TEST(Selection, FormatParseRoundTrip) {
  const auto fleet = synthesize_fleet(fixtures::small_spec(4, 2));
  const auto s = select_metrics(fleet.datasets);
  const auto text = format_metric_subset(s, fleet.datasets[0].metric_names);
  const auto back = parse_metric_subset(text);
  EXPECT_EQ(back.indices, s.indices);
  ASSERT_EQ(back.rationale.size(), s.rationale.size());
  for (std::size_t i = 0; i < s.rationale.size(); ++i) {
    EXPECT_EQ(back.rationale[i].reason, s.rationale[i].reason);
    EXPECT_EQ(back.rationale[i].variance_of_mean, s.rationale[i].variance_of_mean);
    EXPECT_EQ(back.rationale[i].collinear_with, s.rationale[i].collinear_with);
  }
  EXPECT_EQ(format_metric_subset(back, fleet.datasets[0].metric_names), text);
}

TEST(Pearson, KnownValues) {
  const std::vector<double> x{1, 2, 3, 4}, y{2, 4, 6, 8}, z{4, 3, 2, 1};
  EXPECT_NEAR(pearson(x, y), 1.0, 1e-15);
  EXPECT_NEAR(pearson(x, z), -1.0, 1e-15);
  EXPECT_THROW(pearson(x, std::vector<double>{1, 2}), Error);
}

TEST(Scaling, DividesByGlobalRangeOnly) {
  std::vector<DeviceDataset> ds{device("a", Eigen::MatrixXd{{2.0, 4.0}}), device("b", Eigen::MatrixXd{{6.0, 10.0}})};
  MetricSubset subset;
  subset.indices = {0};
  const auto s = scale_by_range(ds, subset);
  EXPECT_DOUBLE_EQ(s.values[0](0, 0), 2.0 / 8.0);
  EXPECT_DOUBLE_EQ(s.values[1](0, 1), 10.0 / 8.0);
  const auto full = scale_by_range(ds, subset, true);
  EXPECT_DOUBLE_EQ(full.values[0](0, 0), 0.0);
  EXPECT_DOUBLE_EQ(full.values[1](0, 1), 1.0);
}

TEST(Scaling, ConstantMetricIsFlaggedDegenerate) {
  std::vector<DeviceDataset> ds{device("a", Eigen::MatrixXd::Constant(1, 3, 5.0)),
                                device("b", Eigen::MatrixXd::Constant(1, 3, 5.0))};
  MetricSubset subset;
  subset.indices = {0};
  const auto s = scale_by_range(ds, subset);
  EXPECT_TRUE(s.degenerate[0]);
  EXPECT_TRUE(s.values[0].allFinite());
}

TEST(Windows, CountLayoutAndStride) {
  Eigen::MatrixXd series(2, 7);
  for (Eigen::Index t = 0; t < 7; ++t) {
    series(0, t) = static_cast<double>(t);
    series(1, t) = 100.0 + static_cast<double>(t);
  }
  const auto w = make_windows(series, 3, 2);
  ASSERT_EQ(w.count(), 3u);  // starts 0, 2, 4
  EXPECT_EQ(w.start(2), 4u);
  // Timestep-major flattening.
  EXPECT_DOUBLE_EQ(w.flat(0, 1), 2.0);
  EXPECT_DOUBLE_EQ(w.flat(1, 1), 102.0);
  EXPECT_DOUBLE_EQ(w.flat(2, 1), 3.0);
  EXPECT_DOUBLE_EQ(w.matrix(2)(1, 2), 106.0);
  EXPECT_EQ(make_windows(series, 7, 1).count(), 1u);
  EXPECT_EQ(code_of([&] { make_windows(series, 8, 1); }), ErrorCode::WindowTooLong);
}

TEST(Windows, PropertyEveryWindowMatchesSource) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = static_cast<Eigen::Index>(1 + rng() % 4);
    const auto t = static_cast<Eigen::Index>(5 + rng() % 40);
    const std::size_t w = 1 + rng() % static_cast<std::size_t>(t);
    const std::size_t s = 1 + rng() % 5;
    Eigen::MatrixXd series = Eigen::MatrixXd::Random(m, t);
    const auto ws = make_windows(series, w, s);
    EXPECT_EQ(ws.count(), (static_cast<std::size_t>(t) - w) / s + 1);
    for (std::size_t i = 0; i < ws.count(); ++i)
      EXPECT_EQ(ws.matrix(i), series.middleCols(static_cast<Eigen::Index>(ws.start(i)), static_cast<Eigen::Index>(w)));
  }
}
