#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fleetad/data.hpp"
#include "fleetad/model.hpp"
#include "fleetad/strategies.hpp"

namespace fleetad {

// Rank statistic (Mann-Whitney U / (n_pos * n_neg)), ties get average rank.
double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

enum class F1Mode { Pointwise, PointAdjust };

struct F1Result {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double threshold = 0.0;  // predict anomalous when score >= threshold
};

// Maximum F1 over thresholds placed at every distinct score. In point-adjust
// mode a labeled segment counts as fully detected once any point in it is
// flagged. Ties keep the lowest threshold.
F1Result best_f1(std::span<const double> scores, std::span<const std::uint8_t> labels, F1Mode mode = F1Mode::Pointwise);

// Labels aligned to a score series (the unscored prefix dropped).
std::vector<std::uint8_t> aligned_labels(const ScoreSeries& scores, std::span<const std::uint8_t> labels);

struct DeviceEvaluation {
  std::string strategy;
  std::string device;
  double auc = 0.0;
  F1Result f1;
};

struct StrategySummary {
  std::string strategy;
  double mean_auc = 0.0;
  double mean_f1 = 0.0;
  TrainingCost cost;
};

struct EvaluationReport {
  std::vector<DeviceEvaluation> rows;
  std::vector<StrategySummary> summaries;

  const StrategySummary& summary(std::string_view strategy) const;
};

DeviceEvaluation evaluate_device(const TrainedModel& model, const DeviceDataset& dataset, std::string strategy,
                                 F1Mode mode = F1Mode::Pointwise);

EvaluationReport compare_strategies(std::span<const StrategyRun> runs, std::span<const DeviceDataset> datasets,
                                    F1Mode mode = F1Mode::Pointwise);

// Lines `strategy,device,auc,f1,precision,recall,threshold`, then footer lines
// `strategy,mean_auc,mean_f1,models,epochs[,wall_ms]`. Wall time is the only
// non-reproducible column, so it can be left out of stored artifacts.
std::string format_report_csv(const EvaluationReport& report, bool include_wall_time = true);
std::string format_report_text(const EvaluationReport& report, bool include_wall_time = true);

}  // namespace fleetad
