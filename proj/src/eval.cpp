#include "fleetad/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "fleetad/error.hpp"
#include "text_util.hpp"

namespace fleetad {

namespace {

void check_labels(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size())
    throw Error(ErrorCode::LengthMismatch, std::to_string(scores.size()) + " scores for " + std::to_string(labels.size()) + " labels");
  std::size_t pos = 0;
  for (auto l : labels) pos += l ? 1 : 0;
  if (pos == 0 || pos == labels.size()) throw Error(ErrorCode::SingleClass, "labels contain a single class");
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_labels(scores, labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double rank_sum = 0.0;
  double n_pos = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    // Ranks i+1..j share their average.
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) {
        rank_sum += avg_rank;
        n_pos += 1.0;
      }
    i = j;
  }
  const double n_neg = static_cast<double>(n) - n_pos;
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

F1Result best_f1(std::span<const double> scores, std::span<const std::uint8_t> labels, F1Mode mode) {
  check_labels(scores, labels);
  std::vector<double> effective(scores.begin(), scores.end());
  if (mode == F1Mode::PointAdjust) {
    // A segment is detected at threshold t iff its maximum score is >= t.
    for (std::size_t i = 0; i < labels.size();) {
      if (!labels[i]) {
        ++i;
        continue;
      }
      std::size_t j = i;
      double seg_max = effective[i];
      while (j < labels.size() && labels[j]) seg_max = std::max(seg_max, effective[j++]);
      std::fill(effective.begin() + static_cast<std::ptrdiff_t>(i), effective.begin() + static_cast<std::ptrdiff_t>(j), seg_max);
      i = j;
    }
  }
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(effective[i]);
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());

  std::vector<double> thresholds(scores.begin(), scores.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  auto at_or_above = [](const std::vector<double>& v, double t) {
    return static_cast<double>(v.end() - std::lower_bound(v.begin(), v.end(), t));
  };
  F1Result best;
  bool have = false;
  for (double t : thresholds) {
    const double tp = at_or_above(pos, t);
    const double fp = at_or_above(neg, t);
    const double fn = static_cast<double>(pos.size()) - tp;
    F1Result r;
    r.threshold = t;
    r.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    r.recall = tp / (tp + fn);
    r.f1 = tp > 0 ? 2.0 * tp / (2.0 * tp + fp + fn) : 0.0;
    if (!have || r.f1 > best.f1) {
      best = r;
      have = true;
    }
  }
  return best;
}

std::vector<std::uint8_t> aligned_labels(const ScoreSeries& scores, std::span<const std::uint8_t> labels) {
  if (labels.size() != scores.first_timestep + scores.scores.size())
    throw Error(ErrorCode::LengthMismatch, "labels do not cover the scored timesteps");
  return {labels.begin() + static_cast<std::ptrdiff_t>(scores.first_timestep), labels.end()};
}

const StrategySummary& EvaluationReport::summary(std::string_view strategy) const {
  for (const auto& s : summaries)
    if (s.strategy == strategy) return s;
  throw Error(ErrorCode::ConfigInvalid, "no summary for strategy " + std::string(strategy));
}

DeviceEvaluation evaluate_device(const TrainedModel& model, const DeviceDataset& dataset, std::string strategy,
                                 F1Mode mode) {
  if (!dataset.has_labeled_test()) throw Error(ErrorCode::MissingFile, dataset.device_id + " has no labeled test split");
  const ScoreSeries s = score(model, *dataset.test, dataset.device_id);
  const auto labels = aligned_labels(s, *dataset.test_labels);
  DeviceEvaluation out;
  out.strategy = std::move(strategy);
  out.device = dataset.device_id;
  out.auc = roc_auc(s.scores, labels);
  out.f1 = best_f1(s.scores, labels, mode);
  return out;
}

EvaluationReport compare_strategies(std::span<const StrategyRun> runs, std::span<const DeviceDataset> datasets,
                                    F1Mode mode) {
  std::vector<const DeviceDataset*> sorted;
  for (const auto& d : datasets) sorted.push_back(&d);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->device_id < b->device_id; });

  EvaluationReport report;
  for (const auto& run : runs) {
    const std::string name(to_string(run.strategy));
    StrategySummary summary;
    summary.strategy = name;
    summary.cost = run.cost;
    for (const auto* d : sorted) {
      auto row = evaluate_device(run.model_for(d->device_id), *d, name, mode);
      summary.mean_auc += row.auc;
      summary.mean_f1 += row.f1.f1;
      report.rows.push_back(std::move(row));
    }
    if (!sorted.empty()) {
      summary.mean_auc /= static_cast<double>(sorted.size());
      summary.mean_f1 /= static_cast<double>(sorted.size());
    }
    report.summaries.push_back(std::move(summary));
  }
  return report;
}

std::string format_report_csv(const EvaluationReport& report, bool include_wall_time) {
  using detail::format_g17;
  std::string out = "strategy,device,auc,f1,precision,recall,threshold\n";
  for (const auto& r : report.rows) {
    out += r.strategy + "," + r.device + "," + format_g17(r.auc) + "," + format_g17(r.f1.f1) + "," +
           format_g17(r.f1.precision) + "," + format_g17(r.f1.recall) + "," + format_g17(r.f1.threshold) + "\n";
  }
  out += include_wall_time ? "strategy,mean_auc,mean_f1,models,epochs,wall_ms\n" : "strategy,mean_auc,mean_f1,models,epochs\n";
  for (const auto& s : report.summaries) {
    out += s.strategy + "," + format_g17(s.mean_auc) + "," + format_g17(s.mean_f1) + "," +
           std::to_string(s.cost.models_trained) + "," + std::to_string(s.cost.total_epochs);
    if (include_wall_time) out += "," + format_g17(s.cost.total_wall_time_ms);
    out += "\n";
  }
  return out;
}

std::string format_report_text(const EvaluationReport& report, bool include_wall_time) {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof(buf), "%-8s %10s %10s %8s %8s", "strategy", "mean_auc", "mean_f1", "models", "epochs");
  out += buf;
  out += include_wall_time ? "      wall_ms\n" : "\n";
  for (const auto& s : report.summaries) {
    std::snprintf(buf, sizeof(buf), "%-8s %10.4f %10.4f %8zu %8zu", s.strategy.c_str(), s.mean_auc, s.mean_f1,
                  s.cost.models_trained, s.cost.total_epochs);
    out += buf;
    if (include_wall_time) {
      std::snprintf(buf, sizeof(buf), " %12.1f", s.cost.total_wall_time_ms);
      out += buf;
    }
    out += "\n";
  }
  out += "\n";
  std::snprintf(buf, sizeof(buf), "%-8s %-16s %8s %8s %10s %8s\n", "strategy", "device", "auc", "f1", "precision", "recall");
  out += buf;
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof(buf), "%-8s %-16s %8.4f %8.4f %10.4f %8.4f\n", r.strategy.c_str(), r.device.c_str(), r.auc,
                  r.f1.f1, r.f1.precision, r.f1.recall);
    out += buf;
  }
  return out;
}

}  // namespace fleetad
