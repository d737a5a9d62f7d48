#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fleetad/data.hpp"
#include "fleetad/eval.hpp"
#include "fleetad/fleet.hpp"
#include "fleetad/similarity.hpp"
#include "fleetad/strategies.hpp"

namespace fleetad {

// Everything a pipeline run depends on. Loaded from an INI-style file with
// sections [run] [data] [similarity] [clustering] [model] [strategy] [eval]
// [sweep]; unknown keys are rejected.
struct PipelineConfig {
  std::string run_id = "default";
  std::filesystem::path data_root;
  IngestOptions ingest;
  SelectionOptions selection;
  SimilarityOptions similarity;
  std::size_t k = 3;
  StrategyOptions strategy;
  F1Mode f1_mode = F1Mode::Pointwise;
  std::vector<std::size_t> sweep_k;
  Strategy sweep_strategy = Strategy::Cm;
};

// Relative data roots resolve against `base_dir`.
PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& file);

// Canonical key-value rendering; equal configs render identically.
std::string canonical_config(const PipelineConfig& config);

// [fleet] section with the SyntheticFleetSpec fields.
SyntheticFleetSpec parse_fleet_spec(const std::string& text);
std::string canonical_fleet_spec(const SyntheticFleetSpec& spec);

}  // namespace fleetad
