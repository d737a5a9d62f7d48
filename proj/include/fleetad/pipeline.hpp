#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace fleetad {

// The eight pipeline stages in dependency order.
inline const std::vector<std::string> kStages = {"inspect", "select-metrics", "similarity", "cluster",
                                                 "plan",    "train",          "evaluate",   "report"};

struct CommandOptions {
  std::filesystem::path config;  // pipeline config; fleet spec for genfleet
  std::filesystem::path out = "runs";
  std::optional<std::size_t> k;
  std::optional<std::string> strategy;  // gm|mpd|cm|icptl|all
  std::optional<std::uint64_t> seed;
  bool force = false;
  std::vector<std::string> args;  // fleet-event: <add|remove|drift> <device>
};

// Flat `key = value` record of a run directory. Keys:
//   run_id, config_sha256, dataset_sha256, created, updated
//   stage.<name>.input / .outputs / .completed
//   artifact.<relative path>   content hash of a reproducible artifact
//   volatile.<relative path>   content hash of wall-clock measurements
struct RunManifest {
  std::map<std::string, std::string> entries;

  bool has(const std::string& key) const { return entries.count(key) != 0; }
  const std::string& at(const std::string& key) const;

  static RunManifest load(const std::filesystem::path& file);
  std::string render() const;
};

// Keys whose values legitimately differ between two identical runs.
bool is_time_dependent(const std::string& manifest_key);

// Runs one subcommand and returns the process exit status: 0 ok, 1 runtime
// error, 2 usage or stage-dependency error. On failure a single line
// `error: <Code>: <message>` goes to `err`.
int execute(const std::string& subcommand, const CommandOptions& options, std::ostream& out, std::ostream& err);

}  // namespace fleetad
