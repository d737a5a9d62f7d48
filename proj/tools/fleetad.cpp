#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "fleetad/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Fleet-level anomaly detection: cluster devices, train detectors, compare strategies"};
  app.require_subcommand(1, 1);

  fleetad::CommandOptions options;
  std::string config, out, strategy;
  std::size_t k = 0;
  std::uint64_t seed = 0;

  const char* pipeline_help[][2] = {
      {"inspect", "Load the dataset and summarize devices and metrics"},
      {"select-metrics", "Choose the representative metrics used for clustering"},
      {"similarity", "Build the device similarity graph"},
      {"cluster", "Partition devices into K clusters"},
      {"plan", "Derive the intra-cluster transfer order"},
      {"train", "Train detectors for one or all strategies"},
      {"evaluate", "Score test data and compute AUC and F1"},
      {"report", "Summarize the evaluation"},
      {"sweep-k", "Compare cluster counts"},
      {"genfleet", "Write a synthetic fleet with planted clusters (--out is the data root)"},
      {"fleet-event", "Handle a device add/remove/drift: fleet-event <add|remove|drift> <device>"},
  };
  for (const auto& [name, help] : pipeline_help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, name == std::string("genfleet") ? "Fleet spec file" : "Pipeline config file");
    sub->add_option("--out", out, "Output directory (run directories are created inside)");
    sub->add_option("--k", k, "Number of clusters (overrides the config)")->check(CLI::PositiveNumber);
    sub->add_option("--strategy", strategy, "gm, mpd, cm, icptl or all");
    sub->add_option("--seed", seed, "Global seed (overrides the config)");
    sub->add_flag("--force", options.force, "Rerun even when inputs are unchanged");
    if (name == std::string("fleet-event")) sub->add_option("event", options.args, "<add|remove|drift> <device>")->expected(2);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: ConfigInvalid: " << e.what() << "\n";
    return 2;
  }

  auto* sub = app.get_subcommands().front();
  options.config = config;
  if (!out.empty()) options.out = out;
  if (sub->count("--k")) options.k = k;
  if (sub->count("--seed")) options.seed = seed;
  if (!strategy.empty()) options.strategy = strategy;
  return fleetad::execute(sub->get_name(), options, std::cout, std::cerr);
}
