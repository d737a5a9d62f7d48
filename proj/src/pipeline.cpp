#include "fleetad/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <functional>
#include <set>

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "fleetad/clustering.hpp"
#include "fleetad/config.hpp"
#include "fleetad/data.hpp"
#include "fleetad/error.hpp"
#include "fleetad/eval.hpp"
#include "fleetad/fleet.hpp"
#include "fleetad/hashing.hpp"
#include "fleetad/model.hpp"
#include "fleetad/similarity.hpp"
#include "fleetad/strategies.hpp"
#include "text_util.hpp"

namespace fleetad {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifestMagic = "FLEETAD-MANIFEST 1";

std::shared_ptr<spdlog::logger> logger() {
  static auto log = [] {
    auto l = spdlog::stderr_logger_mt("fleetad");
    l->set_pattern("[%l] %v");
    const char* env = std::getenv("FLEETAD_LOG");
    l->set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
    return l;
  }();
  return log;
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? std::string(1, sep) : "") + parts[i];
  return out;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  for (auto p : detail::split(s, ',')) out.emplace_back(p);
  return out;
}

// One `[name]` block of a canonical config rendering.
std::string config_section(const std::string& canonical, const std::string& name) {
  const std::string head = "[" + name + "]\n";
  const auto begin = canonical.find(head);
  if (begin == std::string::npos) return {};
  const auto end = canonical.find("\n[", begin + head.size());
  return canonical.substr(begin, end == std::string::npos ? std::string::npos : end + 1 - begin);
}

std::vector<Strategy> strategies_from(const std::optional<std::string>& flag) {
  if (!flag || *flag == "all") return {Strategy::Gm, Strategy::Mpd, Strategy::Cm, Strategy::Icptl};
  try {
    return {parse_strategy(*flag)};
  } catch (const Error&) {
    throw Error(ErrorCode::ConfigInvalid, "unknown strategy '" + *flag + "'");
  }
}

struct Artifact {
  std::string path;  // relative to the run directory
  std::string content;
  bool is_volatile = false;
};

std::string model_path(Strategy s, const std::string& key) {
  return "models/" + std::string(to_string(s)) + "/" + key + ".model";
}

// One model file per key, an index with routing and epoch counts, and a
// separate file with the wall-clock times.
std::vector<Artifact> store_runs(const std::vector<StrategyRun>& runs) {
  std::vector<Artifact> out;
  std::string index, timings;
  for (const auto& run : runs) {
    const std::string name(to_string(run.strategy));
    index += "run," + name + "," + std::to_string(run.cost.models_trained) + "," +
             std::to_string(run.cost.total_epochs) + "\n";
    timings += "total," + name + "," + detail::format_g17(run.cost.total_wall_time_ms) + "\n";
    for (const auto& [device, key] : run.routing) index += "route," + name + "," + device + "," + key + "\n";
    for (const auto& [key, model] : run.models) {
      TrainedModel stored = model;
      timings += "model," + name + "," + key + "," + detail::format_g17(model.provenance.wall_time_ms) + "\n";
      stored.provenance.wall_time_ms = 0.0;
      index += "model," + name + "," + key + "," + model_path(run.strategy, key) + "\n";
      out.push_back({model_path(run.strategy, key), serialize_model(stored), false});
    }
  }
  out.push_back({"models/index.txt", index, false});
  out.push_back({"timings.txt", timings, true});
  return out;
}

class RunDirectory {
 public:
  RunDirectory(fs::path dir, bool force, std::ostream& out) : dir_(std::move(dir)), force_(force), out_(out) {
    if (fs::exists(dir_ / "manifest.txt")) manifest_ = RunManifest::load(dir_ / "manifest.txt");
  }

  const fs::path& dir() const { return dir_; }
  RunManifest& manifest() { return manifest_; }

  void set(const std::string& key, const std::string& value) { manifest_.entries[key] = value; }

  void save() {
    if (!manifest_.has("created")) set("created", utc_now());
    set("updated", utc_now());
    detail::write_text_atomic(dir_ / "manifest.txt", manifest_.render());
  }

  bool completed(const std::string& stage) const { return manifest_.has("stage." + stage + ".outputs"); }

  void require(const std::string& stage) const {
    if (!completed(stage))
      throw Error(ErrorCode::StageDependencyMissing, "stage '" + stage + "' has not been run in " + dir_.string());
  }

  // Reads an artifact and checks it against its recorded hash.
  std::string read(const std::string& path) const {
    std::string key = "artifact." + path;
    if (!manifest_.has(key)) key = "volatile." + path;
    if (!manifest_.has(key)) throw Error(ErrorCode::StageDependencyMissing, "artifact " + path + " is not recorded");
    const fs::path file = dir_ / path;
    if (!fs::exists(file)) throw Error(ErrorCode::ArtifactCorrupt, "artifact " + path + " is missing");
    std::string content = detail::read_text(file);
    if (sha256_hex(content) != manifest_.at(key))
      throw Error(ErrorCode::ArtifactCorrupt, "artifact " + path + " does not match its recorded hash");
    return content;
  }

  std::string hash_of(const std::string& path) const { return manifest_.at("artifact." + path); }

  bool intact(const std::string& stage) const {
    for (const auto& p : split_list(manifest_.at("stage." + stage + ".outputs"))) {
      try {
        read(p);
      } catch (const Error&) {
        return false;
      }
    }
    return true;
  }

  // Replaces the recorded outputs of `stage` with `artifacts`.
  void record(const std::string& stage, const std::vector<Artifact>& artifacts) {
    std::set<std::string> fresh;
    for (const auto& a : artifacts) fresh.insert(a.path);
    const std::string outputs_key = "stage." + stage + ".outputs";
    if (manifest_.has(outputs_key)) {
      for (const auto& old : split_list(manifest_.at(outputs_key))) {
        if (fresh.count(old)) continue;
        manifest_.entries.erase("artifact." + old);
        manifest_.entries.erase("volatile." + old);
        fs::remove(dir_ / old);
      }
    }
    std::vector<std::string> paths;
    for (const auto& a : artifacts) {
      detail::write_text_atomic(dir_ / a.path, a.content);
      manifest_.entries.erase((a.is_volatile ? "artifact." : "volatile.") + a.path);
      set((a.is_volatile ? "volatile." : "artifact.") + a.path, sha256_hex(a.content));
      paths.push_back(a.path);
    }
    set(outputs_key, join(paths, ','));
    set("stage." + stage + ".completed", utc_now());
  }

  // Skips when the input hash matches and the outputs are intact.
  void stage(const std::string& name, const std::string& input_description,
             const std::function<std::vector<Artifact>()>& body) {
    const std::string input = sha256_hex(name + "\n" + input_description);
    const std::string input_key = "stage." + name + ".input";
    if (!force_ && completed(name) && manifest_.has(input_key) && manifest_.at(input_key) == input && intact(name)) {
      out_ << name << ": up to date\n";
      logger()->info("{} skipped, input {}", name, input.substr(0, 12));
      return;
    }
    const auto started = std::chrono::steady_clock::now();
    auto artifacts = body();
    record(name, artifacts);
    set(input_key, input);
    save();
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    out_ << name << ": wrote " << artifacts.size() << " artifact(s)\n";
    logger()->info("{} finished in {:.1f} ms", name, ms);
  }

 private:
  fs::path dir_;
  bool force_;
  std::ostream& out_;
  RunManifest manifest_;
};

std::vector<StrategyRun> load_runs(const RunDirectory& run) {
  std::map<std::string, StrategyRun> by_name;
  std::vector<std::string> order;
  const std::string index = run.read("models/index.txt");
  for (auto line : detail::split(index, '\n')) {
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(line, ',');
    const std::string kind(f[0]), name(f.at(1));
    if (kind == "run") {
      auto& r = by_name[name];
      r.strategy = parse_strategy(name);
      r.cost.models_trained = std::stoul(std::string(f.at(2)));
      r.cost.total_epochs = std::stoul(std::string(f.at(3)));
      order.push_back(name);
    } else if (kind == "route") {
      by_name.at(name).routing[std::string(f.at(2))] = std::string(f.at(3));
    } else if (kind == "model") {
      by_name.at(name).models.emplace(std::string(f.at(2)), deserialize_model(run.read(std::string(f.at(3)))));
    } else {
      throw Error(ErrorCode::ArtifactCorrupt, "bad line in models/index.txt: " + std::string(line));
    }
  }
  // Wall times are informative only; a damaged timing file is not fatal.
  try {
    const std::string timings = run.read("timings.txt");
    for (auto line : detail::split(timings, '\n')) {
      const auto f = detail::split(line, ',');
      if (f.size() == 3 && f[0] == "total" && by_name.count(std::string(f[1])))
        by_name[std::string(f[1])].cost.total_wall_time_ms = detail::parse_double(f[2]).value_or(0.0);
      if (f.size() == 4 && f[0] == "model" && by_name.count(std::string(f[1]))) {
        auto& models = by_name[std::string(f[1])].models;
        auto it = models.find(std::string(f[2]));
        if (it != models.end()) it->second.provenance.wall_time_ms = detail::parse_double(f[3]).value_or(0.0);
      }
    }
  } catch (const Error& e) {
    logger()->warn("timings unavailable: {}", e.what());
  }
  std::vector<StrategyRun> runs;
  for (const auto& name : order) runs.push_back(std::move(by_name.at(name)));
  return runs;
}

class Pipeline {
 public:
  Pipeline(const CommandOptions& options, std::ostream& out)
      : options_(options), out_(out), config_(load_config(options.config)) {
    if (options.seed) config_.strategy.global_seed = *options.seed;
    if (options.k) config_.k = *options.k;
    canonical_ = canonical_config(config_);
    run_.emplace(options.out / config_.run_id, options.force, out);
    fs::create_directories(run_->dir());
    detail::write_text_atomic(run_->dir() / "config.ini", canonical_);
    run_->set("run_id", config_.run_id);
    run_->set("config_sha256", sha256_hex(canonical_));
  }

  void inspect() {
    const std::string fp = fingerprint();
    run_->stage("inspect", config_section(canonical_, "data") + fp, [&] {
      const auto& ds = datasets();
      std::string text = "devices = " + std::to_string(ds.size()) + "\n";
      text += "metrics = " + std::to_string(ds.front().num_metrics()) + "\n";
      text += "metric_names = " + join(ds.front().metric_names, ',') + "\n";
      text += "dataset_sha256 = " + fp + "\n";
      for (const auto& d : ds) {
        std::size_t positives = 0;
        if (d.test_labels)
          for (auto l : *d.test_labels) positives += l;
        text += "device." + d.device_id + " = train=" + std::to_string(d.train_length()) +
                " test=" + std::to_string(d.test ? d.test->cols() : 0) +
                " anomalous=" + std::to_string(positives) + " filled=" + std::to_string(d.filled_cells) + "\n";
      }
      return std::vector<Artifact>{{"inspect.txt", text}};
    });
    out_ << run_->read("inspect.txt");
  }

  void select_metrics() {
    run_->require("inspect");
    run_->stage("select-metrics", config_section(canonical_, "data") + run_->hash_of("inspect.txt") + fingerprint(), [&] {
      const auto& ds = datasets();
      const auto subset = fleetad::select_metrics(ds, config_.selection);
      return std::vector<Artifact>{{"metrics.txt", format_metric_subset(subset, ds.front().metric_names)}};
    });
  }

  void similarity() {
    run_->require("select-metrics");
    run_->stage("similarity", config_section(canonical_, "similarity") + run_->hash_of("metrics.txt") + fingerprint(),
                [&] {
                  const auto subset = parse_metric_subset(run_->read("metrics.txt"));
                  return std::vector<Artifact>{
                      {"graph.csv", format_graph(build_similarity_graph(datasets(), subset, config_.similarity))}};
                });
  }

  void cluster() {
    run_->require("similarity");
    run_->stage("cluster", config_section(canonical_, "clustering") + run_->hash_of("graph.csv"), [&] {
      const auto graph = parse_graph(run_->read("graph.csv"));
      return std::vector<Artifact>{{"clusters.txt", format_clusters(cluster_devices(graph, config_.k))}};
    });
    out_ << run_->read("clusters.txt");
  }

  void plan() {
    run_->require("cluster");
    run_->stage("plan", run_->hash_of("graph.csv") + run_->hash_of("clusters.txt"), [&] {
      const auto graph = parse_graph(run_->read("graph.csv"));
      const auto clusters = parse_clusters(run_->read("clusters.txt"));
      return std::vector<Artifact>{{"plan.txt", format_plan(plan_training(graph, clusters))}};
    });
  }

  void train() {
    run_->require("plan");
    const auto strategies = strategies_from(options_.strategy);
    std::string which;
    for (auto s : strategies) which += std::string(to_string(s)) + ",";
    const std::string input = config_section(canonical_, "run") + config_section(canonical_, "model") +
                              config_section(canonical_, "strategy") + which + run_->hash_of("clusters.txt") +
                              run_->hash_of("plan.txt") + fingerprint();
    run_->stage("train", input, [&] {
      const auto& ds = datasets();
      const auto clusters = parse_clusters(run_->read("clusters.txt"));
      const auto plan = parse_plan(run_->read("plan.txt"));
      std::vector<StrategyRun> runs;
      for (auto s : strategies) {
        logger()->info("training {}", to_string(s));
        switch (s) {
          case Strategy::Gm: runs.push_back(run_gm(ds, config_.strategy)); break;
          case Strategy::Mpd: runs.push_back(run_mpd(ds, config_.strategy)); break;
          case Strategy::Cm: runs.push_back(run_cm(ds, clusters, config_.strategy)); break;
          case Strategy::Icptl: runs.push_back(run_icptl(ds, plan, config_.strategy)); break;
        }
        out_ << to_string(s) << ": " << format_cost(runs.back().cost) << "\n";
      }
      return store_runs(runs);
    });
  }

  void evaluate() {
    run_->require("train");
    run_->stage("evaluate", config_section(canonical_, "eval") + run_->hash_of("models/index.txt") + fingerprint(), [&] {
      const auto runs = load_runs(*run_);
      const auto report = compare_strategies(runs, routed_datasets(runs), config_.f1_mode);
      return std::vector<Artifact>{{"evaluation.csv", format_report_csv(report, false)}};
    });
  }

  void report() {
    run_->require("evaluate");
    run_->stage("report", run_->hash_of("evaluation.csv") + run_->hash_of("models/index.txt"), [&] {
      const auto runs = load_runs(*run_);
      auto text = "run " + config_.run_id + "\n\n" + format_report_text(rebuild_report(runs), false);
      return std::vector<Artifact>{{"report.txt", text}};
    });
    // Wall times are shown but kept out of the stored report.
    out_ << format_report_text(rebuild_report(load_runs(*run_)), true);
  }

  void sweep_k() {
    run_->require("similarity");
    if (config_.sweep_k.empty()) throw Error(ErrorCode::ConfigInvalid, "sweep.k_values is empty");
    Strategy strategy = config_.sweep_strategy;
    if (options_.strategy) {
      const auto s = strategies_from(options_.strategy);
      if (s.size() != 1 || (s[0] != Strategy::Cm && s[0] != Strategy::Icptl))
        throw Error(ErrorCode::ConfigInvalid, "sweep-k runs cm or icptl");
      strategy = s[0];
    }
    const auto graph = parse_graph(run_->read("graph.csv"));
    const auto& ds = datasets();
    std::string table = "k,mean_auc,mean_f1,models,epochs\n";
    out_ << "k,mean_auc,mean_f1,models,epochs,wall_ms\n";
    std::size_t best_k = 0;
    double best_auc = -1.0;
    for (auto k : config_.sweep_k) {
      const auto clusters = cluster_devices(graph, k);
      StrategyRun sr = strategy == Strategy::Cm ? run_cm(ds, clusters, config_.strategy)
                                                : run_icptl(ds, plan_training(graph, clusters), config_.strategy);
      const std::vector<StrategyRun> one{std::move(sr)};
      const auto s = compare_strategies(one, ds, config_.f1_mode).summaries.front();
      const std::string row = std::to_string(k) + "," + detail::format_g17(s.mean_auc) + "," +
                              detail::format_g17(s.mean_f1) + "," + std::to_string(s.cost.models_trained) + "," +
                              std::to_string(s.cost.total_epochs);
      table += row + "\n";
      out_ << row << "," << detail::format_g17(s.cost.total_wall_time_ms) << "\n";
      if (s.mean_auc > best_auc) {
        best_auc = s.mean_auc;
        best_k = k;
      }
    }
    table += "best_k," + std::to_string(best_k) + "\n";
    out_ << "best_k," << best_k << "\n";
    run_->record("sweep-k", {{"sweep_" + std::string(to_string(strategy)) + ".csv", table}});
    run_->save();
  }

  void fleet_event() {
    if (options_.args.size() != 2)
      throw Error(ErrorCode::ConfigInvalid, "fleet-event expects <add|remove|drift> <device>");
    FleetEvent event;
    try {
      event.type = parse_fleet_event(options_.args[0]);
    } catch (const Error&) {
      throw Error(ErrorCode::ConfigInvalid, "unknown fleet event '" + options_.args[0] + "'");
    }
    event.device_id = options_.args[1];
    run_->require("plan");

    const auto graph = parse_graph(run_->read("graph.csv"));
    const auto clusters = parse_clusters(run_->read("clusters.txt"));
    FleetState state = initial_fleet_state(graph, clusters);
    if (fs::exists(run_->dir() / "fleet_state.txt")) state.cm_trained_members = parse_cm_members(run_->read("fleet_state.txt"));

    SimilarityGraph updated = graph;
    std::set<std::string> keep(graph.vertices().begin(), graph.vertices().end());
    keep.insert(event.device_id);
    std::vector<DeviceDataset> involved;
    for (const auto& d : datasets())
      if (keep.count(d.device_id)) involved.push_back(d);
    if (event.type != FleetEventType::DeviceRemoved) {
      if (std::none_of(involved.begin(), involved.end(), [&](const auto& d) { return d.device_id == event.device_id; }))
        throw Error(ErrorCode::UnknownDevice, "no data for device " + event.device_id + " under " + config_.data_root.string());
      updated = build_similarity_graph(involved, parse_metric_subset(run_->read("metrics.txt")), config_.similarity);
    }
    const auto update = handle_fleet_event(state, event, updated, config_.strategy.cm_retrain_threshold);

    std::vector<Artifact> artifacts;
    if (run_->completed("train")) {
      auto runs = load_runs(*run_);
      StrategyRun* icptl = nullptr;
      StrategyRun* cm = nullptr;
      for (auto& r : runs) {
        if (r.strategy == Strategy::Icptl) icptl = &r;
        if (r.strategy == Strategy::Cm) cm = &r;
      }
      apply_fleet_update(update, event, involved, config_.strategy, icptl, cm);
      apply_to_baselines(runs, event, involved);
      run_->record("train", store_runs(runs));
    }
    run_->record("similarity", {{"graph.csv", format_graph(update.state.graph)}});
    run_->record("cluster", {{"clusters.txt", format_clusters(update.state.clusters)}});
    run_->record("plan", {{"plan.txt", format_plan(update.state.plan)}});

    const std::size_t seq = run_->manifest().has("fleet_events") ? std::stoul(run_->manifest().at("fleet_events")) + 1 : 1;
    char name[64];
    std::snprintf(name, sizeof(name), "events/%04zu-%s.txt", seq, std::string(to_string(event.type)).c_str());
    const std::string actions = format_actions(update.actions);
    std::vector<Artifact> event_artifacts{{"fleet_state.txt", format_cm_members(update.state.cm_trained_members)},
                                          {name, std::string(to_string(event.type)) + "," + event.device_id + "\n" + actions}};
    if (run_->manifest().has("stage.fleet-event.outputs"))
      for (const auto& p : split_list(run_->manifest().at("stage.fleet-event.outputs")))
        if (p.rfind("events/", 0) == 0) event_artifacts.push_back({p, run_->read(p)});
    run_->record("fleet-event", event_artifacts);
    run_->set("fleet_events", std::to_string(seq));
    run_->save();
    out_ << (actions.empty() ? "no actions\n" : actions);
  }

 private:
  static std::string format_cm_members(const std::map<ClusterId, std::set<std::string>>& members) {
    std::string out;
    for (const auto& [id, devs] : members)
      out += "cm." + std::to_string(id) + " = " + join(std::vector<std::string>(devs.begin(), devs.end()), ',') + "\n";
    return out;
  }

  static std::map<ClusterId, std::set<std::string>> parse_cm_members(const std::string& text) {
    std::map<ClusterId, std::set<std::string>> out;
    for (auto line : detail::split(text, '\n')) {
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (line.substr(0, 3) != "cm." || eq == std::string_view::npos)
        throw Error(ErrorCode::ArtifactCorrupt, "bad line in fleet_state.txt");
      const int id = std::stoi(std::string(detail::trim(line.substr(3, eq - 3))));
      auto& set = out[id];
      for (const auto& d : split_list(std::string(detail::trim(line.substr(eq + 1))))) set.insert(d);
    }
    return out;
  }

  // GM serves any device with its one model; MPD trains a fresh model for a
  // new or drifted device.
  void apply_to_baselines(std::vector<StrategyRun>& runs, const FleetEvent& event,
                          const std::vector<DeviceDataset>& involved) {
    for (auto& r : runs) {
      if (event.type == FleetEventType::DeviceRemoved) {
        if (r.strategy == Strategy::Gm) r.routing.erase(event.device_id);
        if (r.strategy == Strategy::Mpd) {
          r.routing.erase(event.device_id);
          r.models.erase(event.device_id);
        }
        continue;
      }
      if (r.strategy == Strategy::Gm) r.routing[event.device_id] = r.models.begin()->first;
      if (r.strategy == Strategy::Mpd) {
        const auto& d = *std::find_if(involved.begin(), involved.end(),
                                      [&](const auto& x) { return x.device_id == event.device_id; });
        auto model = train_single(d, config_.strategy, "mpd");
        ++r.cost.models_trained;
        r.cost.total_epochs += model.provenance.epochs_run;
        r.cost.total_wall_time_ms += model.provenance.wall_time_ms;
        r.models.insert_or_assign(event.device_id, std::move(model));
        r.routing[event.device_id] = event.device_id;
      }
    }
  }

  // Devices served by every run.
  std::vector<DeviceDataset> routed_datasets(const std::vector<StrategyRun>& runs) {
    std::vector<DeviceDataset> out;
    for (const auto& d : datasets()) {
      const bool everywhere =
          std::all_of(runs.begin(), runs.end(), [&](const StrategyRun& r) { return r.routing.count(d.device_id) != 0; });
      if (everywhere) out.push_back(d);
    }
    if (out.empty()) throw Error(ErrorCode::ConfigInvalid, "no device is served by every trained strategy");
    return out;
  }

  EvaluationReport rebuild_report(const std::vector<StrategyRun>& runs) {
    EvaluationReport report;
    std::vector<std::string> header;
    bool in_footer = false;
    const std::string csv = run_->read("evaluation.csv");
    for (auto line : detail::split(csv, '\n')) {
      if (detail::trim(line).empty()) continue;
      const auto f = detail::split(line, ',');
      if (f[0] == "strategy") {
        in_footer = f.size() >= 2 && f[1] == "mean_auc";
        continue;
      }
      auto num = [&](std::size_t i) { return detail::parse_double(f.at(i)).value_or(0.0); };
      if (!in_footer) {
        DeviceEvaluation row;
        row.strategy = std::string(f[0]);
        row.device = std::string(f.at(1));
        row.auc = num(2);
        row.f1 = {num(3), num(4), num(5), num(6)};
        report.rows.push_back(row);
      } else {
        StrategySummary s;
        s.strategy = std::string(f[0]);
        s.mean_auc = num(1);
        s.mean_f1 = num(2);
        for (const auto& r : runs)
          if (to_string(r.strategy) == s.strategy) s.cost = r.cost;
        report.summaries.push_back(s);
      }
    }
    return report;
  }

  const std::string& fingerprint() {
    if (!fingerprint_) {
      if (config_.data_root.empty()) throw Error(ErrorCode::ConfigInvalid, "data.root is not set");
      fingerprint_ = directory_fingerprint(config_.data_root);
      run_->set("dataset_sha256", *fingerprint_);
    }
    return *fingerprint_;
  }

  const std::vector<DeviceDataset>& datasets() {
    if (!datasets_) {
      datasets_ = ingest_dataset(config_.data_root, config_.ingest);
      if (datasets_->empty()) throw Error(ErrorCode::MissingFile, "no devices under " + config_.data_root.string());
      logger()->info("loaded {} devices from {}", datasets_->size(), config_.data_root.string());
    }
    return *datasets_;
  }

  const CommandOptions& options_;
  std::ostream& out_;
  PipelineConfig config_;
  std::string canonical_;
  std::optional<RunDirectory> run_;
  std::optional<std::string> fingerprint_;
  std::optional<std::vector<DeviceDataset>> datasets_;
};

void genfleet(const CommandOptions& options, std::ostream& out) {
  SyntheticFleetSpec spec;
  if (!options.config.empty()) {
    if (!fs::exists(options.config)) throw Error(ErrorCode::ConfigInvalid, "fleet spec not found: " + options.config.string());
    spec = parse_fleet_spec(detail::read_text(options.config));
  }
  if (options.seed) spec.seed = *options.seed;
  const auto fleet = generate_fleet(spec, options.out);
  detail::write_text_atomic(options.out / "fleet_spec.ini", canonical_fleet_spec(spec));
  out << "genfleet: wrote " << fleet.datasets.size() << " devices to " << options.out.string() << "\n";
}

int exit_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigInvalid:
    case ErrorCode::StageDependencyMissing:
      return 2;
    default:
      return 1;
  }
}

}  // namespace

const std::string& RunManifest::at(const std::string& key) const {
  auto it = entries.find(key);
  if (it == entries.end()) throw Error(ErrorCode::ArtifactCorrupt, "manifest has no entry " + key);
  return it->second;
}

RunManifest RunManifest::load(const fs::path& file) {
  const std::string text = detail::read_text(file);
  RunManifest m;
  bool first = true;
  for (auto line : detail::split(text, '\n')) {
    line = detail::trim(line);
    if (first) {
      if (line != kManifestMagic) throw Error(ErrorCode::ArtifactCorrupt, file.string() + " is not a run manifest");
      first = false;
      continue;
    }
    if (line.empty()) continue;
    const auto eq = line.find(" = ");
    if (eq == std::string_view::npos) throw Error(ErrorCode::ArtifactCorrupt, "bad manifest line: " + std::string(line));
    m.entries[std::string(line.substr(0, eq))] = std::string(line.substr(eq + 3));
  }
  if (first) throw Error(ErrorCode::ArtifactCorrupt, file.string() + " is empty");
  return m;
}

std::string RunManifest::render() const {
  std::string out = std::string(kManifestMagic) + "\n";
  for (const auto& [k, v] : entries) out += k + " = " + v + "\n";
  return out;
}

bool is_time_dependent(const std::string& key) {
  auto ends_with = [&](std::string_view suffix) {
    return key.size() >= suffix.size() && key.compare(key.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  return key == "created" || key == "updated" || ends_with(".completed") || key.rfind("volatile.", 0) == 0;
}

int execute(const std::string& subcommand, const CommandOptions& options, std::ostream& out, std::ostream& err) {
  try {
    if (subcommand == "genfleet") {
      genfleet(options, out);
      return 0;
    }
    if (options.config.empty()) throw Error(ErrorCode::ConfigInvalid, "--config is required");
    using Step = void (Pipeline::*)();
    static const std::map<std::string, Step> steps = {
        {"inspect", &Pipeline::inspect},   {"select-metrics", &Pipeline::select_metrics},
        {"similarity", &Pipeline::similarity}, {"cluster", &Pipeline::cluster},
        {"plan", &Pipeline::plan},         {"train", &Pipeline::train},
        {"evaluate", &Pipeline::evaluate}, {"report", &Pipeline::report},
        {"sweep-k", &Pipeline::sweep_k},   {"fleet-event", &Pipeline::fleet_event},
    };
    auto it = steps.find(subcommand);
    if (it == steps.end()) throw Error(ErrorCode::ConfigInvalid, "unknown subcommand '" + subcommand + "'");
    Pipeline pipeline(options, out);
    (pipeline.*(it->second))();
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_status(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << to_string(ErrorCode::IoError) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << to_string(ErrorCode::IoError) << ": " << e.what() << "\n";
    return 1;
  }
}

}  // namespace fleetad
