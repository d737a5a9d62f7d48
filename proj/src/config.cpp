#include "fleetad/config.hpp"

#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "fleetad/error.hpp"
#include "text_util.hpp"

namespace fleetad {

namespace pt = boost::property_tree;

namespace {

// Reads typed values out of one ini tree and remembers which keys were used,
// so leftovers can be reported as typos.
class Reader {
 public:
  explicit Reader(const std::string& text) {
    std::istringstream in(text);
    try {
      pt::read_ini(in, tree_);
    } catch (const pt::ini_parser_error& e) {
      throw Error(ErrorCode::ConfigInvalid, std::string("config parse error: ") + e.what());
    }
  }

  std::optional<std::string> raw(const std::string& key) {
    used_.insert(key);
    auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'));
    if (!v) return std::nullopt;
    return std::string(detail::trim(*v));
  }

  void text(const std::string& key, std::string& out) {
    if (auto v = raw(key)) out = *v;
  }

  void real(const std::string& key, double& out) {
    if (auto v = raw(key)) {
      auto d = detail::parse_double(*v);
      if (!d) bad(key, *v);
      out = *d;
    }
  }

  template <typename T>
  void integer(const std::string& key, T& out) {
    if (auto v = raw(key)) {
      auto d = detail::parse_double(*v);
      if (!d || *d < 0 || std::floor(*d) != *d) bad(key, *v);
      out = static_cast<T>(*d);
    }
  }

  void flag(const std::string& key, bool& out) {
    if (auto v = raw(key)) {
      if (*v == "true" || *v == "1" || *v == "yes") {
        out = true;
      } else if (*v == "false" || *v == "0" || *v == "no") {
        out = false;
      } else {
        bad(key, *v);
      }
    }
  }

  std::vector<std::string> list(const std::string& key) {
    std::vector<std::string> out;
    if (auto v = raw(key))
      for (auto part : detail::split(*v, ','))
        if (!detail::trim(part).empty()) out.emplace_back(detail::trim(part));
    return out;
  }

  void reject_unknown() const {
    for (const auto& [section, body] : tree_) {
      if (body.empty()) throw Error(ErrorCode::ConfigInvalid, "key outside a section: " + section);
      for (const auto& [key, value] : body) {
        const std::string full = section + "." + key;
        if (!used_.count(full)) throw Error(ErrorCode::ConfigInvalid, "unknown config key " + full);
      }
    }
  }

  [[noreturn]] static void bad(const std::string& key, const std::string& value) {
    throw Error(ErrorCode::ConfigInvalid, "bad value for " + key + ": '" + value + "'");
  }

 private:
  pt::ptree tree_;
  std::set<std::string> used_;
};

std::string bool_text(bool b) { return b ? "true" : "false"; }

}  // namespace

PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  Reader r(text);
  PipelineConfig c;
  auto& m = c.strategy.model;

  r.text("run.id", c.run_id);
  r.integer("run.seed", c.strategy.global_seed);

  std::string root, layout = "smd_like";
  r.text("data.root", root);
  if (!root.empty()) {
    c.data_root = root;
    if (c.data_root.is_relative() && !base_dir.empty()) c.data_root = base_dir / c.data_root;
  }
  r.text("data.layout", layout);
  if (layout == "smd_like") {
    c.ingest.layout = Layout::SmdLike;
  } else if (layout == "single_dir") {
    c.ingest.layout = Layout::SingleDir;
  } else {
    Reader::bad("data.layout", layout);
  }
  r.flag("data.forward_fill", c.ingest.forward_fill);
  r.integer("data.top_n", c.selection.top_n);
  r.real("data.zero_fraction_limit", c.selection.zero_fraction_limit);
  r.real("data.collinearity_threshold", c.selection.collinearity_threshold);

  r.integer("similarity.bins", c.similarity.bins);
  r.flag("similarity.full_minmax", c.similarity.full_minmax);

  r.integer("clustering.k", c.k);

  r.integer("model.window_size", m.window_size);
  r.integer("model.num_layers", m.num_layers);
  r.integer("model.hidden_size", m.hidden_size);
  r.integer("model.batch_size", m.batch_size);
  r.real("model.learning_rate", m.learning_rate);
  r.integer("model.max_epochs", m.max_epochs);
  r.integer("model.transfer_max_epochs", m.transfer_max_epochs);
  r.flag("model.early_stopping", m.early_stopping);
  r.integer("model.early_stop_patience", m.early_stop_patience);
  r.real("model.early_stop_min_delta", m.early_stop_min_delta);
  r.real("model.validation_fraction", m.validation_fraction);
  std::string activation = "tanh";
  r.text("model.activation", activation);
  if (activation == "tanh") {
    m.activation = Activation::Tanh;
  } else if (activation == "relu") {
    m.activation = Activation::Relu;
  } else {
    Reader::bad("model.activation", activation);
  }

  r.integer("strategy.train_stride", c.strategy.train_stride);
  std::string budget = "device";
  r.text("strategy.pooled_budget", budget);
  if (budget == "device") {
    c.strategy.pooled_budget = PooledBudget::Device;
  } else if (budget == "full") {
    c.strategy.pooled_budget = PooledBudget::Full;
  } else {
    Reader::bad("strategy.pooled_budget", budget);
  }
  r.real("strategy.cm_retrain_threshold", c.strategy.cm_retrain_threshold);

  std::string f1 = "pointwise";
  r.text("eval.f1_mode", f1);
  if (f1 == "pointwise") {
    c.f1_mode = F1Mode::Pointwise;
  } else if (f1 == "point_adjust") {
    c.f1_mode = F1Mode::PointAdjust;
  } else {
    Reader::bad("eval.f1_mode", f1);
  }

  for (const auto& v : r.list("sweep.k_values")) {
    auto d = detail::parse_double(v);
    if (!d || *d < 1 || std::floor(*d) != *d) Reader::bad("sweep.k_values", v);
    c.sweep_k.push_back(static_cast<std::size_t>(*d));
  }
  std::string sweep_strategy = "cm";
  r.text("sweep.strategy", sweep_strategy);
  c.sweep_strategy = parse_strategy(sweep_strategy);
  if (c.sweep_strategy != Strategy::Cm && c.sweep_strategy != Strategy::Icptl)
    Reader::bad("sweep.strategy", sweep_strategy);

  r.reject_unknown();
  if (c.strategy.train_stride == 0) Reader::bad("strategy.train_stride", "0");
  if (!(c.strategy.cm_retrain_threshold >= 0.0 && c.strategy.cm_retrain_threshold <= 1.0))
    Reader::bad("strategy.cm_retrain_threshold", detail::format_g17(c.strategy.cm_retrain_threshold));
  if (m.transfer_max_epochs > m.max_epochs)
    throw Error(ErrorCode::ConfigInvalid, "model.transfer_max_epochs must not exceed model.max_epochs");
  return c;
}

PipelineConfig load_config(const std::filesystem::path& file) {
  if (!std::filesystem::exists(file)) throw Error(ErrorCode::ConfigInvalid, "config file not found: " + file.string());
  return parse_config(detail::read_text(file), file.parent_path());
}

std::string canonical_config(const PipelineConfig& c) {
  using detail::format_g17;
  const auto& m = c.strategy.model;
  std::string out;
  auto kv = [&](const std::string& k, const std::string& v) { out += k + " = " + v + "\n"; };
  out += "[run]\n";
  kv("id", c.run_id);
  kv("seed", std::to_string(c.strategy.global_seed));
  out += "[data]\n";
  kv("root", c.data_root.string());
  kv("layout", c.ingest.layout == Layout::SmdLike ? "smd_like" : "single_dir");
  kv("forward_fill", bool_text(c.ingest.forward_fill));
  kv("top_n", std::to_string(c.selection.top_n));
  kv("zero_fraction_limit", format_g17(c.selection.zero_fraction_limit));
  kv("collinearity_threshold", format_g17(c.selection.collinearity_threshold));
  out += "[similarity]\n";
  kv("bins", std::to_string(c.similarity.bins));
  kv("full_minmax", bool_text(c.similarity.full_minmax));
  out += "[clustering]\n";
  kv("k", std::to_string(c.k));
  out += "[model]\n";
  kv("window_size", std::to_string(m.window_size));
  kv("num_layers", std::to_string(m.num_layers));
  kv("hidden_size", std::to_string(m.hidden_size));
  kv("batch_size", std::to_string(m.batch_size));
  kv("learning_rate", format_g17(m.learning_rate));
  kv("max_epochs", std::to_string(m.max_epochs));
  kv("transfer_max_epochs", std::to_string(m.transfer_max_epochs));
  kv("early_stopping", bool_text(m.early_stopping));
  kv("early_stop_patience", std::to_string(m.early_stop_patience));
  kv("early_stop_min_delta", format_g17(m.early_stop_min_delta));
  kv("validation_fraction", format_g17(m.validation_fraction));
  kv("activation", m.activation == Activation::Tanh ? "tanh" : "relu");
  out += "[strategy]\n";
  kv("train_stride", std::to_string(c.strategy.train_stride));
  kv("pooled_budget", c.strategy.pooled_budget == PooledBudget::Device ? "device" : "full");
  kv("cm_retrain_threshold", format_g17(c.strategy.cm_retrain_threshold));
  out += "[eval]\n";
  kv("f1_mode", c.f1_mode == F1Mode::Pointwise ? "pointwise" : "point_adjust");
  out += "[sweep]\n";
  std::string ks;
  for (std::size_t i = 0; i < c.sweep_k.size(); ++i) ks += (i ? "," : "") + std::to_string(c.sweep_k[i]);
  kv("k_values", ks);
  kv("strategy", std::string(to_string(c.sweep_strategy)));
  return out;
}

SyntheticFleetSpec parse_fleet_spec(const std::string& text) {
  Reader r(text);
  SyntheticFleetSpec s;
  r.integer("fleet.n_devices", s.n_devices);
  r.integer("fleet.n_clusters", s.n_clusters);
  r.integer("fleet.metrics", s.metrics);
  r.integer("fleet.informative_metrics", s.informative_metrics);
  r.integer("fleet.t_train", s.t_train);
  r.integer("fleet.t_test", s.t_test);
  r.real("fleet.cluster_separation", s.cluster_separation);
  r.real("fleet.device_jitter", s.device_jitter);
  r.real("fleet.noise", s.noise);
  r.real("fleet.anomaly_magnitude", s.anomaly_magnitude);
  r.integer("fleet.anomaly_duration", s.anomaly_duration);
  r.real("fleet.anomaly_rate", s.anomaly_rate);
  r.integer("fleet.seed", s.seed);
  auto types = r.list("fleet.anomaly_types");
  if (!types.empty()) {
    s.anomaly_types.clear();
    for (const auto& t : types) {
      if (t == "level_shift") {
        s.anomaly_types.push_back(AnomalyType::LevelShift);
      } else if (t == "spike") {
        s.anomaly_types.push_back(AnomalyType::Spike);
      } else if (t == "variance_burst") {
        s.anomaly_types.push_back(AnomalyType::VarianceBurst);
      } else {
        throw Error(ErrorCode::BadSpec, "unknown anomaly type " + t);
      }
    }
  }
  try {
    r.reject_unknown();
  } catch (const Error& e) {
    throw Error(ErrorCode::BadSpec, e.what());
  }
  s.validate();
  return s;
}

std::string canonical_fleet_spec(const SyntheticFleetSpec& s) {
  using detail::format_g17;
  std::string out = "[fleet]\n";
  auto kv = [&](const std::string& k, const std::string& v) { out += k + " = " + v + "\n"; };
  kv("n_devices", std::to_string(s.n_devices));
  kv("n_clusters", std::to_string(s.n_clusters));
  kv("metrics", std::to_string(s.metrics));
  kv("informative_metrics", std::to_string(s.informative_metrics));
  kv("t_train", std::to_string(s.t_train));
  kv("t_test", std::to_string(s.t_test));
  kv("cluster_separation", format_g17(s.cluster_separation));
  kv("device_jitter", format_g17(s.device_jitter));
  kv("noise", format_g17(s.noise));
  std::string types;
  for (std::size_t i = 0; i < s.anomaly_types.size(); ++i)
    types += (i ? "," : "") + std::string(to_string(s.anomaly_types[i]));
  kv("anomaly_types", types);
  kv("anomaly_magnitude", format_g17(s.anomaly_magnitude));
  kv("anomaly_duration", std::to_string(s.anomaly_duration));
  kv("anomaly_rate", format_g17(s.anomaly_rate));
  kv("seed", std::to_string(s.seed));
  return out;
}

}  // namespace fleetad
