#include "fleetad/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <random>

#include "fleetad/error.hpp"
#include "text_util.hpp"

namespace fleetad {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEpsilon = 1e-8;
constexpr const char* kModelMagic = "FLEETAD-MODEL 1";

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

void activate(Activation act, Eigen::MatrixXd& z) {
  switch (act) {
    case Activation::Tanh: z = z.array().tanh(); break;
    case Activation::Relu: z = z.array().max(0.0); break;
  }
}

// Derivative expressed through the activation output.
void scale_by_derivative(Activation act, const Eigen::MatrixXd& out, Eigen::MatrixXd& grad) {
  switch (act) {
    case Activation::Tanh: grad.array() *= 1.0 - out.array().square(); break;
    case Activation::Relu: grad.array() *= (out.array() > 0.0).cast<double>(); break;
  }
}

// Activations of every layer; [0] is the input.
std::vector<Eigen::MatrixXd> forward(const TrainedModel& model, const Eigen::MatrixXd& x) {
  std::vector<Eigen::MatrixXd> acts;
  acts.reserve(model.layers.size() + 1);
  acts.push_back(x);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    Eigen::MatrixXd z = layer.weight * acts.back();
    z.colwise() += layer.bias;
    if (l + 1 < model.layers.size()) activate(model.config.activation, z);
    acts.push_back(std::move(z));
  }
  return acts;
}

void check_input(const TrainedModel& model, const Eigen::MatrixXd& windows) {
  if (static_cast<std::size_t>(windows.rows()) != model.input_dim())
    throw Error(ErrorCode::ShapeMismatch, "windows have dimension " + std::to_string(windows.rows()) +
                                              ", model expects " + std::to_string(model.input_dim()));
}

std::string hex(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::hex);
  return std::string(buf, ptr);
}

double unhex(std::string_view s) {
  s = detail::trim(s);
  double v = 0.0;
  bool neg = !s.empty() && s.front() == '-';
  auto body = neg ? s.substr(1) : s;
  auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), v, std::chars_format::hex);
  if (ec != std::errc() || ptr != body.data() + body.size() || body.empty())
    throw Error(ErrorCode::ArtifactCorrupt, "bad hex float '" + std::string(s) + "'");
  return neg ? -v : v;
}

std::string hex_list(const double* data, std::size_t n) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ',';
    out += hex(data[i]);
  }
  return out;
}

std::vector<double> unhex_list(std::string_view s) {
  std::vector<double> out;
  if (detail::trim(s).empty()) return out;
  for (auto part : detail::split(s, ',')) out.push_back(unhex(part));
  return out;
}

}  // namespace

void AutoencoderConfig::validate(std::size_t input_dim) const {
  if (window_size == 0 || num_layers == 0 || hidden_size == 0 || batch_size == 0)
    throw Error(ErrorCode::BadShape, "window_size, num_layers, hidden_size and batch_size must be positive");
  if (hidden_size >= input_dim)
    throw Error(ErrorCode::BadShape, "hidden_size " + std::to_string(hidden_size) + " must be below input dimension " +
                                         std::to_string(input_dim));
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw Error(ErrorCode::ConfigInvalid, "learning_rate must be finite and non-negative");
  if (transfer_max_epochs > max_epochs)
    throw Error(ErrorCode::ConfigInvalid, "transfer_max_epochs must not exceed max_epochs");
  if (early_stopping && early_stop_patience == 0)
    throw Error(ErrorCode::ConfigInvalid, "early_stop_patience must be positive");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw Error(ErrorCode::ConfigInvalid, "validation_fraction must lie in [0, 1)");
}

bool AutoencoderConfig::same_architecture(const AutoencoderConfig& other) const {
  return window_size == other.window_size && num_layers == other.num_layers && hidden_size == other.hidden_size &&
         activation == other.activation;
}

std::vector<std::size_t> layer_widths(std::size_t input_dim, const AutoencoderConfig& config) {
  config.validate(input_dim);
  const std::size_t depth = config.num_layers;
  std::vector<std::size_t> encoder(depth + 1);
  for (std::size_t i = 0; i <= depth; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(depth);
    const double w = static_cast<double>(input_dim) + (static_cast<double>(config.hidden_size) - static_cast<double>(input_dim)) * t;
    encoder[i] = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(w)));
  }
  encoder.back() = config.hidden_size;
  std::vector<std::size_t> widths = encoder;
  for (std::size_t i = depth; i-- > 0;) widths.push_back(encoder[i]);
  return widths;
}

Normalization fit_normalization(std::span<const Eigen::MatrixXd* const> series) {
  if (series.empty() || !series.front()) throw Error(ErrorCode::ConfigInvalid, "no series to normalize");
  const auto m = series.front()->rows();
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(m, std::numeric_limits<double>::infinity());
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(m, -std::numeric_limits<double>::infinity());
  for (const auto* s : series) {
    if (s->rows() != m) throw Error(ErrorCode::ShapeMismatch, "series have different metric counts");
    if (s->cols() == 0) continue;
    lo = lo.cwiseMin(s->rowwise().minCoeff());
    hi = hi.cwiseMax(s->rowwise().maxCoeff());
  }
  Normalization norm;
  norm.offset = lo;
  norm.scale = hi - lo;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!std::isfinite(norm.offset(i))) norm.offset(i) = 0.0;
    if (!(norm.scale(i) > 0.0) || !std::isfinite(norm.scale(i))) norm.scale(i) = 1.0;
  }
  return norm;
}

Eigen::MatrixXd apply_normalization(const Normalization& norm, const Eigen::MatrixXd& series) {
  if (norm.offset.size() != series.rows()) throw Error(ErrorCode::ShapeMismatch, "normalization metric count mismatch");
  Eigen::MatrixXd out = series;
  out.colwise() -= norm.offset;
  out.array().colwise() /= norm.scale.array();
  return out;
}

std::size_t TrainedModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

TrainedModel init_model(const AutoencoderConfig& config, std::size_t metrics, std::uint64_t seed) {
  TrainedModel model;
  model.config = config;
  model.config.seed = seed;
  model.metrics = metrics;
  const auto widths = layer_widths(model.input_dim(), config);
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(widths[l]);
    const auto out = static_cast<Eigen::Index>(widths[l + 1]);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    DenseLayer layer;
    layer.weight.resize(out, in);
    // Row-major fill order so the stream maps to weights independent of storage.
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = (2.0 * uniform01(rng) - 1.0) * bound;
    layer.bias = Eigen::VectorXd::Zero(out);
    model.layers.push_back(std::move(layer));
  }
  model.normalization.offset = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(metrics));
  model.normalization.scale = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(metrics));
  return model;
}

Eigen::MatrixXd reconstruct(const TrainedModel& model, const Eigen::MatrixXd& windows) {
  check_input(model, windows);
  return forward(model, windows).back();
}

Eigen::VectorXd window_errors(const TrainedModel& model, const Eigen::MatrixXd& windows) {
  check_input(model, windows);
  if (windows.cols() == 0) return {};
  // Chunked to bound memory on long series.
  constexpr Eigen::Index kChunk = 4096;
  Eigen::VectorXd out(windows.cols());
  for (Eigen::Index begin = 0; begin < windows.cols(); begin += kChunk) {
    const Eigen::Index n = std::min(kChunk, windows.cols() - begin);
    const Eigen::MatrixXd x = windows.middleCols(begin, n);
    const Eigen::MatrixXd y = forward(model, x).back();
    out.segment(begin, n) = (y - x).array().square().colwise().mean().transpose();
  }
  return out;
}

double reconstruction_loss(const TrainedModel& model, const Eigen::MatrixXd& windows) {
  if (windows.cols() == 0) return 0.0;
  return window_errors(model, windows).mean();
}

LossGradient loss_and_gradient(const TrainedModel& model, const Eigen::MatrixXd& batch) {
  check_input(model, batch);
  if (batch.cols() == 0) throw Error(ErrorCode::ShapeMismatch, "empty batch");
  const auto acts = forward(model, batch);
  const Eigen::MatrixXd diff = acts.back() - batch;
  const double n = static_cast<double>(diff.size());

  LossGradient out;
  out.loss = diff.squaredNorm() / n;
  out.gradient.resize(model.layers.size());
  Eigen::MatrixXd delta = (2.0 / n) * diff;
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    out.gradient[l].weight = delta * acts[l].transpose();
    out.gradient[l].bias = delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd back = model.layers[l].weight.transpose() * delta;
      scale_by_derivative(model.config.activation, acts[l], back);
      delta = std::move(back);
    }
  }
  return out;
}

TrainedModel train(TrainedModel model, const Eigen::MatrixXd& train_windows, const Eigen::MatrixXd& val_windows,
                   std::size_t epoch_budget) {
  const auto& cfg = model.config;
  cfg.validate(model.input_dim());
  check_input(model, train_windows);
  if (val_windows.cols() > 0) check_input(model, val_windows);
  if (cfg.early_stopping && val_windows.cols() == 0 && epoch_budget > 0)
    throw Error(ErrorCode::ConfigInvalid, "early stopping needs a non-empty validation split");
  if (train_windows.cols() == 0 && epoch_budget > 0) throw Error(ErrorCode::ShapeMismatch, "no training windows");

  const auto start = std::chrono::steady_clock::now();
  auto& prov = model.provenance;
  prov.epochs_run = 0;
  prov.val_history.clear();
  const bool have_val = val_windows.cols() > 0;
  prov.initial_val_loss = have_val ? reconstruction_loss(model, val_windows) : 0.0;

  // Adam moments, one pair per layer.
  std::vector<DenseLayer> m1, m2;
  for (const auto& layer : model.layers) {
    m1.push_back({Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()), Eigen::VectorXd::Zero(layer.bias.size())});
    m2.push_back(m1.back());
  }
  std::uint64_t step = 0;
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  const auto n = static_cast<std::size_t>(train_windows.cols());
  std::vector<Eigen::Index> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<Eigen::Index>(i);
  Eigen::MatrixXd batch;

  double best_val = prov.initial_val_loss;
  std::size_t stale_epochs = 0;

  for (std::size_t epoch = 0; epoch < epoch_budget; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
      const std::size_t size = std::min(cfg.batch_size, n - begin);
      batch.resize(train_windows.rows(), static_cast<Eigen::Index>(size));
      for (std::size_t j = 0; j < size; ++j) batch.col(static_cast<Eigen::Index>(j)) = train_windows.col(order[begin + j]);

      const LossGradient lg = loss_and_gradient(model, batch);
      if (!std::isfinite(lg.loss))
        throw Error(ErrorCode::NonFiniteLoss, "loss became " + detail::format_g17(lg.loss) + " at epoch " +
                                                  std::to_string(epoch) + " (learning_rate " +
                                                  detail::format_g17(cfg.learning_rate) + ")");
      epoch_loss += lg.loss * static_cast<double>(size);

      ++step;
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto update = [&](auto& param, auto& mom1, auto& mom2, const auto& grad) {
          mom1 = kBeta1 * mom1 + (1.0 - kBeta1) * grad;
          mom2 = kBeta2 * mom2 + (1.0 - kBeta2) * grad.cwiseProduct(grad);
          param.array() -= cfg.learning_rate * (mom1.array() / c1) / ((mom2.array() / c2).sqrt() + kEpsilon);
        };
        update(model.layers[l].weight, m1[l].weight, m2[l].weight, lg.gradient[l].weight);
        update(model.layers[l].bias, m1[l].bias, m2[l].bias, lg.gradient[l].bias);
      }
    }
    ++prov.epochs_run;
    prov.final_train_loss = epoch_loss / static_cast<double>(n);

    if (have_val) {
      const double val = reconstruction_loss(model, val_windows);
      if (!std::isfinite(val)) throw Error(ErrorCode::NonFiniteLoss, "validation loss diverged at epoch " + std::to_string(epoch));
      prov.val_history.push_back(val);
      if (val < best_val * (1.0 - cfg.early_stop_min_delta)) {
        best_val = val;
        stale_epochs = 0;
      } else {
        ++stale_epochs;
      }
      if (cfg.early_stopping && stale_epochs >= cfg.early_stop_patience) break;
    }
  }

  prov.final_train_loss = train_windows.cols() > 0 ? reconstruction_loss(model, train_windows) : 0.0;
  prov.final_val_loss = have_val ? reconstruction_loss(model, val_windows) : 0.0;
  prov.wall_time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return model;
}

TrainedModel transfer_train(const TrainedModel& source, const Eigen::MatrixXd& target_windows,
                            const Eigen::MatrixXd& val_windows, const AutoencoderConfig& config,
                            const Normalization& target_normalization) {
  if (!source.config.same_architecture(config))
    throw Error(ErrorCode::ArchitectureMismatch, "source model architecture differs from target configuration");
  if (static_cast<std::size_t>(target_normalization.offset.size()) != source.metrics)
    throw Error(ErrorCode::ArchitectureMismatch, "target metric count differs from source model");
  TrainedModel model;
  model.config = config;
  model.metrics = source.metrics;
  model.layers = source.layers;
  model.normalization = target_normalization;
  model.provenance.source_model_id = source.provenance.model_id;
  auto trained = train(std::move(model), target_windows, val_windows, config.transfer_max_epochs);
  trained.provenance.source_model_id = source.provenance.model_id;
  return trained;
}

ScoreSeries score(const TrainedModel& model, const Eigen::MatrixXd& raw_series, const std::string& device_id) {
  if (static_cast<std::size_t>(raw_series.rows()) != model.metrics)
    throw Error(ErrorCode::ShapeMismatch, "series has " + std::to_string(raw_series.rows()) + " metrics, model expects " +
                                              std::to_string(model.metrics));
  const auto w = model.config.window_size;
  if (static_cast<std::size_t>(raw_series.cols()) < w)
    throw Error(ErrorCode::WindowTooLong, "series shorter than the model window");
  const Eigen::MatrixXd norm = apply_normalization(model.normalization, raw_series);
  const auto count = static_cast<std::size_t>(norm.cols()) - w + 1;
  const auto dim = static_cast<Eigen::Index>(model.input_dim());
  // Stride-1 windows of a column-major matrix are contiguous slices.
  Eigen::MatrixXd windows(dim, static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i)
    windows.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::VectorXd>(norm.col(static_cast<Eigen::Index>(i)).data(), dim);
  const Eigen::VectorXd errors = window_errors(model, windows);
  ScoreSeries out;
  out.device_id = device_id;
  out.first_timestep = w - 1;
  out.scores.assign(errors.data(), errors.data() + errors.size());
  return out;
}

double gradient_check(const TrainedModel& model, const Eigen::MatrixXd& batch, double step) {
  const LossGradient analytic = loss_and_gradient(model, batch);
  TrainedModel probe = model;
  double worst = 0.0;
  auto check = [&](double& param, double grad) {
    const double saved = param;
    param = saved + step;
    const double up = reconstruction_loss(probe, batch);
    param = saved - step;
    const double down = reconstruction_loss(probe, batch);
    param = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(grad), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(grad - numeric) / denom);
  };
  for (std::size_t l = 0; l < probe.layers.size(); ++l) {
    auto& layer = probe.layers[l];
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) check(layer.weight.data()[i], analytic.gradient[l].weight.data()[i]);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) check(layer.bias.data()[i], analytic.gradient[l].bias.data()[i]);
  }
  return worst;
}

std::string parameter_bytes(const TrainedModel& model) {
  std::string out;
  for (const auto& l : model.layers) {
    out.append(reinterpret_cast<const char*>(l.weight.data()), sizeof(double) * static_cast<std::size_t>(l.weight.size()));
    out.append(reinterpret_cast<const char*>(l.bias.data()), sizeof(double) * static_cast<std::size_t>(l.bias.size()));
  }
  return out;
}

std::string serialize_model(const TrainedModel& model) {
  const auto& c = model.config;
  const auto& p = model.provenance;
  std::string out = std::string(kModelMagic) + "\n";
  auto kv = [&](const std::string& k, const std::string& v) { out += k + " = " + v + "\n"; };
  kv("config.window_size", std::to_string(c.window_size));
  kv("config.num_layers", std::to_string(c.num_layers));
  kv("config.hidden_size", std::to_string(c.hidden_size));
  kv("config.batch_size", std::to_string(c.batch_size));
  kv("config.learning_rate", hex(c.learning_rate));
  kv("config.max_epochs", std::to_string(c.max_epochs));
  kv("config.transfer_max_epochs", std::to_string(c.transfer_max_epochs));
  kv("config.early_stopping", c.early_stopping ? "1" : "0");
  kv("config.early_stop_patience", std::to_string(c.early_stop_patience));
  kv("config.early_stop_min_delta", hex(c.early_stop_min_delta));
  kv("config.validation_fraction", hex(c.validation_fraction));
  kv("config.activation", c.activation == Activation::Tanh ? "tanh" : "relu");
  kv("config.seed", std::to_string(c.seed));
  kv("metrics", std::to_string(model.metrics));
  kv("normalization.offset", hex_list(model.normalization.offset.data(), static_cast<std::size_t>(model.normalization.offset.size())));
  kv("normalization.scale", hex_list(model.normalization.scale.data(), static_cast<std::size_t>(model.normalization.scale.size())));
  kv("provenance.strategy", p.strategy);
  kv("provenance.model_id", p.model_id);
  kv("provenance.source_model_id", p.source_model_id);
  kv("provenance.epochs_run", std::to_string(p.epochs_run));
  kv("provenance.wall_time_ms", hex(p.wall_time_ms));
  kv("provenance.initial_val_loss", hex(p.initial_val_loss));
  kv("provenance.final_train_loss", hex(p.final_train_loss));
  kv("provenance.final_val_loss", hex(p.final_val_loss));
  kv("provenance.val_history", hex_list(p.val_history.data(), p.val_history.size()));
  kv("layers", std::to_string(model.layers.size()));
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    // Row-major so the text is independent of in-memory storage order.
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w = layer.weight;
    const std::string prefix = "layer." + std::to_string(l) + ".";
    kv(prefix + "shape", std::to_string(w.rows()) + "x" + std::to_string(w.cols()));
    kv(prefix + "weight", hex_list(w.data(), static_cast<std::size_t>(w.size())));
    kv(prefix + "bias", hex_list(layer.bias.data(), static_cast<std::size_t>(layer.bias.size())));
  }
  return out;
}

TrainedModel deserialize_model(const std::string& text) {
  auto lines = detail::split(text, '\n');
  if (lines.empty() || detail::trim(lines.front()) != kModelMagic)
    throw Error(ErrorCode::ArtifactCorrupt, "not a model file (bad magic header)");
  std::map<std::string, std::string, std::less<>> kv;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto line = detail::trim(lines[i]);
    if (line.empty()) continue;
    auto eq = line.find(" = ");
    if (eq == std::string_view::npos) {
      // Empty values serialize as "key =".
      if (line.size() > 2 && line.substr(line.size() - 2) == " =") {
        kv[std::string(line.substr(0, line.size() - 2))] = "";
        continue;
      }
      throw Error(ErrorCode::ArtifactCorrupt, "bad model line");
    }
    kv[std::string(line.substr(0, eq))] = std::string(line.substr(eq + 3));
  }
  auto get = [&](const std::string& k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw Error(ErrorCode::ArtifactCorrupt, "model file missing " + k);
    return it->second;
  };
  auto get_size = [&](const std::string& k) -> std::size_t {
    const auto& v = get(k);
    std::size_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) throw Error(ErrorCode::ArtifactCorrupt, "bad integer for " + k);
    return out;
  };

  TrainedModel model;
  auto& c = model.config;
  c.window_size = get_size("config.window_size");
  c.num_layers = get_size("config.num_layers");
  c.hidden_size = get_size("config.hidden_size");
  c.batch_size = get_size("config.batch_size");
  c.learning_rate = unhex(get("config.learning_rate"));
  c.max_epochs = get_size("config.max_epochs");
  c.transfer_max_epochs = get_size("config.transfer_max_epochs");
  c.early_stopping = get("config.early_stopping") == "1";
  c.early_stop_patience = get_size("config.early_stop_patience");
  c.early_stop_min_delta = unhex(get("config.early_stop_min_delta"));
  c.validation_fraction = unhex(get("config.validation_fraction"));
  c.activation = get("config.activation") == "relu" ? Activation::Relu : Activation::Tanh;
  c.seed = get_size("config.seed");
  model.metrics = get_size("metrics");
  auto offset = unhex_list(get("normalization.offset"));
  auto scale = unhex_list(get("normalization.scale"));
  if (offset.size() != model.metrics || scale.size() != model.metrics)
    throw Error(ErrorCode::ArtifactCorrupt, "normalization size mismatch");
  model.normalization.offset = Eigen::Map<Eigen::VectorXd>(offset.data(), static_cast<Eigen::Index>(offset.size()));
  model.normalization.scale = Eigen::Map<Eigen::VectorXd>(scale.data(), static_cast<Eigen::Index>(scale.size()));

  auto& p = model.provenance;
  p.strategy = get("provenance.strategy");
  p.model_id = get("provenance.model_id");
  p.source_model_id = get("provenance.source_model_id");
  p.epochs_run = get_size("provenance.epochs_run");
  p.wall_time_ms = unhex(get("provenance.wall_time_ms"));
  p.initial_val_loss = unhex(get("provenance.initial_val_loss"));
  p.final_train_loss = unhex(get("provenance.final_train_loss"));
  p.final_val_loss = unhex(get("provenance.final_val_loss"));
  p.val_history = unhex_list(get("provenance.val_history"));

  const auto widths = layer_widths(model.input_dim(), c);
  const std::size_t n_layers = get_size("layers");
  if (n_layers + 1 != widths.size()) throw Error(ErrorCode::ArtifactCorrupt, "layer count does not match configuration");
  for (std::size_t l = 0; l < n_layers; ++l) {
    const std::string prefix = "layer." + std::to_string(l) + ".";
    const auto rows = static_cast<Eigen::Index>(widths[l + 1]);
    const auto cols = static_cast<Eigen::Index>(widths[l]);
    if (get(prefix + "shape") != std::to_string(rows) + "x" + std::to_string(cols))
      throw Error(ErrorCode::ArtifactCorrupt, "layer " + std::to_string(l) + " has an unexpected shape");
    auto w = unhex_list(get(prefix + "weight"));
    auto b = unhex_list(get(prefix + "bias"));
    if (w.size() != static_cast<std::size_t>(rows * cols) || b.size() != static_cast<std::size_t>(rows))
      throw Error(ErrorCode::ArtifactCorrupt, "layer " + std::to_string(l) + " has the wrong number of values");
    DenseLayer layer;
    layer.weight = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(w.data(), rows, cols);
    layer.bias = Eigen::Map<Eigen::VectorXd>(b.data(), rows);
    model.layers.push_back(std::move(layer));
  }
  return model;
}

std::string format_scores(const ScoreSeries& scores) {
  std::string out;
  for (std::size_t i = 0; i < scores.scores.size(); ++i)
    out += std::to_string(scores.first_timestep + i) + "," + detail::format_g17(scores.scores[i]) + "\n";
  return out;
}

}  // namespace fleetad
