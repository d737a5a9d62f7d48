#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fleetad {

enum class Activation { Tanh, Relu };

struct AutoencoderConfig {
  std::size_t window_size = 10;
  std::size_t num_layers = 2;   // encoder depth (decoder mirrors it)
  std::size_t hidden_size = 8;  // bottleneck width
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::size_t max_epochs = 50;           // L: from-scratch budget
  std::size_t transfer_max_epochs = 10;  // l: fine-tuning budget
  bool early_stopping = true;
  std::size_t early_stop_patience = 5;
  double early_stop_min_delta = 1e-3;  // relative improvement counted as significant
  double validation_fraction = 0.1;
  Activation activation = Activation::Tanh;
  std::uint64_t seed = 42;

  // Throws BadShape / ConfigInvalid.
  void validate(std::size_t input_dim) const;
  bool same_architecture(const AutoencoderConfig& other) const;
};

// Widths from input to bottleneck and back. Interior widths interpolate
// linearly between input_dim and hidden_size, rounded to nearest, e.g.
// 40 -> 24 -> 8 -> 24 -> 40 for two encoder layers.
std::vector<std::size_t> layer_widths(std::size_t input_dim, const AutoencoderConfig& config);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

// Per-metric affine map applied before windowing: x' = (x - offset) / scale.
struct Normalization {
  Eigen::VectorXd offset;
  Eigen::VectorXd scale;
};

// Min-max over all columns of all given series; constant metrics get scale 1.
Normalization fit_normalization(std::span<const Eigen::MatrixXd* const> series);
Eigen::MatrixXd apply_normalization(const Normalization& norm, const Eigen::MatrixXd& series);

struct Provenance {
  std::string strategy;
  std::string model_id;
  std::string source_model_id;  // empty unless transfer-trained
  std::size_t epochs_run = 0;
  double wall_time_ms = 0.0;
  double initial_val_loss = 0.0;
  double final_train_loss = 0.0;
  double final_val_loss = 0.0;
  std::vector<double> val_history;  // one entry per epoch run
};

struct TrainedModel {
  AutoencoderConfig config;
  std::size_t metrics = 0;
  Normalization normalization;
  std::vector<DenseLayer> layers;
  Provenance provenance;

  std::size_t input_dim() const { return metrics * config.window_size; }
  std::size_t parameter_count() const;
};

TrainedModel init_model(const AutoencoderConfig& config, std::size_t metrics, std::uint64_t seed);

// Columns are flattened windows (normalized).
Eigen::MatrixXd reconstruct(const TrainedModel& model, const Eigen::MatrixXd& windows);
// Mean over windows and elements of the squared reconstruction error.
double reconstruction_loss(const TrainedModel& model, const Eigen::MatrixXd& windows);
// Per-window mean squared error.
Eigen::VectorXd window_errors(const TrainedModel& model, const Eigen::MatrixXd& windows);

struct LossGradient {
  double loss = 0.0;
  std::vector<DenseLayer> gradient;  // same shapes as the model's layers
};

// Analytic gradient of reconstruction_loss over the batch.
LossGradient loss_and_gradient(const TrainedModel& model, const Eigen::MatrixXd& batch);

// Mini-batch Adam (beta1 0.9, beta2 0.999, eps 1e-8) on MSE, stopping at the
// epoch budget or when the validation loss has not improved by a relative
// early_stop_min_delta for early_stop_patience consecutive epochs. Shuffling
// is driven by config.seed.
TrainedModel train(TrainedModel model, const Eigen::MatrixXd& train_windows, const Eigen::MatrixXd& val_windows,
                   std::size_t epoch_budget);

// Warm start from `source` and fine-tune for at most config.transfer_max_epochs.
TrainedModel transfer_train(const TrainedModel& source, const Eigen::MatrixXd& target_windows,
                            const Eigen::MatrixXd& val_windows, const AutoencoderConfig& config,
                            const Normalization& target_normalization);

// Reconstruction error per stride-1 window of a raw (metrics x T) series,
// assigned to the window's last timestep. The first window_size - 1
// timesteps are unscored.
struct ScoreSeries {
  std::string device_id;
  std::size_t first_timestep = 0;
  std::vector<double> scores;
};

ScoreSeries score(const TrainedModel& model, const Eigen::MatrixXd& raw_series, const std::string& device_id = {});

// Max relative error between the analytic gradient and central finite
// differences. Relative error is |a - n| / max(|a|, |n|, 1e-8).
double gradient_check(const TrainedModel& model, const Eigen::MatrixXd& batch, double step = 1e-5);

// Raw bytes of every parameter in layer order. Equal strings mean
// bit-identical models.
std::string parameter_bytes(const TrainedModel& model);

// Versioned text container; floats are hex-encoded so round trips are exact.
std::string serialize_model(const TrainedModel& model);
TrainedModel deserialize_model(const std::string& text);

std::string format_scores(const ScoreSeries& scores);

}  // namespace fleetad
