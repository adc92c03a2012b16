#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "essctl/predictor.hpp"

namespace essctl {

/// Fully connected network: ReLU on hidden layers, identity output.
/// weights[l] is (layer_dims[l+1] x layer_dims[l]).
struct MlpModel {
  std::vector<std::size_t> layer_dims;
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  Eigen::VectorXd input_mean;
  Eigen::VectorXd input_std;
  double u_max = 0.2;
  std::size_t feature_decimation = 1;

  std::size_t input_dim() const { return layer_dims.empty() ? 0 : layer_dims.front(); }
  std::size_t parameter_count() const;

  /// Throws InvariantViolation on inconsistent shapes or non-positive input_std.
  void validate() const;
};

/// Default hidden stack of three 64-unit ReLU layers.
std::vector<std::size_t> default_layer_dims(std::size_t input_dim);

/// He initialization (std = sqrt(2 / fan_in)) of the hidden layers, zero output layer,
/// zero biases, identity normalization.
MlpModel init_model(const std::vector<std::size_t>& layer_dims, std::uint64_t seed);

/// Unsaturated network output for one feature vector. Throws DimensionMismatch.
double forward(const MlpModel& model, std::span<const double> features);

/// Row-per-sample batch version of forward().
Eigen::VectorXd forward_batch(const MlpModel& model, const Eigen::MatrixXd& features);

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  static Gradients zeros_like(const MlpModel& model);
};

struct Batch {
  Eigen::MatrixXd features; ///< one sample per row
  Eigen::VectorXd labels;
};

struct LossAndGrad {
  double mse = 0.0;
  Gradients grad;
};

/// Mean squared error and its exact gradient (ReLU'(0) = 0).
LossAndGrad loss_and_grad(const MlpModel& model, const Batch& batch);

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 200;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 42;
  double validation_fraction = 0.1;
  std::size_t patience = 10;

  void validate() const;
};

struct AdamState {
  Gradients m;
  Gradients v;
  std::uint64_t step = 0;

  static AdamState for_model(const MlpModel& model);
};

/// One bias-corrected Adam update in place.
void adam_step(MlpModel& model, const Gradients& grad, AdamState& state, const TrainConfig& config);

enum class SampleSource { Lqr, Bfs };

std::string to_string(SampleSource s);
SampleSource sample_source_from(const std::string& s);

struct LabeledSample {
  std::string id;
  SampleSource source = SampleSource::Lqr;
  double label = 0.0;
  std::vector<double> features;
};

struct TrainReport {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::size_t final_epoch = 0;
  std::size_t best_epoch = 0;
  std::size_t train_size = 0;
  std::size_t val_size = 0;
  std::size_t degenerate_features = 0; ///< zero-variance features whose std was clamped to 1
  double wall_time_s = 0.0;
  std::vector<std::string> warnings;
};

struct TrainOutput {
  MlpModel model;
  TrainReport report;
};

/// Seeded split, normalization on the training split, minibatch Adam with early stopping
/// on validation MSE. Returns the best-validation parameters.
TrainOutput train(const MlpModel& init, const std::vector<LabeledSample>& dataset,
                  const TrainConfig& config);

/// Forward pass on the flattened deviations, saturated to [-u_max, u_max].
/// When `wall_seconds` is given it receives the call's elapsed time.
double infer(const MlpModel& model, const PredictedTrajectory& predicted,
             double* wall_seconds = nullptr);

} // namespace essctl
