#include "essctl/mlp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "essctl/errors.hpp"

namespace essctl {

namespace {

constexpr double kMinStd = 1e-12;

Eigen::MatrixXd normalize(const MlpModel& model, const Eigen::MatrixXd& x) {
  return (x.rowwise() - model.input_mean.transpose()).array().rowwise() /
         model.input_std.transpose().array();
}

void check_input(const MlpModel& model, Eigen::Index cols) {
  if (static_cast<std::size_t>(cols) != model.input_dim())
    throw DimensionMismatch("feature length " + std::to_string(cols) + " does not match model input " +
                            std::to_string(model.input_dim()));
}

template <class Fn>
void for_each_param(MlpModel& model, Gradients& a, Gradients& b, const Gradients& g, Fn&& fn) {
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    fn(model.weights[l].array(), a.weights[l].array(), b.weights[l].array(), g.weights[l].array());
    fn(model.biases[l].array(), a.biases[l].array(), b.biases[l].array(), g.biases[l].array());
  }
}

Eigen::MatrixXd gather_rows(const std::vector<LabeledSample>& data,
                            const std::vector<std::size_t>& idx, std::size_t dim) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t r = 0; r < idx.size(); ++r)
    x.row(static_cast<Eigen::Index>(r)) =
        Eigen::Map<const Eigen::RowVectorXd>(data[idx[r]].features.data(), static_cast<Eigen::Index>(dim));
  return x;
}

double mse(const MlpModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (y.size() == 0) return 0.0;
  return (forward_batch(model, x) - y).squaredNorm() / static_cast<double>(y.size());
}

} // namespace

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l)
    n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
  return n;
}

void MlpModel::validate() const {
  if (layer_dims.size() < 2) throw InvariantViolation("network needs at least input and output layers");
  if (layer_dims.back() != 1) throw InvariantViolation("network output must be scalar");
  for (auto d : layer_dims)
    if (d == 0) throw InvariantViolation("layer widths must be positive");
  if (weights.size() != layer_dims.size() - 1 || biases.size() != weights.size())
    throw InvariantViolation("layer count does not match layer_dims");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (static_cast<std::size_t>(weights[l].rows()) != layer_dims[l + 1] ||
        static_cast<std::size_t>(weights[l].cols()) != layer_dims[l] ||
        static_cast<std::size_t>(biases[l].size()) != layer_dims[l + 1])
      throw InvariantViolation("weight shape mismatch in layer " + std::to_string(l));
    if (!weights[l].allFinite() || !biases[l].allFinite())
      throw InvariantViolation("non-finite parameters in layer " + std::to_string(l));
  }
  if (static_cast<std::size_t>(input_mean.size()) != input_dim() ||
      static_cast<std::size_t>(input_std.size()) != input_dim())
    throw InvariantViolation("normalization statistics do not match the input dimension");
  if (!input_mean.allFinite() || !(input_std.array() > 0.0).all() || !input_std.allFinite())
    throw InvariantViolation("input_std must be positive and finite");
  if (!(u_max > 0.0)) throw InvariantViolation("u_max must be positive");
  if (feature_decimation == 0) throw InvariantViolation("feature_decimation must be >= 1");
}

std::vector<std::size_t> default_layer_dims(std::size_t input_dim) {
  return {input_dim, 64, 64, 64, 1};
}

MlpModel init_model(const std::vector<std::size_t>& layer_dims, std::uint64_t seed) {
  if (layer_dims.size() < 2 || layer_dims.back() != 1 ||
      std::find(layer_dims.begin(), layer_dims.end(), 0u) != layer_dims.end())
    throw ConfigError("layer_dims must be positive and end in a scalar output");

  MlpModel model;
  model.layer_dims = layer_dims;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const auto fan_in = static_cast<Eigen::Index>(layer_dims[l]);
    const auto fan_out = static_cast<Eigen::Index>(layer_dims[l + 1]);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    // The output layer starts at zero so the untrained network is the zero function; a
    // random output layer leaves a residual random function off the training points.
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(fan_out, fan_in);
    if (l + 2 < layer_dims.size())
      for (Eigen::Index i = 0; i < w.rows(); ++i)
        for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = dist(rng);
    model.weights.push_back(std::move(w));
    model.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  model.input_mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layer_dims.front()));
  model.input_std = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(layer_dims.front()));
  return model;
}

Eigen::VectorXd forward_batch(const MlpModel& model, const Eigen::MatrixXd& features) {
  check_input(model, features.cols());
  Eigen::MatrixXd h = normalize(model, features);
  const std::size_t layers = model.weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd z = h * model.weights[l].transpose();
    z.rowwise() += model.biases[l].transpose();
    h = l + 1 < layers ? Eigen::MatrixXd(z.cwiseMax(0.0)) : std::move(z);
  }
  return h.col(0);
}

double forward(const MlpModel& model, std::span<const double> features) {
  check_input(model, static_cast<Eigen::Index>(features.size()));
  const Eigen::Map<const Eigen::VectorXd> x(features.data(), static_cast<Eigen::Index>(features.size()));
  Eigen::VectorXd h = (x - model.input_mean).cwiseQuotient(model.input_std);
  const std::size_t layers = model.weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::VectorXd z = model.weights[l] * h + model.biases[l];
    h = l + 1 < layers ? Eigen::VectorXd(z.cwiseMax(0.0)) : std::move(z);
  }
  return h(0);
}

Gradients Gradients::zeros_like(const MlpModel& model) {
  Gradients g;
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    g.weights.push_back(Eigen::MatrixXd::Zero(model.weights[l].rows(), model.weights[l].cols()));
    g.biases.push_back(Eigen::VectorXd::Zero(model.biases[l].size()));
  }
  return g;
}

LossAndGrad loss_and_grad(const MlpModel& model, const Batch& batch) {
  const Eigen::Index n = batch.features.rows();
  if (n == 0 || batch.labels.size() != n) throw ConfigError("batch must be nonempty with one label per row");
  check_input(model, batch.features.cols());

  const std::size_t layers = model.weights.size();
  std::vector<Eigen::MatrixXd> acts;   // acts[l] = input to layer l
  std::vector<Eigen::MatrixXd> preact; // preact[l] = output of layer l before activation
  acts.reserve(layers + 1);
  preact.reserve(layers);
  acts.push_back(normalize(model, batch.features));
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd z = acts.back() * model.weights[l].transpose();
    z.rowwise() += model.biases[l].transpose();
    preact.push_back(z);
    acts.push_back(l + 1 < layers ? Eigen::MatrixXd(z.cwiseMax(0.0)) : std::move(z));
  }

  const Eigen::VectorXd err = acts.back().col(0) - batch.labels;
  LossAndGrad out;
  out.mse = err.squaredNorm() / static_cast<double>(n);
  out.grad = Gradients::zeros_like(model);

  Eigen::MatrixXd delta = (2.0 / static_cast<double>(n)) * err;
  for (std::size_t l = layers; l-- > 0;) {
    out.grad.weights[l] = delta.transpose() * acts[l];
    out.grad.biases[l] = delta.colwise().sum().transpose();
    if (l == 0) break;
    Eigen::MatrixXd back = delta * model.weights[l];
    delta = back.cwiseProduct((preact[l - 1].array() > 0.0).cast<double>().matrix());
  }
  return out;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || batch_size == 0 || max_epochs == 0 || patience == 0)
    throw ConfigError("learning rate, batch size, epochs and patience must be positive");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0) ||
      !(adam_eps > 0.0))
    throw ConfigError("Adam betas must be in (0,1) and eps > 0");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw ConfigError("validation fraction must be in (0,1)");
}

AdamState AdamState::for_model(const MlpModel& model) {
  return {Gradients::zeros_like(model), Gradients::zeros_like(model), 0};
}

void adam_step(MlpModel& model, const Gradients& grad, AdamState& state, const TrainConfig& config) {
  if (grad.weights.size() != model.weights.size() || state.m.weights.size() != model.weights.size())
    throw DimensionMismatch("gradient and optimizer state must match the model");
  ++state.step;
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  const double lr = config.learning_rate, eps = config.adam_eps;
  for_each_param(model, state.m, state.v, grad, [&](auto p, auto m, auto v, auto g) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.square();
    p -= lr * (m / c1) / ((v / c2).sqrt() + eps);
  });
}

std::string to_string(SampleSource s) { return s == SampleSource::Lqr ? "LQR" : "BFS"; }

SampleSource sample_source_from(const std::string& s) {
  if (s == "LQR") return SampleSource::Lqr;
  if (s == "BFS") return SampleSource::Bfs;
  throw ParseError("unknown sample source '" + s + "'");
}

TrainOutput train(const MlpModel& init, const std::vector<LabeledSample>& dataset,
                  const TrainConfig& config) {
  config.validate();
  init.validate();
  if (dataset.empty()) throw ConfigError("training dataset is empty");
  const std::size_t dim = init.input_dim();
  for (const auto& s : dataset)
    if (s.features.size() != dim)
      throw DimensionMismatch("sample '" + s.id + "' has " + std::to_string(s.features.size()) +
                              " features, model expects " + std::to_string(dim));

  const auto t_start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(config.seed);

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(std::floor(config.validation_fraction * static_cast<double>(order.size())));
  if (n_val == 0 && order.size() >= 2) n_val = 1;
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  // Keep the row order of each split independent of the shuffle for reproducible matrices.
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());

  const Eigen::MatrixXd x_train = gather_rows(dataset, train_idx, dim);
  const Eigen::MatrixXd x_val = gather_rows(dataset, val_idx, dim);
  Eigen::VectorXd y_train(static_cast<Eigen::Index>(train_idx.size()));
  Eigen::VectorXd y_val(static_cast<Eigen::Index>(val_idx.size()));
  for (std::size_t i = 0; i < train_idx.size(); ++i) y_train(static_cast<Eigen::Index>(i)) = dataset[train_idx[i]].label;
  for (std::size_t i = 0; i < val_idx.size(); ++i) y_val(static_cast<Eigen::Index>(i)) = dataset[val_idx[i]].label;

  TrainOutput out;
  auto& report = out.report;
  report.train_size = train_idx.size();
  report.val_size = val_idx.size();

  MlpModel model = init;
  model.input_mean = x_train.colwise().mean().transpose();
  model.input_std =
      ((x_train.rowwise() - model.input_mean.transpose()).array().square().colwise().mean().sqrt())
          .transpose();
  for (Eigen::Index j = 0; j < model.input_std.size(); ++j) {
    if (!(model.input_std(j) > kMinStd)) {
      model.input_std(j) = 1.0;
      ++report.degenerate_features;
    }
  }
  if (report.degenerate_features > 0)
    report.warnings.push_back("DegenerateFeature: " + std::to_string(report.degenerate_features) +
                              " zero-variance features had their std clamped to 1");

  AdamState adam = AdamState::for_model(model);
  MlpModel best = model;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::vector<std::size_t> perm(train_idx.size());
  std::iota(perm.begin(), perm.end(), 0);

  const bool has_val = y_val.size() > 0;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t start = 0; start < perm.size(); start += config.batch_size) {
      const std::size_t stop = std::min(perm.size(), start + config.batch_size);
      Batch batch;
      batch.features.resize(static_cast<Eigen::Index>(stop - start), static_cast<Eigen::Index>(dim));
      batch.labels.resize(static_cast<Eigen::Index>(stop - start));
      for (std::size_t r = start; r < stop; ++r) {
        batch.features.row(static_cast<Eigen::Index>(r - start)) = x_train.row(static_cast<Eigen::Index>(perm[r]));
        batch.labels(static_cast<Eigen::Index>(r - start)) = y_train(static_cast<Eigen::Index>(perm[r]));
      }
      const LossAndGrad lg = loss_and_grad(model, batch);
      adam_step(model, lg.grad, adam, config);
    }
    const double tl = mse(model, x_train, y_train);
    const double vl = has_val ? mse(model, x_val, y_val) : tl;
    report.train_loss.push_back(tl);
    report.val_loss.push_back(vl);
    report.final_epoch = epoch;
    if (vl < best_val) {
      best_val = vl;
      best = model;
      report.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }

  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  out.model = std::move(best);
  return out;
}

double infer(const MlpModel& model, const PredictedTrajectory& predicted, double* wall_seconds) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<double> features = flatten_features(predicted.deviations, model.feature_decimation);
  const double u = std::clamp(forward(model, features), -model.u_max, model.u_max);
  if (wall_seconds)
    *wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return u;
}

} // namespace essctl
