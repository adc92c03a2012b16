#include <catch_amalgamated.hpp>

#include <chrono>
#include <cmath>
#include <random>

#include "essctl/errors.hpp"
#include "essctl/mlp.hpp"

using namespace essctl;
using Catch::Approx;

namespace {

Batch random_batch(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Batch b{Eigen::MatrixXd(n, dim), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < b.features.size(); ++i) b.features(i) = g(rng);
  for (Eigen::Index i = 0; i < b.labels.size(); ++i) b.labels(i) = g(rng);
  return b;
}

// init_model leaves the output layer at zero; tests that need every gradient path live
// draw it like a hidden layer.
MlpModel with_random_output(MlpModel m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto& w = m.weights.back();
  std::normal_distribution<double> g(0.0, std::sqrt(2.0 / static_cast<double>(w.cols())));
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = g(rng);
  return m;
}

double loss_only(const MlpModel& m, const Batch& b) {
  return (forward_batch(m, b.features) - b.labels).squaredNorm() / static_cast<double>(b.labels.size());
}

std::vector<LabeledSample> linear_dataset(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> w(dim);
  for (auto& x : w) x = u(rng);
  std::vector<LabeledSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    LabeledSample s;
    s.id = "s" + std::to_string(i);
    s.features.resize(dim);
    double y = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      s.features[j] = u(rng);
      y += w[j] * s.features[j];
    }
    s.label = 0.1 * y;
    out.push_back(std::move(s));
  }
  return out;
}

} // namespace

TEST_CASE("initialization") {
  const auto dims = default_layer_dims(12);
  CHECK(dims == std::vector<std::size_t>{12, 64, 64, 64, 1});
  const MlpModel a = init_model(dims, 1), b = init_model(dims, 1), c = init_model(dims, 2);
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    CHECK(a.weights[l] == b.weights[l]);
    CHECK(a.biases[l] == Eigen::VectorXd::Zero(a.biases[l].size()));
  }
  CHECK(a.weights[0] != c.weights[0]);
  CHECK(a.weights.back() == Eigen::MatrixXd::Zero(1, 64));
  CHECK(a.input_mean == Eigen::VectorXd::Zero(12));
  CHECK(a.input_std == Eigen::VectorXd::Ones(12));
  CHECK(a.parameter_count() == 12 * 64 + 64 + 2 * (64 * 64 + 64) + 64 + 1);

  const MlpModel wide = init_model({64, 160, 1}, 9);
  const auto& w = wide.weights[0];
  const double mean = w.mean();
  const double var = (w.array() - mean).square().sum() / static_cast<double>(w.size() - 1);
  CHECK(w.size() >= 10000);
  CHECK(var == Approx(2.0 / 64.0).epsilon(0.2));
}

TEST_CASE("forward pass") {
  SECTION("all-zero network") {
    MlpModel m = init_model({3, 4, 4, 4, 1}, 1);
    for (auto& w : m.weights) w.setZero();
    const std::vector<double> x{1.0, -2.0, 3.0};
    CHECK(forward(m, x) == 0.0);
  }
  SECTION("affine single layer") {
    MlpModel m = init_model({3, 1}, 1);
    m.weights[0] << 0.5, -1.0, 2.0;
    m.biases[0] << 0.25;
    m.input_mean = Eigen::Vector3d(1.0, 0.0, -1.0);
    m.input_std = Eigen::Vector3d(2.0, 1.0, 0.5);
    const std::vector<double> x{3.0, 4.0, 0.0};
    // normalized (1, 4, 2)
    CHECK(forward(m, x) == Approx(0.5 * 1 - 4.0 + 2.0 * 2 + 0.25).epsilon(1e-15));
  }
  SECTION("hand-set 2-2-1 network") {
    MlpModel m = init_model({2, 2, 1}, 1);
    m.weights[0] << 1.0, -1.0, 0.5, 2.0;
    m.biases[0] << 0.0, -1.0;
    m.weights[1] << 3.0, -2.0;
    m.biases[1] << 0.5;
    // x = (1, 2): hidden pre (-1, 3.5) -> relu (0, 3.5) -> 3*0 - 2*3.5 + 0.5
    CHECK(forward(m, std::vector<double>{1.0, 2.0}) == Approx(-6.5).epsilon(1e-15));
    // x = (2, 0.25): hidden pre (1.75, 0.5) -> 3*1.75 - 2*0.5 + 0.5
    CHECK(forward(m, std::vector<double>{2.0, 0.25}) == Approx(4.75).epsilon(1e-15));
  }
  SECTION("dimension mismatch") {
    const MlpModel m = init_model({3, 4, 1}, 1);
    CHECK_THROWS_AS(forward(m, std::vector<double>{1.0, 2.0}), DimensionMismatch);
  }
  SECTION("batch agrees with single") {
    const MlpModel m = with_random_output(init_model({5, 8, 8, 1}, 4), 4);
    const Batch b = random_batch(7, 5, 8);
    const Eigen::VectorXd y = forward_batch(m, b.features);
    for (Eigen::Index i = 0; i < 7; ++i) {
      const Eigen::VectorXd row = b.features.row(i).transpose();
      CHECK(y(i) == Approx(forward(m, std::span<const double>(row.data(), 5))).epsilon(1e-14));
    }
  }
}

TEST_CASE("gradients match finite differences") {
  MlpModel m = with_random_output(init_model({10, 8, 8, 8, 1}, 21), 21);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 0.1);
  for (auto& b : m.biases)
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = g(rng);
  m.input_mean = Eigen::VectorXd::Constant(10, 0.1);
  m.input_std = Eigen::VectorXd::Constant(10, 1.5);
  const Batch batch = random_batch(16, 10, 6);
  const LossAndGrad lg = loss_and_grad(m, batch);
  CHECK(lg.mse == Approx(loss_only(m, batch)).epsilon(1e-14));

  const double h = 1e-5;
  double worst = 0.0;
  std::size_t checked = 0;
  auto check_param = [&](double& p, double analytic) {
    const double keep = p;
    p = keep + h;
    const double lp = loss_only(m, batch);
    p = keep - h;
    const double lm = loss_only(m, batch);
    p = keep;
    const double fd = (lp - lm) / (2 * h);
    const double scale = std::max({std::abs(fd), std::abs(analytic), 1e-6});
    worst = std::max(worst, std::abs(fd - analytic) / scale);
    ++checked;
  };
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    for (Eigen::Index i = 0; i < m.weights[l].size(); ++i) check_param(m.weights[l](i), lg.grad.weights[l](i));
    for (Eigen::Index i = 0; i < m.biases[l].size(); ++i) check_param(m.biases[l](i), lg.grad.biases[l](i));
  }
  INFO("worst relative error " << worst << " over " << checked);
  CHECK(checked == m.parameter_count());
  CHECK(worst < 1e-6);
}

TEST_CASE("loss semantics") {
  const MlpModel m = with_random_output(init_model({4, 6, 1}, 3), 3);
  Batch b = random_batch(5, 4, 3);
  SECTION("perfect predictions") {
    b.labels = forward_batch(m, b.features);
    const LossAndGrad lg = loss_and_grad(m, b);
    CHECK(lg.mse == 0.0);
    for (const auto& w : lg.grad.weights) CHECK(w.cwiseAbs().maxCoeff() == 0.0);
    for (const auto& v : lg.grad.biases) CHECK(v.cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("duplicating the batch changes nothing") {
    Batch d{Eigen::MatrixXd(10, 4), Eigen::VectorXd(10)};
    d.features << b.features, b.features;
    d.labels << b.labels, b.labels;
    const LossAndGrad a = loss_and_grad(m, b), c = loss_and_grad(m, d);
    CHECK(c.mse == Approx(a.mse).epsilon(1e-14));
    for (std::size_t l = 0; l < a.grad.weights.size(); ++l)
      CHECK((c.grad.weights[l] - a.grad.weights[l]).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("Adam") {
  const MlpModel m0 = with_random_output(init_model({4, 6, 1}, 3), 3);
  const TrainConfig cfg;
  SECTION("zero gradient") {
    MlpModel m = m0;
    AdamState st = AdamState::for_model(m);
    adam_step(m, Gradients::zeros_like(m), st, cfg);
    for (std::size_t l = 0; l < m.weights.size(); ++l) CHECK(m.weights[l] == m0.weights[l]);
    CHECK(st.step == 1);
  }
  SECTION("first step moves each parameter by about lr") {
    MlpModel m = m0;
    AdamState st = AdamState::for_model(m);
    const LossAndGrad lg = loss_and_grad(m, random_batch(8, 4, 1));
    adam_step(m, lg.grad, st, cfg);
    for (std::size_t l = 0; l < m.weights.size(); ++l)
      for (Eigen::Index i = 0; i < m.weights[l].size(); ++i) {
        const double g = lg.grad.weights[l](i);
        const double expected = -cfg.learning_rate * g / (std::abs(g) + cfg.adam_eps);
        CHECK(m.weights[l](i) - m0.weights[l](i) == Approx(expected).margin(1e-12));
      }
  }
  SECTION("deterministic") {
    MlpModel a = m0, b = m0;
    AdamState sa = AdamState::for_model(a), sb = AdamState::for_model(b);
    const LossAndGrad lg = loss_and_grad(a, random_batch(8, 4, 1));
    for (int i = 0; i < 3; ++i) {
      adam_step(a, lg.grad, sa, cfg);
      adam_step(b, lg.grad, sb, cfg);
    }
    for (std::size_t l = 0; l < a.weights.size(); ++l) CHECK(a.weights[l] == b.weights[l]);
  }
}

TEST_CASE("training") {
  SECTION("constant label") {
    std::vector<LabeledSample> data = linear_dataset(200, 6, 1);
    for (auto& s : data) s.label = 0.13;
    TrainConfig cfg;
    cfg.max_epochs = 5000;
    cfg.patience = 500;
    const TrainOutput out = train(init_model({6, 16, 16, 16, 1}, 2), data, cfg);
    CHECK(out.report.val_loss[out.report.best_epoch - 1] < 1e-6);
  }
  SECTION("linear target") {
    const auto data = linear_dataset(1000, 10, 3);
    TrainConfig cfg;
    cfg.max_epochs = 300;
    cfg.patience = 30;
    const TrainOutput out = train(init_model({10, 64, 64, 64, 1}, 4), data, cfg);
    INFO("val " << out.report.val_loss[out.report.best_epoch - 1]);
    CHECK(out.report.val_loss[out.report.best_epoch - 1] < 1e-4);
    CHECK(out.report.train_size == 900);
    CHECK(out.report.val_size == 100);
  }
  SECTION("bit-reproducible") {
    const auto data = linear_dataset(300, 5, 7);
    TrainConfig cfg;
    cfg.max_epochs = 20;
    const TrainOutput a = train(init_model({5, 16, 16, 1}, 1), data, cfg);
    const TrainOutput b = train(init_model({5, 16, 16, 1}, 1), data, cfg);
    for (std::size_t l = 0; l < a.model.weights.size(); ++l) {
      CHECK(a.model.weights[l] == b.model.weights[l]);
      CHECK(a.model.biases[l] == b.model.biases[l]);
    }
    CHECK(a.report.val_loss == b.report.val_loss);
    cfg.seed = 43;
    const TrainOutput c = train(init_model({5, 16, 16, 1}, 1), data, cfg);
    CHECK(c.model.weights[0] != a.model.weights[0]);
  }
  SECTION("degenerate features are clamped") {
    auto data = linear_dataset(100, 4, 9);
    for (auto& s : data) s.features[2] = 1.5;
    TrainConfig cfg;
    cfg.max_epochs = 2;
    const TrainOutput out = train(init_model({4, 8, 1}, 1), data, cfg);
    CHECK(out.report.degenerate_features == 1);
    CHECK(out.model.input_std(2) == 1.0);
    CHECK(out.model.input_mean(2) == 1.5);
    CHECK_FALSE(out.report.warnings.empty());
  }
  SECTION("normalization uses the training split only") {
    const auto data = linear_dataset(50, 3, 2);
    TrainConfig cfg;
    cfg.max_epochs = 1;
    cfg.validation_fraction = 0.2;
    const TrainOutput out = train(init_model({3, 4, 1}, 1), data, cfg);
    Eigen::VectorXd all_mean = Eigen::VectorXd::Zero(3);
    for (const auto& s : data) all_mean += Eigen::Map<const Eigen::VectorXd>(s.features.data(), 3);
    all_mean /= 50.0;
    CHECK((out.model.input_mean - all_mean).cwiseAbs().maxCoeff() > 1e-6);
  }
  SECTION("contract") {
    const auto data = linear_dataset(10, 3, 2);
    CHECK_THROWS_AS(train(init_model({4, 4, 1}, 1), data, TrainConfig{}), DimensionMismatch);
    CHECK_THROWS_AS(train(init_model({3, 4, 1}, 1), {}, TrainConfig{}), ConfigError);
    TrainConfig bad;
    bad.validation_fraction = 1.0;
    CHECK_THROWS_AS(train(init_model({3, 4, 1}, 1), data, bad), ConfigError);
  }
}

TEST_CASE("inference") {
  const std::size_t samples = 1501;
  MlpModel m = with_random_output(init_model(default_layer_dims(feature_dim(samples, 1)), 5), 5);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  PredictedTrajectory p;
  p.deviations.resize(samples);

  SECTION("saturation") {
    for (auto& w : m.weights) w *= 10.0;
    for (int trial = 0; trial < 10000; ++trial) {
      for (auto& d : p.deviations) d = {g(rng), g(rng), g(rng), g(rng)};
      const double u = infer(m, p);
      CHECK(std::abs(u) <= m.u_max);
    }
  }
  SECTION("zero network") {
    for (auto& w : m.weights) w.setZero();
    p.deviations[3] = {1, 2, 3, 4};
    CHECK(infer(m, p) == 0.0);
  }
  SECTION("latency at the default input size") {
    double wall = 0.0, worst = 0.0;
    for (int i = 0; i < 50; ++i) {
      infer(m, p, &wall);
      worst = std::max(worst, wall);
    }
    CHECK(worst < 0.01);
  }
  SECTION("decimation and dimension checks") {
    m.feature_decimation = 10;
    CHECK_THROWS_AS(infer(m, p), DimensionMismatch);
  }
}
