#include "essctl/predictor.hpp"

#include <cmath>

#include "essctl/errors.hpp"

namespace essctl {

void MeasurementWindow::validate() const {
  if (states.size() < 2) throw ConfigError("measurement window needs at least 2 samples");
  if (!(dt > 0.0)) throw ConfigError("measurement window dt must be positive");
  for (const auto& s : states)
    if (!s.finite()) throw ConfigError("measurement window contains non-finite samples");
  if (!controls.empty() && controls.size() + 1 != states.size())
    throw ConfigError("measurement window needs one control per sample interval");
}

Trajectory PredictedTrajectory::absolute() const {
  Trajectory traj;
  traj.dt = dt;
  traj.states.reserve(deviations.size());
  for (const auto& d : deviations) traj.states.push_back(equilibrium + d);
  traj.controls.assign(deviations.size(), 0.0);
  return traj;
}

Eigen::Vector4d linear_rk4_step(const Eigen::Matrix4d& a, const Eigen::Vector4d& x, double h) {
  const Eigen::Vector4d k1 = a * x;
  const Eigen::Vector4d k2 = a * (x + 0.5 * h * k1);
  const Eigen::Vector4d k3 = a * (x + 0.5 * h * k2);
  const Eigen::Vector4d k4 = a * (x + h * k3);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

LinearPredictor::LinearPredictor(const Eigen::Matrix4d& a, const Equilibrium& eq, double dt,
                                 std::size_t max_window_samples, const Eigen::Vector4d& b)
    : a_(a), eq_(eq), dt_(dt) {
  if (!(dt > 0.0)) throw ConfigError("predictor dt must be positive");
  if (max_window_samples < 2) throw ConfigError("predictor window must allow >= 2 samples");
  // Integrate the identity's columns through one step.
  for (int j = 0; j < 4; ++j)
    step_.col(j) = linear_rk4_step(a, Eigen::Vector4d::Unit(j), dt);
  // RK4 on x' = A x + b from x = 0, stage by stage.
  const Eigen::Vector4d k1 = b;
  const Eigen::Vector4d k2 = a * (0.5 * dt * k1) + b;
  const Eigen::Vector4d k3 = a * (0.5 * dt * k2) + b;
  const Eigen::Vector4d k4 = a * (dt * k3) + b;
  input_step_ = (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  phi_.reserve(max_window_samples);
  phi_.push_back(Eigen::Matrix4d::Identity());
  while (phi_.size() < max_window_samples) phi_.push_back(step_ * phi_.back());
}

State LinearPredictor::fit_window(const MeasurementWindow& window) const {
  window.validate();
  if (std::abs(window.dt - dt_) > 1e-12 * dt_)
    throw ConfigError("measurement window dt does not match the predictor");
  const std::size_t n = window.states.size();
  if (n > phi_.size()) throw ConfigError("measurement window longer than the predictor cache");

  Eigen::Matrix4d normal = Eigen::Matrix4d::Zero();
  Eigen::Vector4d rhs = Eigen::Vector4d::Zero();
  const Eigen::Vector4d xs = eq_.state.vec();
  Eigen::Vector4d forced = Eigen::Vector4d::Zero();
  for (std::size_t k = 0; k < n; ++k) {
    if (k > 0 && !window.controls.empty()) forced = step_ * forced + input_step_ * window.controls[k - 1];
    const Eigen::Vector4d y = window.states[k].vec() - xs - forced;
    normal.noalias() += phi_[k].transpose() * phi_[k];
    rhs.noalias() += phi_[k].transpose() * y;
  }
  Eigen::LLT<Eigen::Matrix4d> llt(normal);
  if (!normal.allFinite() || llt.info() != Eigen::Success)
    throw RankDeficient("window normal equations are not positive definite");
  const Eigen::Vector4d diag = llt.matrixL().toDenseMatrix().diagonal();
  if (diag.minCoeff() <= 1e-8 * diag.maxCoeff())
    throw RankDeficient("window normal equations are ill-conditioned");
  const Eigen::Vector4d d0 = llt.solve(rhs);
  return State::from(phi_[n - 1] * d0 + forced);
}

PredictedTrajectory LinearPredictor::predict_horizon(const State& deviation_now, double horizon) const {
  if (!deviation_now.finite()) throw ConfigError("deviation must be finite");
  const std::size_t n = step_count(horizon, dt_);
  PredictedTrajectory out;
  out.dt = dt_;
  out.horizon = horizon;
  out.equilibrium = eq_.state;
  out.source = PredictionSource::LinearPrediction;
  out.deviations.reserve(n + 1);
  Eigen::Vector4d d = deviation_now.vec();
  out.deviations.push_back(deviation_now);
  for (std::size_t k = 0; k < n; ++k) {
    d = step_ * d;
    out.deviations.push_back(State::from(d));
  }
  return out;
}

std::size_t feature_dim(std::size_t samples, std::size_t decimation) {
  if (decimation == 0) throw ConfigError("decimation must be >= 1");
  return samples == 0 ? 0 : 4 * ((samples - 1) / decimation + 1);
}

std::vector<double> flatten_features(const std::vector<State>& deviations, std::size_t decimation) {
  std::vector<double> f;
  f.reserve(feature_dim(deviations.size(), decimation));
  for (std::size_t k = 0; k < deviations.size(); k += decimation) {
    const State& d = deviations[k];
    f.insert(f.end(), {d.delta1, d.domega1, d.delta2, d.domega2});
  }
  return f;
}

} // namespace essctl
