#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "essctl/model.hpp"
#include "essctl/simulator.hpp"

namespace essctl {

/// Trailing samples of the measured response, uniformly spaced by dt.
struct MeasurementWindow {
  double dt = kDefaultDt;
  std::vector<State> states;
  /// Optional inputs held over each sample interval (states.size() - 1 values). When
  /// present their linear forced response is removed before fitting.
  std::vector<double> controls;
  double t_end = 0.0;

  void validate() const;
};

enum class PredictionSource { LinearPrediction, TrueResponse };

/// Response over [now, now + horizon] expressed as deviations from the equilibrium.
struct PredictedTrajectory {
  double dt = kDefaultDt;
  double horizon = 15.0;
  State equilibrium;
  std::vector<State> deviations;
  PredictionSource source = PredictionSource::LinearPrediction;

  /// Absolute states x_s + d(t) with a zero control channel.
  Trajectory absolute() const;
};

/// Linear model x' = A x + b u sampled with the same RK4 rule as the simulator; predictions
/// are zero-input.
/// Transition matrices for window fitting are tabulated at construction; afterwards
/// every method is read-only.
class LinearPredictor {
public:
  LinearPredictor(const Eigen::Matrix4d& a, const Equilibrium& eq, double dt,
                  std::size_t max_window_samples = 101,
                  const Eigen::Vector4d& b = Eigen::Vector4d::Zero());

  const Eigen::Matrix4d& a() const { return a_; }
  const Equilibrium& equilibrium() const { return eq_; }
  double dt() const { return dt_; }
  std::size_t max_window_samples() const { return phi_.size(); }

  /// One-step RK4 transition matrix for the linear system.
  const Eigen::Matrix4d& step_matrix() const { return step_; }

  /// Least-squares estimate of the deviation at the window's last sample, fitting the
  /// free response after subtracting the forced response of any window controls.
  /// Throws RankDeficient when the normal matrix is not positive definite.
  State fit_window(const MeasurementWindow& window) const;

  /// Propagates `deviation_now` over [0, horizon] at the predictor's dt.
  PredictedTrajectory predict_horizon(const State& deviation_now, double horizon) const;

private:
  Eigen::Matrix4d a_;
  Equilibrium eq_;
  double dt_;
  Eigen::Matrix4d step_;
  Eigen::Vector4d input_step_; ///< one-step response to a unit held input from zero
  std::vector<Eigen::Matrix4d> phi_; ///< phi_[k] = step_^k
};

/// RK4 step of x' = A x, written out stage by stage (independent of step_matrix()).
Eigen::Vector4d linear_rk4_step(const Eigen::Matrix4d& a, const Eigen::Vector4d& x, double h);

/// Flattens deviations time-major as (delta1, domega1, delta2, domega2) per kept sample,
/// keeping every `decimation`-th sample starting at the first.
std::vector<double> flatten_features(const std::vector<State>& deviations, std::size_t decimation);

/// Length of flatten_features() for `samples` samples.
std::size_t feature_dim(std::size_t samples, std::size_t decimation);

} // namespace essctl
