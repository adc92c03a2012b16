#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "essctl/model.hpp"
#include "essctl/schedule.hpp"

namespace essctl {

inline constexpr double kDefaultDt = 0.01;
inline constexpr double kDivergenceBound = 1e6;

struct ZeroPolicy {};

struct ConstantPolicy {
  double value = 0.0;
};

struct SchedulePolicy {
  ControlSchedule schedule;
};

/// u = clamp(-K (x - x_s), -u_max, u_max).
struct LinearFeedbackPolicy {
  Eigen::RowVector4d gain = Eigen::RowVector4d::Zero();
  State equilibrium;
  double u_max = 0.2;

  double operator()(const State& x) const;
};

/// Re-evaluated every `update_period` seconds and held in between. `decide` sees the
/// sampled history up to and including the current sample.
struct LearnedPolicy {
  double update_period = 0.1;
  std::function<double(double t, std::span<const State> history)> decide;
};

/// Replays a recorded per-step control sequence (one value per sample).
struct RecordedPolicy {
  std::vector<double> controls;
};

using ControlPolicy = std::variant<ZeroPolicy, ConstantPolicy, SchedulePolicy, LinearFeedbackPolicy,
                                   LearnedPolicy, RecordedPolicy>;

struct Trajectory {
  double dt = kDefaultDt;
  double t0 = 0.0;
  std::vector<State> states;
  std::vector<double> controls;

  std::size_t size() const { return states.size(); }
  double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }
  void validate() const;
};

/// One classical Runge-Kutta step with `u` held over the step.
State rk4_step(const MicrogridModel& model, const State& x, double u, double h);

/// Fixed-step simulation sampled at t = 0, dt, ..., tf with zero-order-hold control.
/// Throws NonFiniteState when any component leaves [-1e6, 1e6].
Trajectory simulate(const MicrogridModel& model, const State& x0, const ControlPolicy& policy,
                    double tf, double dt = kDefaultDt);

/// Number of steps tf/dt; throws ConfigError unless it is an integer.
std::size_t step_count(double tf, double dt);

/// Header `t,delta1,domega1,delta2,domega2,u`, 15 significant digits.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);
void write_trajectory_csv(const std::string& path, const Trajectory& traj);

} // namespace essctl
