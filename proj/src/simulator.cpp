#include "essctl/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "essctl/errors.hpp"

namespace essctl {

double LinearFeedbackPolicy::operator()(const State& x) const {
  const double u = -gain.dot((x - equilibrium).vec());
  return std::clamp(u, -u_max, u_max);
}

void Trajectory::validate() const {
  if (states.size() < 2 || states.size() != controls.size())
    throw InvariantViolation("trajectory needs >= 2 samples and one control per sample");
  if (!(dt > 0.0)) throw InvariantViolation("trajectory dt must be positive");
  for (std::size_t k = 0; k < states.size(); ++k)
    if (!states[k].finite() || !std::isfinite(controls[k]))
      throw InvariantViolation("trajectory contains non-finite samples");
}

State rk4_step(const MicrogridModel& model, const State& x, double u, double h) {
  const State k1 = vector_field(model, x, u);
  const State k2 = vector_field(model, x + (0.5 * h) * k1, u);
  const State k3 = vector_field(model, x + (0.5 * h) * k2, u);
  const State k4 = vector_field(model, x + h * k3, u);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

std::size_t step_count(double tf, double dt) {
  if (!(tf > 0.0) || !(dt > 0.0)) throw ConfigError("tf and dt must be positive");
  const double ratio = tf / dt;
  const double r = std::round(ratio);
  if (r < 1.0 || std::abs(ratio - r) > 1e-9 * r)
    throw ConfigError("tf must be an integer multiple of dt");
  return static_cast<std::size_t>(r);
}

namespace {

/// Per-step control evaluation for each policy kind.
class PolicyCursor {
public:
  PolicyCursor(const ControlPolicy& policy, double dt, std::size_t n) : policy_(policy), dt_(dt) {
    if (const auto* s = std::get_if<SchedulePolicy>(&policy_)) {
      s->schedule.validate();
      steps_per_interval_ = s->schedule.grid.steps_per_interval(dt);
      if (steps_per_interval_ * s->schedule.values.size() < n)
        throw ConfigError("schedule does not cover the simulation horizon");
    } else if (const auto* l = std::get_if<LearnedPolicy>(&policy_)) {
      if (!l->decide) throw ConfigError("learned policy has no decision function");
      update_steps_ = step_count(l->update_period, dt);
    } else if (const auto* r = std::get_if<RecordedPolicy>(&policy_)) {
      if (r->controls.size() < n) throw ConfigError("recorded controls shorter than the horizon");
    } else if (const auto* f = std::get_if<LinearFeedbackPolicy>(&policy_)) {
      if (!f->gain.allFinite()) throw ConfigError("feedback gain must be finite");
    }
  }

  double at(std::size_t k, std::span<const State> history) {
    const State& x = history.back();
    return std::visit(
        [&](const auto& p) -> double {
          using P = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<P, ZeroPolicy>) {
            return 0.0;
          } else if constexpr (std::is_same_v<P, ConstantPolicy>) {
            return p.value;
          } else if constexpr (std::is_same_v<P, SchedulePolicy>) {
            return p.schedule.value_at_step(k, steps_per_interval_);
          } else if constexpr (std::is_same_v<P, LinearFeedbackPolicy>) {
            return p(x);
          } else if constexpr (std::is_same_v<P, LearnedPolicy>) {
            if (!final_ && k % update_steps_ == 0)
              held_ = p.decide(static_cast<double>(k) * dt_, history);
            return held_;
          } else {
            return p.controls[std::min(k, p.controls.size() - 1)];
          }
        },
        policy_);
  }

  /// The last sample has no step after it; learned policies keep their held value.
  void mark_final() { final_ = true; }

private:
  const ControlPolicy& policy_;
  double dt_;
  std::size_t steps_per_interval_ = 1;
  std::size_t update_steps_ = 1;
  double held_ = 0.0;
  bool final_ = false;
};

void check_state(const State& x, double t) {
  if (!x.finite() || x.max_abs() > kDivergenceBound)
    throw NonFiniteState("simulation diverged at t = " + std::to_string(t) + " s");
}

} // namespace

Trajectory simulate(const MicrogridModel& model, const State& x0, const ControlPolicy& policy,
                    double tf, double dt) {
  const std::size_t n = step_count(tf, dt);
  check_state(x0, 0.0);
  PolicyCursor cursor(policy, dt, n);

  Trajectory traj;
  traj.dt = dt;
  traj.states.reserve(n + 1);
  traj.controls.reserve(n + 1);
  traj.states.push_back(x0);
  for (std::size_t k = 0; k < n; ++k) {
    const double u = cursor.at(k, traj.states);
    traj.controls.push_back(u);
    const State next = rk4_step(model, traj.states.back(), u, dt);
    check_state(next, static_cast<double>(k + 1) * dt);
    traj.states.push_back(next);
  }
  cursor.mark_final();
  traj.controls.push_back(cursor.at(n, traj.states));
  return traj;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  os << "t,delta1,domega1,delta2,domega2,u\n";
  os << std::setprecision(15);
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const State& x = traj.states[k];
    os << traj.time(k) << ',' << x.delta1 << ',' << x.domega1 << ',' << x.delta2 << ','
       << x.domega2 << ',' << traj.controls[k] << '\n';
  }
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_trajectory_csv(os, traj);
  if (!os) throw IoError("failed writing " + path);
}

} // namespace essctl
