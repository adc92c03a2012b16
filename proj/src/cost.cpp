#include "essctl/cost.hpp"

#include <cmath>

#include "essctl/errors.hpp"

namespace essctl {

void CostWeights::validate() const {
  if (!(w1 >= 0.0) || !(w2 >= 0.0) || !(w3 >= 0.0) || !(terminal_weight >= 0.0))
    throw ConfigError("cost weights must be >= 0");
  if (w1 == 0.0 && w2 == 0.0 && w3 == 0.0) throw ConfigError("cost weights must not all be zero");
}

double running_cost(const CostWeights& weights, const State& x, const Equilibrium& eq, double u) {
  const double d1 = x.delta1 - eq.state.delta1;
  const double d2 = x.delta2 - eq.state.delta2;
  return weights.w1 * (d1 * d1 + d2 * d2) +
         weights.w2 * (x.domega1 * x.domega1 + x.domega2 * x.domega2) + weights.w3 * (u * u);
}

double terminal_cost(const CostWeights& weights, const State& x, const Equilibrium& eq) {
  if (weights.terminal_weight == 0.0) return 0.0;
  return weights.terminal_weight * (x - eq.state).vec().squaredNorm();
}

double trajectory_cost(const CostWeights& weights, const Trajectory& traj, const Equilibrium& eq) {
  traj.validate();
  double acc = 0.0;
  double l_prev = running_cost(weights, traj.states[0], eq, traj.controls[0]);
  for (std::size_t k = 1; k < traj.size(); ++k) {
    const double l_next = running_cost(weights, traj.states[k], eq, traj.controls[k]);
    acc += 0.5 * traj.dt * (l_prev + l_next);
    l_prev = l_next;
  }
  return acc + terminal_cost(weights, traj.states.back(), eq);
}

} // namespace essctl
