#pragma once

#include "essctl/model.hpp"
#include "essctl/simulator.hpp"

namespace essctl {

/// Weights of the quadratic running cost
///   L = w1 |delta - delta_s|^2 + w2 |domega|^2 + w3 u^2
/// plus an optional terminal penalty terminal_weight * |x(tf) - x_s|^2.
struct CostWeights {
  double w1 = 1.0;
  double w2 = 1.0;
  double w3 = 0.5;
  double terminal_weight = 0.0;

  void validate() const;
};

double running_cost(const CostWeights& weights, const State& x, const Equilibrium& eq, double u);

/// Trapezoidal quadrature of running_cost over the samples plus the terminal term.
/// Segments are accumulated left to right as 0.5 * dt * (L_k + L_{k+1}).
double trajectory_cost(const CostWeights& weights, const Trajectory& traj, const Equilibrium& eq);

double terminal_cost(const CostWeights& weights, const State& x, const Equilibrium& eq);

} // namespace essctl
