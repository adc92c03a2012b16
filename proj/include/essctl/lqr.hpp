#pragma once

#include <Eigen/Dense>

#include "essctl/cost.hpp"
#include "essctl/model.hpp"
#include "essctl/simulator.hpp"

namespace essctl {

/// Infinite-horizon problem: min int x'Qx + u'Ru + 2x'Nu  s.t.  x' = Ax + Bu.
struct LqrProblem {
  Eigen::Matrix4d a = Eigen::Matrix4d::Zero();
  Eigen::Vector4d b = Eigen::Vector4d::Zero();
  Eigen::Matrix4d q = Eigen::Matrix4d::Zero();
  double r = 1.0;
  Eigen::Vector4d n = Eigen::Vector4d::Zero();

  void validate() const;
};

struct LqrSolution {
  Eigen::Matrix4d p = Eigen::Matrix4d::Zero();
  Eigen::RowVector4d k = Eigen::RowVector4d::Zero();
  double riccati_residual = 0.0;
  int iterations = 0;
  double closed_loop_abscissa = 0.0; ///< max real part of eig(A - BK)
};

/// Q = diag(w1, w2, w1, w2), R = w3, N = 0.
LqrProblem weights_to_lqr(const CostWeights& weights, const Linearization& lin);

/// Largest real part of the eigenvalues of `m`.
double spectral_abscissa(const Eigen::Matrix4d& m);

/// Solves F'X + XF + W = 0 through the 16x16 Kronecker-sum system.
/// Throws SingularSystem if F is not Hurwitz or the system is singular.
Eigen::Matrix4d solve_lyapunov(const Eigen::Matrix4d& f, const Eigen::Matrix4d& w);

/// Continuous algebraic Riccati equation by Kleinman's Newton iteration.
/// Throws NoStabilizingSeed or NoConvergence.
LqrSolution solve_care(const LqrProblem& prob);

/// |A'P + PA - (PB + N) R^{-1} (B'P + N') + Q|_inf
double riccati_residual(const LqrProblem& prob, const Eigen::Matrix4d& p);

/// u = -K (x - x_s), saturated to [-u_max, u_max].
LinearFeedbackPolicy lqr_policy(const LqrSolution& sol, const Equilibrium& eq, double u_max);

} // namespace essctl
