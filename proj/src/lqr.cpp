#include "essctl/lqr.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "essctl/errors.hpp"

namespace essctl {

namespace {

constexpr int kMaxKleinmanIter = 100;
constexpr double kGainTol = 1e-12;

Eigen::RowVector4d gain_from(const LqrProblem& prob, const Eigen::Matrix4d& p) {
  return (prob.b.transpose() * p + prob.n.transpose()) / prob.r;
}

/// Stabilizing K0: zero if A is already Hurwitz, else the smallest power-of-two multiple of B'.
Eigen::RowVector4d stabilizing_seed(const LqrProblem& prob) {
  if (spectral_abscissa(prob.a) < 0.0) return Eigen::RowVector4d::Zero();
  for (int e = -20; e <= 40; ++e) {
    const Eigen::RowVector4d k = std::ldexp(1.0, e) * prob.b.transpose();
    if (spectral_abscissa(prob.a - prob.b * k) < 0.0) return k;
  }
  throw NoStabilizingSeed("no gain along B' stabilizes A - BK");
}

} // namespace

void LqrProblem::validate() const {
  if (!a.allFinite() || !b.allFinite() || !q.allFinite() || !n.allFinite() || !std::isfinite(r))
    throw ConfigError("LQR matrices must be finite");
  if (!(r > 0.0)) throw ConfigError("LQR weight R must be > 0");
  if ((q - q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, q.cwiseAbs().maxCoeff()))
    throw ConfigError("LQR weight Q must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(q);
  if (es.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, q.cwiseAbs().maxCoeff()))
    throw ConfigError("LQR weight Q must be positive semidefinite");
}

LqrProblem weights_to_lqr(const CostWeights& weights, const Linearization& lin) {
  weights.validate();
  LqrProblem prob;
  prob.a = lin.a;
  prob.b = lin.b;
  prob.q = Eigen::Vector4d(weights.w1, weights.w2, weights.w1, weights.w2).asDiagonal();
  prob.r = weights.w3;
  return prob;
}

double spectral_abscissa(const Eigen::Matrix4d& m) {
  Eigen::EigenSolver<Eigen::Matrix4d> es(m, false);
  return es.eigenvalues().real().maxCoeff();
}

Eigen::Matrix4d solve_lyapunov(const Eigen::Matrix4d& f, const Eigen::Matrix4d& w) {
  if (!f.allFinite() || !w.allFinite()) throw SingularSystem("Lyapunov operands must be finite");
  if (!(spectral_abscissa(f) < 0.0)) throw SingularSystem("Lyapunov operator F is not Hurwitz");

  // Column-major vec: vec(F'X) = (I (x) F') vec X and vec(XF) = (F' (x) I) vec X.
  const Eigen::Matrix4d ft = f.transpose();
  Eigen::Matrix<double, 16, 16> m;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      m.block<4, 4>(4 * i, 4 * j) =
          (i == j ? ft : Eigen::Matrix4d::Zero()) + ft(i, j) * Eigen::Matrix4d::Identity();

  Eigen::FullPivLU<Eigen::Matrix<double, 16, 16>> lu(m);
  if (!lu.isInvertible()) throw SingularSystem("Kronecker-sum Lyapunov system is singular");
  const Eigen::Matrix<double, 16, 1> rhs = -Eigen::Map<const Eigen::Matrix<double, 16, 1>>(w.data());
  const Eigen::Matrix<double, 16, 1> sol = lu.solve(rhs);
  const Eigen::Matrix4d x = Eigen::Map<const Eigen::Matrix4d>(sol.data());
  return 0.5 * (x + x.transpose());
}

double riccati_residual(const LqrProblem& prob, const Eigen::Matrix4d& p) {
  const Eigen::Vector4d pbn = p * prob.b + prob.n;
  const Eigen::Matrix4d res =
      prob.a.transpose() * p + p * prob.a - pbn * pbn.transpose() / prob.r + prob.q;
  return res.cwiseAbs().maxCoeff();
}

LqrSolution solve_care(const LqrProblem& prob) {
  prob.validate();
  Eigen::RowVector4d k = stabilizing_seed(prob);

  for (int it = 1; it <= kMaxKleinmanIter; ++it) {
    const Eigen::Matrix4d f = prob.a - prob.b * k;
    // Closed-loop cost x'(Q + K'RK - NK - K'N')x for u = -Kx.
    const Eigen::Matrix4d nk = prob.n * k;
    const Eigen::Matrix4d w =
        prob.q + prob.r * k.transpose() * k - nk - nk.transpose();
    const Eigen::Matrix4d p = solve_lyapunov(f, w);
    const Eigen::RowVector4d k_next = gain_from(prob, p);
    const double step = (k_next - k).cwiseAbs().maxCoeff();
    k = k_next;
    if (step < kGainTol * std::max(1.0, k.cwiseAbs().maxCoeff())) {
      LqrSolution sol;
      sol.p = p;
      sol.k = k;
      sol.iterations = it;
      sol.riccati_residual = riccati_residual(prob, p);
      sol.closed_loop_abscissa = spectral_abscissa(prob.a - prob.b * k);
      if (!(sol.closed_loop_abscissa < 0.0))
        throw NoConvergence("Kleinman iteration ended with a non-stabilizing gain");
      return sol;
    }
  }
  throw NoConvergence("Kleinman iteration did not converge in 100 iterations");
}

LinearFeedbackPolicy lqr_policy(const LqrSolution& sol, const Equilibrium& eq, double u_max) {
  LinearFeedbackPolicy policy;
  policy.gain = sol.k;
  policy.equilibrium = eq.state;
  policy.u_max = u_max;
  return policy;
}

} // namespace essctl
