#include "essctl/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "essctl/errors.hpp"

namespace essctl {

namespace {

constexpr double kNewtonTol = 1e-10;
constexpr int kNewtonMaxIter = 50;

} // namespace

bool State::finite() const {
  return std::isfinite(delta1) && std::isfinite(domega1) && std::isfinite(delta2) &&
         std::isfinite(domega2);
}

double State::max_abs() const {
  return std::max({std::abs(delta1), std::abs(domega1), std::abs(delta2), std::abs(domega2)});
}

void MicrogridModel::validate() const {
  for (std::size_t i = 0; i < machines.size(); ++i) {
    const auto& m = machines[i];
    const std::string who = "machine " + std::to_string(i + 1);
    if (!(m.inertia_h > 0.0)) throw ConfigError(who + ": inertia H must be > 0");
    if (!(m.damping_kd >= 0.0)) throw ConfigError(who + ": damping K_D must be >= 0");
    if (!(m.emf_e > 0.0)) throw ConfigError(who + ": internal EMF E must be > 0");
    if (!std::isfinite(m.mech_power_pm)) throw ConfigError(who + ": P_m must be finite");
  }
  const auto& g = network.conductance_g;
  const auto& b = network.susceptance_b;
  if (!g.allFinite() || !b.allFinite()) throw ConfigError("network admittances must be finite");
  if (g != g.transpose() || b != b.transpose())
    throw ConfigError("network G and B must be symmetric");
  if ((g.diagonal().array() < 0.0).any()) throw ConfigError("diagonal of G must be >= 0");
  if (!(omega0 > 0.0)) throw ConfigError("omega0 must be > 0");
  if (ess_bus != 1 && ess_bus != 2) throw ConfigError("ess_bus must be 1 or 2");
}

MicrogridModel default_model() {
  MicrogridModel m;
  m.machines[0] = {6.5, 2.0, 0.6, 1.05};
  m.machines[1] = {3.0, 2.0, 0.4, 1.05};
  m.network.susceptance_b(0, 1) = m.network.susceptance_b(1, 0) = 2.0;
  m.network.susceptance_b(0, 2) = m.network.susceptance_b(2, 0) = 5.0;
  m.network.susceptance_b(1, 2) = m.network.susceptance_b(2, 1) = 5.0;
  return m;
}

std::array<double, 2> electrical_power(const MicrogridModel& model, double delta1, double delta2) {
  const auto& g = model.network.conductance_g;
  const auto& b = model.network.susceptance_b;
  const double e1 = model.machines[0].emf_e;
  const double e2 = model.machines[1].emf_e;
  const double s12 = std::sin(delta1 - delta2), c12 = std::cos(delta1 - delta2);
  const double s1 = std::sin(delta1), c1 = std::cos(delta1);
  const double s2 = std::sin(delta2), c2 = std::cos(delta2);

  // sin is odd in the angle difference, so the 2->1 term flips sign.
  const double p1 = e1 * e1 * g(0, 0) + e1 * e2 * (g(0, 1) * c12 + b(0, 1) * s12) +
                    e1 * (g(0, 2) * c1 + b(0, 2) * s1);
  const double p2 = e2 * e2 * g(1, 1) + e1 * e2 * (g(1, 0) * c12 - b(1, 0) * s12) +
                    e2 * (g(1, 2) * c2 + b(1, 2) * s2);
  return {p1, p2};
}

Eigen::Matrix2d power_jacobian(const MicrogridModel& model, double delta1, double delta2) {
  const auto& g = model.network.conductance_g;
  const auto& b = model.network.susceptance_b;
  const double e1 = model.machines[0].emf_e;
  const double e2 = model.machines[1].emf_e;
  const double s12 = std::sin(delta1 - delta2), c12 = std::cos(delta1 - delta2);
  const double s1 = std::sin(delta1), c1 = std::cos(delta1);
  const double s2 = std::sin(delta2), c2 = std::cos(delta2);

  const double t12 = e1 * e2 * (-g(0, 1) * s12 + b(0, 1) * c12); // d/d(delta1-delta2) of 1<-2 term
  const double t21 = e1 * e2 * (g(1, 0) * s12 + b(1, 0) * c12);  // d/d(delta2-delta1) of 2<-1 term
  Eigen::Matrix2d j;
  j(0, 0) = t12 + e1 * (-g(0, 2) * s1 + b(0, 2) * c1);
  j(0, 1) = -t12;
  j(1, 0) = -t21;
  j(1, 1) = t21 + e2 * (-g(1, 2) * s2 + b(1, 2) * c2);
  return j;
}

State vector_field(const MicrogridModel& model, const State& x, double u) {
  const auto pe = electrical_power(model, x.delta1, x.delta2);
  const auto& m1 = model.machines[0];
  const auto& m2 = model.machines[1];
  const double u1 = model.ess_bus == 1 ? u : 0.0;
  const double u2 = model.ess_bus == 2 ? u : 0.0;
  const double w0 = model.omega0;
  return {x.domega1,
          w0 / (2.0 * m1.inertia_h) * (m1.mech_power_pm - pe[0] + u1 - m1.damping_kd * x.domega1 / w0),
          x.domega2,
          w0 / (2.0 * m2.inertia_h) * (m2.mech_power_pm - pe[1] + u2 - m2.damping_kd * x.domega2 / w0)};
}

Equilibrium find_equilibrium(const MicrogridModel& model, std::array<double, 2> guess) {
  if (!std::isfinite(guess[0]) || !std::isfinite(guess[1]))
    throw ConfigError("equilibrium guess must be finite");

  Eigen::Vector2d delta(guess[0], guess[1]);
  const Eigen::Vector2d pm(model.machines[0].mech_power_pm, model.machines[1].mech_power_pm);
  for (int it = 0; it <= kNewtonMaxIter; ++it) {
    const auto pe = electrical_power(model, delta(0), delta(1));
    const Eigen::Vector2d mismatch = pm - Eigen::Vector2d(pe[0], pe[1]);
    const double residual = mismatch.cwiseAbs().maxCoeff();
    if (!std::isfinite(residual)) break;
    if (residual < kNewtonTol) {
      Equilibrium eq;
      eq.state = {delta(0), 0.0, delta(1), 0.0};
      eq.residual = residual;
      eq.iterations = it;
      return eq;
    }
    if (it == kNewtonMaxIter) break;

    // g = P_m - P_e, so dg/ddelta = -J and the Newton step is J^{-1} g.
    const Eigen::Matrix2d jac = power_jacobian(model, delta(0), delta(1));
    const double det = jac.determinant();
    const double scale = std::max(1.0, jac.cwiseAbs().maxCoeff());
    if (!(std::abs(det) > 1e-12 * scale * scale))
      throw SingularJacobian("power-flow Jacobian is singular (transfer limit reached)");
    delta += jac.inverse() * mismatch;
  }
  throw NoConvergence("Newton iteration for the equilibrium did not converge in 50 iterations");
}

Linearization linearize(const MicrogridModel& model, const Equilibrium& eq) {
  const Eigen::Matrix2d jac = power_jacobian(model, eq.state.delta1, eq.state.delta2);
  const double k1 = model.omega0 / (2.0 * model.machines[0].inertia_h);
  const double k2 = model.omega0 / (2.0 * model.machines[1].inertia_h);

  Linearization lin;
  lin.a.setZero();
  lin.a(0, 1) = 1.0;
  lin.a(2, 3) = 1.0;
  lin.a(1, 0) = -k1 * jac(0, 0);
  lin.a(1, 2) = -k1 * jac(0, 1);
  lin.a(1, 1) = -model.machines[0].damping_kd / (2.0 * model.machines[0].inertia_h);
  lin.a(3, 0) = -k2 * jac(1, 0);
  lin.a(3, 2) = -k2 * jac(1, 1);
  lin.a(3, 3) = -model.machines[1].damping_kd / (2.0 * model.machines[1].inertia_h);

  lin.b.setZero();
  if (model.ess_bus == 1)
    lin.b(1) = k1;
  else
    lin.b(3) = k2;
  return lin;
}

} // namespace essctl
