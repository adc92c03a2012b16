#pragma once

#include <array>
#include <numbers>

#include <Eigen/Dense>

namespace essctl {

/// Machine state in the order (delta1, domega1, delta2, domega2).
/// Angles are in rad relative to the infinite bus, speed deviations in rad/s.
struct State {
  double delta1 = 0.0;
  double domega1 = 0.0;
  double delta2 = 0.0;
  double domega2 = 0.0;

  Eigen::Vector4d vec() const { return {delta1, domega1, delta2, domega2}; }
  static State from(const Eigen::Vector4d& v) { return {v(0), v(1), v(2), v(3)}; }

  bool finite() const;
  double max_abs() const;

  friend bool operator==(const State&, const State&) = default;
};

inline State operator+(const State& a, const State& b) {
  return {a.delta1 + b.delta1, a.domega1 + b.domega1, a.delta2 + b.delta2, a.domega2 + b.domega2};
}
inline State operator-(const State& a, const State& b) {
  return {a.delta1 - b.delta1, a.domega1 - b.domega1, a.delta2 - b.delta2, a.domega2 - b.domega2};
}
inline State operator*(double s, const State& a) {
  return {s * a.delta1, s * a.domega1, s * a.delta2, s * a.domega2};
}

struct MachineParams {
  double inertia_h = 1.0;     ///< s
  double damping_kd = 0.0;    ///< p.u.
  double mech_power_pm = 0.0; ///< p.u.
  double emf_e = 1.0;         ///< p.u.
};

/// Kron-reduced admittance between the two machine internal buses and the
/// infinite bus (index 2 here, "bus 3" in one-based notation).
struct ReducedNetwork {
  Eigen::Matrix3d conductance_g = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d susceptance_b = Eigen::Matrix3d::Zero();
};

struct MicrogridModel {
  std::array<MachineParams, 2> machines{};
  ReducedNetwork network{};
  double omega0 = 2.0 * std::numbers::pi * 60.0;
  int ess_bus = 1; ///< one-based machine index receiving the ESS injection

  /// Throws ConfigError when a parameter invariant is violated.
  void validate() const;
};

/// Two-machine microgrid against an infinite bus with representative classical-model values.
MicrogridModel default_model();

struct Equilibrium {
  State state;
  double residual = 0.0; ///< infinity norm of P_m - P_e at the solution
  int iterations = 0;
};

struct Linearization {
  Eigen::Matrix4d a;
  Eigen::Vector4d b;
};

/// Electrical power output of both machines; the infinite bus sits at angle 0, voltage 1.
std::array<double, 2> electrical_power(const MicrogridModel& model, double delta1, double delta2);

/// d P_e / d delta, 2x2.
Eigen::Matrix2d power_jacobian(const MicrogridModel& model, double delta1, double delta2);

/// Swing-equation right-hand side with ESS injection `u` (p.u.) on the configured machine.
State vector_field(const MicrogridModel& model, const State& x, double u);

/// Newton-Raphson on P_m - P_e(delta) = 0. Throws NoConvergence or SingularJacobian.
Equilibrium find_equilibrium(const MicrogridModel& model, std::array<double, 2> guess = {0.0, 0.0});

/// Analytic Jacobians of vector_field at (eq, u = 0).
Linearization linearize(const MicrogridModel& model, const Equilibrium& eq);

constexpr double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
constexpr double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

} // namespace essctl
