#pragma once

// Small models and helpers shared by the unit tests.

#include <filesystem>
#include <string>

#include "essctl/model.hpp"

namespace fixtures {

/// Machine 1 tied only to the infinite bus through susceptance `b13`, machine 2 parked on
/// its own unit tie at zero power, no damping.
inline essctl::MicrogridModel single_tie(double pm1, double b13, double h1 = 6.5, double kd1 = 0.0) {
  essctl::MicrogridModel m;
  m.machines[0] = {h1, kd1, pm1, 1.0};
  m.machines[1] = {3.0, 0.0, 0.0, 1.0};
  m.network.susceptance_b(0, 2) = m.network.susceptance_b(2, 0) = b13;
  m.network.susceptance_b(1, 2) = m.network.susceptance_b(2, 1) = 1.0;
  return m;
}

/// Decoupled machines with dDomega1/dt = -Domega1 (H = 0.5, KD = 1, no network).
inline essctl::MicrogridModel unit_decay() {
  essctl::MicrogridModel m;
  m.machines[0] = {0.5, 1.0, 0.0, 1.0};
  m.machines[1] = {0.5, 1.0, 0.0, 1.0};
  return m;
}

inline std::filesystem::path tmp_dir(const std::string& name) {
  const auto dir = std::filesystem::path(ESSCTL_TEST_TMP) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

} // namespace fixtures
