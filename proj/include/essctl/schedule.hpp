#pragma once

#include <cstddef>
#include <vector>

namespace essctl {

/// Admissible control set for piecewise-constant ESS schedules.
struct ControlGrid {
  double u_max = 0.2;
  std::vector<double> levels{-0.2, -0.1, 0.0, 0.1, 0.2};
  std::size_t num_intervals = 15;
  double tf = 15.0;

  /// Five evenly spaced levels {-u_max, -u_max/2, 0, u_max/2, u_max}.
  static ControlGrid symmetric(double u_max, std::size_t num_intervals, double tf = 15.0);

  double interval_length() const { return tf / static_cast<double>(num_intervals); }

  /// Number of simulation steps per interval; throws ConfigError unless
  /// the interval length is an integer multiple of dt.
  std::size_t steps_per_interval(double dt) const;

  /// Throws ConfigError when an invariant fails.
  void validate(double dt) const;
};

struct ControlSchedule {
  ControlGrid grid;
  std::vector<double> values;

  static ControlSchedule zeros(const ControlGrid& grid);

  /// Value held during the simulation step starting at sample `step`.
  double value_at_step(std::size_t step, std::size_t steps_per_interval) const;
  void validate() const;
};

/// Resample `coarse` onto `fine_grid` by evaluating it at each fine interval's midpoint
/// and snapping to the nearest level of `fine_grid`.
ControlSchedule upsample(const ControlSchedule& coarse, const ControlGrid& fine_grid);

/// Index of the level nearest to `value` (ties go to the lower index).
std::size_t nearest_level(const ControlGrid& grid, double value);

} // namespace essctl
