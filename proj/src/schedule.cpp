#include "essctl/schedule.hpp"

#include <algorithm>
#include <cmath>

#include "essctl/errors.hpp"

namespace essctl {

namespace {

/// Round `ratio` to an integer if it is one up to floating-point noise.
bool integral_ratio(double ratio, std::size_t& out) {
  const double r = std::round(ratio);
  if (!(r >= 1.0) || std::abs(ratio - r) > 1e-9 * std::max(1.0, r)) return false;
  out = static_cast<std::size_t>(r);
  return true;
}

} // namespace

ControlGrid ControlGrid::symmetric(double u_max, std::size_t num_intervals, double tf) {
  ControlGrid g;
  g.u_max = u_max;
  g.levels = {-u_max, -u_max / 2.0, 0.0, u_max / 2.0, u_max};
  g.num_intervals = num_intervals;
  g.tf = tf;
  return g;
}

std::size_t ControlGrid::steps_per_interval(double dt) const {
  std::size_t steps = 0;
  if (num_intervals == 0 || !integral_ratio(interval_length() / dt, steps))
    throw ConfigError("interval length tf/m must be an integer multiple of dt");
  return steps;
}

void ControlGrid::validate(double dt) const {
  if (!(u_max > 0.0) || !std::isfinite(u_max)) throw ConfigError("u_max must be positive");
  if (levels.empty()) throw ConfigError("control levels must be nonempty");
  if (!std::is_sorted(levels.begin(), levels.end()) ||
      std::adjacent_find(levels.begin(), levels.end()) != levels.end())
    throw ConfigError("control levels must be strictly increasing");
  if (levels.front() < -u_max || levels.back() > u_max)
    throw ConfigError("control levels must lie within [-u_max, u_max]");
  if (std::find(levels.begin(), levels.end(), 0.0) == levels.end())
    throw ConfigError("control levels must contain 0");
  if (num_intervals < 1) throw ConfigError("number of intervals must be >= 1");
  if (!(tf > 0.0)) throw ConfigError("tf must be positive");
  steps_per_interval(dt);
}

ControlSchedule ControlSchedule::zeros(const ControlGrid& grid) {
  return {grid, std::vector<double>(grid.num_intervals, 0.0)};
}

double ControlSchedule::value_at_step(std::size_t step, std::size_t steps_per_interval) const {
  return values[std::min(step / steps_per_interval, values.size() - 1)];
}

void ControlSchedule::validate() const {
  if (values.size() != grid.num_intervals)
    throw ConfigError("schedule length must equal the number of intervals");
  for (double v : values)
    if (!(std::abs(v) <= grid.u_max)) throw ConfigError("schedule value outside the control box");
}

std::size_t nearest_level(const ControlGrid& grid, double value) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.levels.size(); ++i)
    if (std::abs(grid.levels[i] - value) < std::abs(grid.levels[best] - value)) best = i;
  return best;
}

ControlSchedule upsample(const ControlSchedule& coarse, const ControlGrid& fine_grid) {
  ControlSchedule out = ControlSchedule::zeros(fine_grid);
  const double coarse_len = coarse.grid.interval_length();
  const double fine_len = fine_grid.interval_length();
  for (std::size_t i = 0; i < fine_grid.num_intervals; ++i) {
    const double mid = (static_cast<double>(i) + 0.5) * fine_len;
    const auto j = std::min(static_cast<std::size_t>(mid / coarse_len), coarse.values.size() - 1);
    out.values[i] = fine_grid.levels[nearest_level(fine_grid, coarse.values[j])];
  }
  return out;
}

} // namespace essctl
