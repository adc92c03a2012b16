#include "essctl/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <unordered_set>

#include "essctl/errors.hpp"
#include "essctl/parallel.hpp"

namespace essctl {

namespace {

void require_predictor(const LabelingContext& lc) {
  if (!lc.predictor) throw ConfigError("labeling context has no predictor");
}

std::string format_factor(double f) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", f);
  return buf;
}

/// Evenly spaced sample indices in [0, n).
std::size_t spaced_index(std::size_t j, std::size_t count, std::size_t n) {
  return static_cast<std::size_t>((static_cast<unsigned long long>(j) * n) / count);
}

} // namespace

std::string to_string(ScenarioKind k) {
  switch (k) {
  case ScenarioKind::SmallGrid: return "small";
  case ScenarioKind::LargeDisturbance: return "large";
  case ScenarioKind::Variation: return "variation";
  }
  return "unknown";
}

std::vector<double> prediction_features(const LabelingContext& lc, const State& deviation) {
  require_predictor(lc);
  if (lc.feature_source == PredictionSource::LinearPrediction)
    return flatten_features(lc.predictor->predict_horizon(deviation, lc.horizon).deviations, lc.decimation);
  const State xs = lc.cost.eq.state;
  const Trajectory truth = simulate(lc.cost.model, xs + deviation, ZeroPolicy{}, lc.horizon, lc.cost.dt);
  std::vector<State> deviations;
  deviations.reserve(truth.size());
  for (const auto& s : truth.states) deviations.push_back(s - xs);
  return flatten_features(deviations, lc.decimation);
}

std::size_t grid_points_per_axis(double range_deg, double step_deg) {
  if (!(range_deg >= 0.0) || !(step_deg > 0.0)) throw ConfigError("grid range must be >= 0 and step > 0");
  const double intervals = 2.0 * range_deg / step_deg;
  const double r = std::round(intervals);
  if (std::abs(intervals - r) > 1e-9 * std::max(1.0, r))
    throw ConfigError("grid step must divide the angle range evenly");
  return static_cast<std::size_t>(r) + 1;
}

std::vector<LabeledSample> gen_small_grid(const LabelingContext& lc, double range_deg, double step_deg,
                                          std::size_t samples_per_point, GenerationLog* log) {
  require_predictor(lc);
  if (samples_per_point == 0) throw ConfigError("samples_per_point must be >= 1");
  const std::size_t per_axis = grid_points_per_axis(range_deg, step_deg);
  const std::size_t points = per_axis * per_axis;
  const auto policy = lqr_policy(lc.lqr, lc.cost.eq, lc.grid.u_max);
  const std::size_t n_steps = step_count(lc.horizon, lc.cost.dt);

  std::vector<std::vector<LabeledSample>> slots(points);
  std::vector<std::optional<std::string>> failures(points);
  parallel_for(points, lc.threads, [&](std::size_t p) {
    const std::size_t i = p / per_axis, j = p % per_axis;
    const double d1 = deg_to_rad(-range_deg + static_cast<double>(i) * step_deg);
    const double d2 = deg_to_rad(-range_deg + static_cast<double>(j) * step_deg);
    const State offset{d1, 0.0, d2, 0.0};
    const std::string id = "lqr-" + std::to_string(i) + "-" + std::to_string(j);
    Trajectory traj;
    try {
      traj = simulate(lc.cost.model, lc.cost.eq.state + offset, policy, lc.horizon, lc.cost.dt);
    } catch (const NonFiniteState& e) {
      failures[p] = id + ": " + e.what();
      return;
    }
    for (std::size_t s = 0; s < samples_per_point; ++s) {
      const std::size_t k = spaced_index(s, samples_per_point, n_steps);
      LabeledSample sample;
      sample.id = samples_per_point == 1 ? id : id + "-k" + std::to_string(k);
      sample.source = SampleSource::Lqr;
      sample.label = traj.controls[k];
      sample.features = prediction_features(lc, traj.states[k] - lc.cost.eq.state);
      slots[p].push_back(std::move(sample));
    }
  });

  std::vector<LabeledSample> out;
  out.reserve(points * samples_per_point);
  for (std::size_t p = 0; p < points; ++p) {
    if (failures[p] && log) log->skipped.push_back(*failures[p]);
    for (auto& s : slots[p]) out.push_back(std::move(s));
  }
  return out;
}

std::vector<LabeledSample> gen_large_cases(const LabelingContext& lc, const std::vector<State>& base_offsets,
                                           std::size_t samples_per_trajectory, double min_offset_deg,
                                           GenerationLog* log) {
  require_predictor(lc);
  if (samples_per_trajectory == 0) throw ConfigError("samples_per_trajectory must be >= 1");
  const double threshold = deg_to_rad(min_offset_deg);
  for (const auto& b : base_offsets) {
    const double angle_dev = std::max(std::abs(b.delta1), std::abs(b.delta2));
    if (min_offset_deg > 0.0 && !(angle_dev > threshold))
      throw ConfigError("large-disturbance base offset lies inside the small-disturbance region");
  }
  const std::size_t n_steps = step_count(lc.horizon, lc.cost.dt);

  // Uncontrolled post-disturbance trajectories; diverging ones are skipped.
  std::vector<std::optional<Trajectory>> bases(base_offsets.size());
  for (std::size_t b = 0; b < base_offsets.size(); ++b) {
    try {
      bases[b] = simulate(lc.cost.model, lc.cost.eq.state + base_offsets[b], ZeroPolicy{}, lc.horizon, lc.cost.dt);
    } catch (const NonFiniteState& e) {
      if (log) log->skipped.push_back("bfs-" + std::to_string(b) + ": " + e.what());
    }
  }

  const std::size_t total = base_offsets.size() * samples_per_trajectory;
  std::vector<std::optional<LabeledSample>> slots(total);
  std::vector<std::optional<std::string>> failures(total);
  SearchOptions search = lc.search;
  search.threads = 1; // parallelism is across points
  parallel_for(total, lc.threads, [&](std::size_t p) {
    const std::size_t b = p / samples_per_trajectory, j = p % samples_per_trajectory;
    if (!bases[b]) return;
    const std::size_t k = spaced_index(j, samples_per_trajectory, n_steps);
    const State& x = bases[b]->states[k];
    const std::string id = "bfs-" + std::to_string(b) + "-" + std::to_string(j);
    const SearchResult r = optimal_schedule(lc.cost, x, lc.grid, search);
    if (!std::isfinite(r.cost)) {
      failures[p] = id + ": every candidate schedule diverged";
      return;
    }
    LabeledSample sample;
    sample.id = id;
    sample.source = SampleSource::Bfs;
    sample.label = r.schedule.values.front();
    sample.features = prediction_features(lc, x - lc.cost.eq.state);
    slots[p] = std::move(sample);
  });

  std::vector<LabeledSample> out;
  out.reserve(total);
  for (std::size_t p = 0; p < total; ++p) {
    if (failures[p] && log) log->skipped.push_back(*failures[p]);
    if (slots[p]) out.push_back(std::move(*slots[p]));
  }
  return out;
}

std::vector<ScenarioSpec> make_variations(const std::vector<ScenarioSpec>& bases,
                                          const std::vector<double>& factors) {
  static constexpr double allowed[] = {0.8, 0.9, 1.1, 1.2};
  for (double f : factors)
    if (std::find(std::begin(allowed), std::end(allowed), f) == std::end(allowed))
      throw ConfigError("variation factor " + format_factor(f) + " not in {0.8, 0.9, 1.1, 1.2}");
  std::vector<ScenarioSpec> out;
  for (const auto& base : bases) {
    for (double f : factors) {
      ScenarioSpec s;
      s.kind = ScenarioKind::Variation;
      s.base_offset = f * base.base_offset;
      s.variation_factor = f;
      s.id = base.id + "-x" + format_factor(f);
      out.push_back(std::move(s));
    }
  }
  return out;
}

Dataset assemble_dataset(std::vector<LabeledSample> small, std::vector<LabeledSample> large,
                         std::uint64_t split_seed) {
  if (small.empty() && large.empty()) throw ConfigError("cannot assemble an empty dataset");
  Dataset ds;
  ds.split_seed = split_seed;
  ds.samples.reserve(small.size() + large.size());
  std::unordered_set<std::string> seen;
  for (auto* part : {&small, &large}) {
    for (auto& s : *part) {
      if (!seen.insert(s.id).second) throw DuplicateId("duplicate sample id '" + s.id + "'");
      (s.source == SampleSource::Lqr ? ds.lqr_count : ds.bfs_count) += 1;
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

} // namespace essctl
