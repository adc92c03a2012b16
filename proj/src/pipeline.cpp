#include "essctl/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>

#include "essctl/errors.hpp"
#include "essctl/io.hpp"
#include "essctl/parallel.hpp"

namespace essctl {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::size_t window_samples(const RunConfig& config) { return step_count(config.window, config.dt) + 1; }

} // namespace

void RunConfig::validate() const {
  model.validate();
  weights.validate();
  grid.validate(dt);
  step_count(grid.tf, dt);
  if (!(window >= 0.1 - 1e-12 && window <= 1.0 + 1e-12))
    throw ConfigError("measurement window must lie in [0.1, 1.0] s");
  step_count(window, dt);
  step_count(update_period, dt);
  train.validate();
  if (datagen.decimation == 0) throw ConfigError("feature decimation must be >= 1");
  if (datagen.samples_per_trajectory == 0 || datagen.samples_per_point == 0)
    throw ConfigError("sample counts must be >= 1");
  grid_points_per_axis(datagen.range_deg, datagen.step_deg);
}

CostContext Artifacts::cost_context(const RunConfig& config) const {
  return {config.model, config.weights, eq, config.dt};
}

LabelingContext Artifacts::labeling_context(const RunConfig& config) const {
  LabelingContext lc;
  lc.cost = cost_context(config);
  lc.lqr = lqr;
  lc.grid = config.grid;
  lc.predictor = predictor.get();
  lc.horizon = config.horizon();
  lc.decimation = config.datagen.decimation;
  lc.feature_source = config.datagen.feature_source;
  lc.search = config.search;
  lc.threads = config.threads;
  return lc;
}

Artifacts build_artifacts(const RunConfig& config) {
  config.validate();
  Artifacts art;
  art.eq = find_equilibrium(config.model, config.equilibrium_guess);
  art.lin = linearize(config.model, art.eq);
  art.lqr = solve_care(weights_to_lqr(config.weights, art.lin));
  art.predictor = std::make_shared<const LinearPredictor>(art.lin.a, art.eq, config.dt, window_samples(config),
                                                    art.lin.b);
  return art;
}

State angle_offset(const std::array<double, 2>& deg) {
  return {deg_to_rad(deg[0]), 0.0, deg_to_rad(deg[1]), 0.0};
}

std::vector<ScenarioSpec> large_base_scenarios(const RunConfig& config) {
  std::vector<ScenarioSpec> out;
  for (std::size_t i = 0; i < config.datagen.base_offsets_deg.size(); ++i)
    out.push_back({ScenarioKind::LargeDisturbance, angle_offset(config.datagen.base_offsets_deg[i]), 1.0,
                   "large-" + std::to_string(i)});
  return out;
}

std::vector<ScenarioSpec> standard_scenarios(const RunConfig& config) {
  std::vector<ScenarioSpec> out;
  for (std::size_t i = 0; i < config.small_scenarios_deg.size(); ++i)
    out.push_back({ScenarioKind::SmallGrid, angle_offset(config.small_scenarios_deg[i]), 1.0,
                   "small-" + std::to_string(i)});
  const auto bases = large_base_scenarios(config);
  out.insert(out.end(), bases.begin(), bases.end());
  const auto vars = make_variations(bases, config.datagen.variation_factors);
  out.insert(out.end(), vars.begin(), vars.end());
  return out;
}

DatagenOutput run_datagen(const RunConfig& config, const Artifacts& art) {
  const LabelingContext lc = art.labeling_context(config);
  DatagenOutput out;
  auto small = gen_small_grid(lc, config.datagen.range_deg, config.datagen.step_deg,
                              config.datagen.samples_per_point, &out.log);
  std::vector<State> bases;
  for (const auto& b : config.datagen.base_offsets_deg) bases.push_back(angle_offset(b));
  auto large = gen_large_cases(lc, bases, config.datagen.samples_per_trajectory,
                               config.datagen.large_threshold_deg, &out.log);
  out.dataset = assemble_dataset(std::move(small), std::move(large), config.seed);
  return out;
}

ControlLoopResult run_control_loop(const RunConfig& config, const Artifacts& art, const MlpModel& mlp,
                                   const State& x0, NnInput input) {
  mlp.validate();
  const LinearPredictor& predictor = *art.predictor;
  const std::size_t max_window = window_samples(config);
  const double horizon = config.horizon();
  const State xs = art.eq.state;

  ControlLoopResult result;
  // Control held over each elapsed sample interval, known to the controller itself.
  std::vector<double> applied;
  double held = 0.0;
  LearnedPolicy policy;
  policy.update_period = config.update_period;
  policy.decide = [&](double, std::span<const State> history) {
    const auto t0 = std::chrono::steady_clock::now();
    applied.resize(history.size() - 1, held);
    PredictedTrajectory nn_input;
    if (input == NnInput::Predicted) {
      const std::size_t n = std::min(max_window, history.size());
      State deviation = history.back() - xs;
      if (n >= 2) {
        MeasurementWindow window;
        window.dt = config.dt;
        window.states.assign(history.end() - static_cast<std::ptrdiff_t>(n), history.end());
        window.controls.assign(applied.end() - static_cast<std::ptrdiff_t>(n - 1), applied.end());
        try {
          deviation = predictor.fit_window(window);
        } catch (const RankDeficient&) {
          ++result.fallbacks;
        }
      } else {
        ++result.fallbacks;
      }
      nn_input = predictor.predict_horizon(deviation, horizon);
    } else {
      const Trajectory truth = simulate(config.model, history.back(), ZeroPolicy{}, horizon, config.dt);
      nn_input.dt = config.dt;
      nn_input.horizon = horizon;
      nn_input.equilibrium = xs;
      nn_input.source = PredictionSource::TrueResponse;
      nn_input.deviations.reserve(truth.size());
      for (const auto& s : truth.states) nn_input.deviations.push_back(s - xs);
    }
    const double u = infer(mlp, nn_input);
    result.decision_latency_s.push_back(seconds_since(t0));
    held = u;
    return u;
  };
  result.trajectory = simulate(config.model, x0, policy, horizon, config.dt);
  return result;
}

const ReportRow* ComparisonReport::find(const std::string& scenario, const std::string& controller) const {
  for (const auto& r : rows)
    if (r.scenario == scenario && r.controller == controller) return &r;
  return nullptr;
}

ComparisonReport run_compare(const RunConfig& config, const Artifacts& art, const MlpModel& mlp,
                             const std::vector<ScenarioSpec>& scenarios) {
  const CostContext ctx = art.cost_context(config);
  const double horizon = config.horizon();
  const State xs = art.eq.state;
  const auto lqr = lqr_policy(art.lqr, art.eq, config.grid.u_max);
  const unsigned threads = resolve_threads(config.threads);
  SearchOptions search = config.search;
  if (threads > 1) search.threads = 1;

  // Offline BFS bank: schedules for the large-disturbance base scenarios.
  std::vector<const ScenarioSpec*> bank_specs;
  for (const auto& s : scenarios)
    if (s.kind == ScenarioKind::LargeDisturbance) bank_specs.push_back(&s);
  std::vector<SearchResult> bank(bank_specs.size());
  std::vector<double> bank_time(bank_specs.size(), 0.0);
  parallel_for(bank_specs.size(), threads, [&](std::size_t i) {
    const auto t0 = std::chrono::steady_clock::now();
    bank[i] = optimal_schedule(ctx, xs + bank_specs[i]->base_offset, config.grid, search);
    bank_time[i] = seconds_since(t0);
  });

  std::vector<std::vector<ReportRow>> slots(scenarios.size());
  parallel_for(scenarios.size(), threads, [&](std::size_t si) {
    const ScenarioSpec& spec = scenarios[si];
    const State x0 = xs + spec.base_offset;
    auto add = [&](const std::string& controller, const Trajectory& traj, double wall) {
      ReportRow row;
      row.scenario = spec.id;
      row.kind = spec.kind;
      row.controller = controller;
      row.x0 = x0;
      row.cost = trajectory_cost(config.weights, traj, art.eq);
      row.wall_time_s = wall;
      row.controls = traj.controls;
      slots[si].push_back(std::move(row));
    };

    auto t0 = std::chrono::steady_clock::now();
    add("None", simulate(config.model, x0, ZeroPolicy{}, horizon, config.dt), seconds_since(t0));

    t0 = std::chrono::steady_clock::now();
    add("LQR", simulate(config.model, x0, lqr, horizon, config.dt), seconds_since(t0));

    t0 = std::chrono::steady_clock::now();
    ControlSchedule schedule;
    double search_time = 0.0;
    const SearchResult* own = nullptr;
    for (std::size_t i = 0; i < bank_specs.size(); ++i)
      if (bank_specs[i] == &spec) {
        own = &bank[i];
        search_time = bank_time[i];
      }
    if (own) {
      schedule = own->schedule;
    } else if (spec.kind == ScenarioKind::Variation && !bank.empty()) {
      // Offline schedule of the closest base disturbance.
      std::size_t best = 0;
      double best_dist = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < bank_specs.size(); ++i) {
        const double d = (bank_specs[i]->base_offset - spec.base_offset).vec().norm();
        if (d < best_dist) {
          best_dist = d;
          best = i;
        }
      }
      schedule = bank[best].schedule;
    } else {
      schedule = optimal_schedule(ctx, x0, config.grid, search).schedule;
    }
    add("BFS", simulate(config.model, x0, SchedulePolicy{schedule}, horizon, config.dt),
        seconds_since(t0) + search_time);

    t0 = std::chrono::steady_clock::now();
    add("ML-offline", run_control_loop(config, art, mlp, x0, NnInput::TrueResponse).trajectory,
        seconds_since(t0));

    t0 = std::chrono::steady_clock::now();
    add("ML-online", run_control_loop(config, art, mlp, x0, NnInput::Predicted).trajectory,
        seconds_since(t0));
  });

  ComparisonReport report;
  for (auto& s : slots)
    for (auto& r : s) report.rows.push_back(std::move(r));
  report.config_hash = config_hash(config);
  report.model_hash = fnv1a_hex(dump_model(mlp));
  report.seed = config.seed;
  report.lqr_gain = art.lqr.k;
  return report;
}

double max_reverification_error(const RunConfig& config, const Artifacts& art,
                                const ComparisonReport& report) {
  double worst = 0.0;
  for (const auto& row : report.rows) {
    const Trajectory traj =
        simulate(config.model, row.x0, RecordedPolicy{row.controls}, config.horizon(), config.dt);
    worst = std::max(worst, std::abs(trajectory_cost(config.weights, traj, art.eq) - row.cost));
  }
  return worst;
}

} // namespace essctl
