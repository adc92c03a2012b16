#include "essctl/bfs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "essctl/errors.hpp"
#include "essctl/parallel.hpp"

namespace essctl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Evaluates schedule costs interval by interval so that searches can share the
/// simulated prefix between candidates. The arithmetic matches simulate() followed by
/// trajectory_cost() operation for operation, so costs are bit-identical to schedule_cost().
class IncrementalEvaluator {
public:
  struct Cursor {
    State x;
    double acc = 0.0;
    double l_prev = 0.0;
    std::size_t step = 0;
    bool diverged = false;
  };

  IncrementalEvaluator(const CostContext& ctx, const ControlGrid& grid)
      : ctx_(ctx), steps_per_interval_(grid.steps_per_interval(ctx.dt)) {}

  Cursor start(const State& x0) const {
    Cursor c;
    c.x = x0;
    c.diverged = !x0.finite() || x0.max_abs() > kDivergenceBound;
    return c;
  }

  /// Integrates one interval holding `u`.
  Cursor advance(Cursor c, double u) const {
    if (c.diverged) return c;
    for (std::size_t s = 0; s < steps_per_interval_; ++s) {
      const double l = running_cost(ctx_.weights, c.x, ctx_.eq, u);
      if (c.step > 0) c.acc += 0.5 * ctx_.dt * (c.l_prev + l);
      c.l_prev = l;
      c.x = rk4_step(ctx_.model, c.x, u, ctx_.dt);
      ++c.step;
      if (!c.x.finite() || c.x.max_abs() > kDivergenceBound) {
        c.diverged = true;
        return c;
      }
    }
    return c;
  }

  /// Closes the quadrature at the final sample, where `u_last` is still held.
  double finish(const Cursor& c, double u_last) const {
    if (c.diverged) return kInf;
    const double l = running_cost(ctx_.weights, c.x, ctx_.eq, u_last);
    return c.acc + 0.5 * ctx_.dt * (c.l_prev + l) + terminal_cost(ctx_.weights, c.x, ctx_.eq);
  }

  /// Cost of `values` given a cursor positioned at the start of interval `from`.
  double suffix_cost(Cursor c, std::size_t from, const std::vector<double>& values) const {
    for (std::size_t i = from; i < values.size(); ++i) c = advance(c, values[i]);
    return finish(c, values.back());
  }

private:
  const CostContext& ctx_;
  std::size_t steps_per_interval_;
};

struct Candidate {
  double cost = kInf;
  std::vector<std::size_t> index;
  bool valid = false;
};

/// Total order: cost first, then lexicographic level indices.
bool better(const Candidate& a, const Candidate& b) {
  if (!b.valid) return a.valid;
  if (!a.valid) return false;
  if (a.cost != b.cost) return a.cost < b.cost;
  return a.index < b.index;
}

struct Dfs {
  const IncrementalEvaluator& eval;
  const std::vector<double>& levels;
  std::size_t m;
  std::vector<std::size_t> index;
  Candidate best;
  std::size_t evaluations = 0;

  void run(const IncrementalEvaluator::Cursor& c, std::size_t depth) {
    for (std::size_t j = 0; j < levels.size(); ++j) {
      index[depth] = j;
      const auto next = eval.advance(c, levels[j]);
      if (depth + 1 == m) {
        const double cost = eval.finish(next, levels[j]);
        ++evaluations;
        if (!best.valid || cost < best.cost) {
          best.cost = cost;
          best.index = index;
          best.valid = true;
        }
      } else {
        run(next, depth + 1);
      }
    }
  }
};

void validate_inputs(const CostContext& ctx, const State& x0, const ControlGrid& grid) {
  ctx.weights.validate();
  grid.validate(ctx.dt);
  step_count(grid.tf, ctx.dt);
  if (!x0.finite()) throw ConfigError("initial state must be finite");
}

} // namespace

std::string to_string(SearchMethod m) {
  return m == SearchMethod::Exhaustive ? "exhaustive" : "coordinate_descent";
}

double schedule_cost(const CostContext& ctx, const State& x0, const ControlSchedule& schedule) {
  try {
    const Trajectory traj = simulate(ctx.model, x0, SchedulePolicy{schedule}, schedule.grid.tf, ctx.dt);
    return trajectory_cost(ctx.weights, traj, ctx.eq);
  } catch (const NonFiniteState&) {
    return kInf;
  }
}

std::size_t candidate_count(const ControlGrid& grid) {
  std::size_t count = 1;
  for (std::size_t i = 0; i < grid.num_intervals; ++i) {
    if (count > std::numeric_limits<std::size_t>::max() / grid.levels.size())
      return std::numeric_limits<std::size_t>::max();
    count *= grid.levels.size();
  }
  return count;
}

SearchResult exhaustive_search(const CostContext& ctx, const State& x0, const ControlGrid& grid,
                               const SearchOptions& options) {
  validate_inputs(ctx, x0, grid);
  const std::size_t total = candidate_count(grid);
  if (total > options.budget)
    throw BudgetExceeded("exhaustive search needs " + std::to_string(total) +
                         " simulations, budget is " + std::to_string(options.budget));

  const IncrementalEvaluator eval(ctx, grid);
  const std::size_t m = grid.num_intervals;
  const std::size_t nl = grid.levels.size();

  // Split the tree into prefix jobs deep enough to keep every worker busy.
  const unsigned threads = resolve_threads(options.threads);
  std::size_t depth = 0, jobs = 1;
  while (depth + 1 < m && jobs < 4 * static_cast<std::size_t>(threads) && threads > 1) {
    jobs *= nl;
    ++depth;
  }

  std::vector<Candidate> job_best(jobs);
  std::vector<std::size_t> job_evals(jobs, 0);
  parallel_for(jobs, threads, [&](std::size_t job) {
    Dfs dfs{eval, grid.levels, m, std::vector<std::size_t>(m, 0), {}, 0};
    auto c = eval.start(x0);
    std::size_t rem = job;
    for (std::size_t d = depth; d-- > 0;) {
      dfs.index[d] = rem % nl;
      rem /= nl;
    }
    for (std::size_t d = 0; d < depth; ++d) c = eval.advance(c, grid.levels[dfs.index[d]]);
    dfs.run(c, depth);
    job_best[job] = std::move(dfs.best);
    job_evals[job] = dfs.evaluations;
  });

  Candidate best;
  std::size_t evaluations = 0;
  for (std::size_t j = 0; j < jobs; ++j) {
    if (better(job_best[j], best)) best = job_best[j];
    evaluations += job_evals[j];
  }

  SearchResult result;
  result.schedule = ControlSchedule::zeros(grid);
  for (std::size_t i = 0; i < m; ++i) result.schedule.values[i] = grid.levels[best.index[i]];
  result.cost = best.cost;
  result.evaluations = evaluations;
  result.method = SearchMethod::Exhaustive;
  return result;
}

SearchResult coordinate_descent(const CostContext& ctx, const State& x0, const ControlGrid& grid,
                                const ControlSchedule& init, const SearchOptions& options) {
  validate_inputs(ctx, x0, grid);
  if (init.grid.num_intervals != grid.num_intervals || init.values.size() != grid.num_intervals)
    throw ConfigError("coordinate descent seed does not match the grid");
  for (double v : init.values)
    if (!(std::abs(v) <= grid.u_max)) throw ConfigError("seed value outside the control box");

  const IncrementalEvaluator eval(ctx, grid);
  const std::size_t m = grid.num_intervals;
  const auto& levels = grid.levels;

  SearchResult result;
  result.method = SearchMethod::CoordinateDescent;
  result.schedule = {grid, init.values};
  auto& values = result.schedule.values;

  double current = eval.suffix_cost(eval.start(x0), 0, values);
  result.evaluations = 1;

  for (std::size_t sweep = 0; sweep < std::max<std::size_t>(options.max_sweeps, 1); ++sweep) {
    bool changed = false;
    auto prefix = eval.start(x0);
    for (std::size_t i = 0; i < m; ++i) {
      const auto held = std::find(levels.begin(), levels.end(), values[i]);
      const std::size_t held_idx = held == levels.end() ? levels.size() : static_cast<std::size_t>(held - levels.begin());

      std::size_t best_idx = levels.size();
      double best_cost = kInf;
      std::vector<double> trial = values;
      for (std::size_t j = 0; j < levels.size(); ++j) {
        double cost = current;
        if (j != held_idx) {
          trial[i] = levels[j];
          cost = eval.suffix_cost(prefix, i, trial);
          ++result.evaluations;
        }
        if (best_idx == levels.size() || cost < best_cost) {
          best_cost = cost;
          best_idx = j;
        }
      }
      if (best_idx != held_idx && (best_cost < current || (best_cost == current && held_idx != levels.size()))) {
        values[i] = levels[best_idx];
        current = best_cost;
        changed = true;
      }
      prefix = eval.advance(prefix, values[i]);
    }
    result.sweep_costs.push_back(current);
    if (!changed) break;
  }
  result.cost = current;
  return result;
}

SearchResult optimal_schedule(const CostContext& ctx, const State& x0, const ControlGrid& grid,
                              const SearchOptions& options) {
  if (candidate_count(grid) <= options.budget) return exhaustive_search(ctx, x0, grid, options);
  return coordinate_descent(ctx, x0, grid, ControlSchedule::zeros(grid), options);
}

ControlGrid grid_with_interval(const ControlGrid& base, double length, double dt) {
  if (!(length > 0.0)) throw ConfigError("interval length must be positive");
  const double ratio = base.tf / length;
  const double r = std::round(ratio);
  if (r < 1.0 || std::abs(ratio - r) > 1e-9 * r)
    throw ConfigError("interval length must divide tf");
  ControlGrid grid = base;
  grid.num_intervals = static_cast<std::size_t>(r);
  grid.steps_per_interval(dt);
  return grid;
}

std::vector<RefinementPoint> interval_refinement_study(const CostContext& ctx, const State& x0,
                                                       const ControlGrid& base,
                                                       const std::vector<double>& lengths,
                                                       const SearchOptions& options) {
  std::vector<RefinementPoint> out;
  for (double length : lengths) {
    const ControlGrid grid = grid_with_interval(base, length, ctx.dt);
    RefinementPoint point;
    point.interval_length = length;
    if (candidate_count(grid) <= options.budget) {
      point.result = exhaustive_search(ctx, x0, grid, options);
    } else {
      std::vector<ControlSchedule> seeds;
      for (const auto& prev : out) seeds.push_back(upsample(prev.result.schedule, grid));
      if (seeds.empty()) seeds.push_back(ControlSchedule::zeros(grid));
      std::size_t spent = 0;
      std::optional<SearchResult> best;
      for (const auto& seed : seeds) {
        SearchResult r = coordinate_descent(ctx, x0, grid, seed, options);
        spent += r.evaluations;
        if (!best || r.cost < best->cost) best = std::move(r);
      }
      point.result = std::move(*best);
      point.result.evaluations = spent;
    }
    point.cost = point.result.cost;
    out.push_back(std::move(point));
  }
  return out;
}

} // namespace essctl
