#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "essctl/cost.hpp"
#include "essctl/model.hpp"
#include "essctl/schedule.hpp"
#include "essctl/simulator.hpp"

namespace essctl {

/// Everything a schedule evaluation needs besides the initial state and the schedule.
struct CostContext {
  MicrogridModel model;
  CostWeights weights;
  Equilibrium eq;
  double dt = kDefaultDt;
};

struct SearchOptions {
  std::size_t budget = 1'000'000; ///< max |levels|^m for exhaustive enumeration
  std::size_t max_sweeps = 20;
  unsigned threads = 0; ///< 0 = hardware concurrency
};

enum class SearchMethod { Exhaustive, CoordinateDescent };

std::string to_string(SearchMethod m);

struct SearchResult {
  ControlSchedule schedule;
  double cost = 0.0;
  std::size_t evaluations = 0;
  SearchMethod method = SearchMethod::Exhaustive;
  std::vector<double> sweep_costs; ///< coordinate descent only: cost after each sweep
};

/// Simulates the schedule from x0 and integrates its cost. A diverging simulation
/// yields +infinity.
double schedule_cost(const CostContext& ctx, const State& x0, const ControlSchedule& schedule);

/// |levels|^m, saturating at SIZE_MAX.
std::size_t candidate_count(const ControlGrid& grid);

/// Evaluates every level combination. Ties go to the lexicographically smallest level
/// index sequence. Throws BudgetExceeded above options.budget candidates.
SearchResult exhaustive_search(const CostContext& ctx, const State& x0, const ControlGrid& grid,
                               const SearchOptions& options = {});

/// Per-interval sweeps holding the other intervals fixed, from `init`.
SearchResult coordinate_descent(const CostContext& ctx, const State& x0, const ControlGrid& grid,
                                const ControlSchedule& init, const SearchOptions& options = {});

/// Exhaustive when within budget, otherwise coordinate descent from the all-zero schedule.
SearchResult optimal_schedule(const CostContext& ctx, const State& x0, const ControlGrid& grid,
                              const SearchOptions& options = {});

struct RefinementPoint {
  double interval_length = 0.0;
  double cost = 0.0;
  SearchResult result;
};

/// Repeats the search for each interval length (same levels, u_max and tf as `base`).
/// Coordinate-descent runs are seeded from every earlier solution of the study, upsampled.
std::vector<RefinementPoint> interval_refinement_study(const CostContext& ctx, const State& x0,
                                                       const ControlGrid& base,
                                                       const std::vector<double>& lengths,
                                                       const SearchOptions& options = {});

/// Grid with the same levels as `base` and intervals of `length` seconds.
ControlGrid grid_with_interval(const ControlGrid& base, double length, double dt);

} // namespace essctl
