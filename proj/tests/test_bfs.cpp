#include <catch_amalgamated.hpp>

#include <limits>
#include <random>

#include "essctl/bfs.hpp"
#include "essctl/errors.hpp"
#include "essctl/lqr.hpp"

using namespace essctl;
using Catch::Approx;

namespace {

struct Setup {
  MicrogridModel model = default_model();
  Equilibrium eq = find_equilibrium(model);
  CostWeights weights;
  CostContext ctx{model, weights, eq, kDefaultDt};
};

ControlGrid three_level(std::size_t m, double tf) { return {0.2, {-0.2, 0.0, 0.2}, m, tf}; }

double direct_cost(const Setup& s, const State& x0, const ControlSchedule& sched) {
  const Trajectory t = simulate(s.model, x0, SchedulePolicy{sched}, sched.grid.tf, s.ctx.dt);
  return trajectory_cost(s.weights, t, s.eq);
}

} // namespace

TEST_CASE("schedule cost") {
  const Setup s;
  const ControlGrid g = three_level(3, 3.0);
  // Zero up to the drift driven by the equilibrium residual.
  CHECK(schedule_cost(s.ctx, s.eq.state, ControlSchedule::zeros(g)) < 1e-20);
  CHECK(schedule_cost(s.ctx, s.eq.state, ControlSchedule{g, {0.0, 0.2, 0.0}}) > 0.0);
  const State x0 = s.eq.state + State{0.3, 0.1, -0.2, 0.0};
  const ControlSchedule sched{g, {0.2, -0.2, 0.0}};
  CHECK(schedule_cost(s.ctx, x0, sched) == direct_cost(s, x0, sched));

  Setup weak;
  weak.ctx.model.machines[0].inertia_h = 1e-3;
  const ControlGrid huge{1e4, {-1e4, 0.0, 1e4}, 1, 15.0};
  CHECK(schedule_cost(weak.ctx, weak.eq.state, ControlSchedule{huge, {1e4}}) ==
        std::numeric_limits<double>::infinity());
}

TEST_CASE("exhaustive search") {
  const Setup s;
  SECTION("equilibrium start picks all zeros") {
    const ControlGrid g = ControlGrid::symmetric(0.2, 3, 3.0);
    const SearchResult r = exhaustive_search(s.ctx, s.eq.state, g);
    CHECK(r.cost < 1e-20);
    CHECK(r.schedule.values == std::vector<double>{0.0, 0.0, 0.0});
    CHECK(r.evaluations == 125);
    CHECK(r.method == SearchMethod::Exhaustive);
  }
  SECTION("matches a nested-loop enumeration") {
    const ControlGrid g = three_level(2, 4.0);
    const State x0 = s.eq.state + State{deg_to_rad(25), 0.0, deg_to_rad(-10), 0.0};
    double best = std::numeric_limits<double>::infinity();
    std::vector<double> best_values;
    for (double a : g.levels)
      for (double b : g.levels) {
        const double c = direct_cost(s, x0, ControlSchedule{g, {a, b}});
        if (c < best) {
          best = c;
          best_values = {a, b};
        }
      }
    const SearchResult r = exhaustive_search(s.ctx, x0, g);
    CHECK(r.cost == best);
    CHECK(r.schedule.values == best_values);
    CHECK(r.evaluations == 9);
    CHECK(schedule_cost(s.ctx, x0, r.schedule) == r.cost);
  }
  SECTION("beats the grid-projected LQR schedule") {
    const ControlGrid g = ControlGrid::symmetric(0.2, 5, 5.0);
    const State x0 = s.eq.state + State{deg_to_rad(20), 0.0, deg_to_rad(5), 0.0};
    const LqrSolution lqr = solve_care(weights_to_lqr(s.weights, linearize(s.model, s.eq)));
    const Trajectory t = simulate(s.model, x0, lqr_policy(lqr, s.eq, g.u_max), g.tf);
    ControlSchedule projected = ControlSchedule::zeros(g);
    const std::size_t spi = g.steps_per_interval(s.ctx.dt);
    for (std::size_t i = 0; i < g.num_intervals; ++i)
      projected.values[i] = g.levels[nearest_level(g, t.controls[i * spi])];
    const SearchResult r = exhaustive_search(s.ctx, x0, g);
    CHECK(r.cost <= schedule_cost(s.ctx, x0, projected));
  }
  SECTION("parallel and serial agree") {
    const ControlGrid g = ControlGrid::symmetric(0.2, 4, 4.0);
    const State x0 = s.eq.state + State{deg_to_rad(30), 0.0, deg_to_rad(10), 0.0};
    SearchOptions serial, parallel;
    serial.threads = 1;
    parallel.threads = 4;
    const SearchResult a = exhaustive_search(s.ctx, x0, g, serial);
    const SearchResult b = exhaustive_search(s.ctx, x0, g, parallel);
    CHECK(a.cost == b.cost);
    CHECK(a.schedule.values == b.schedule.values);
  }
  SECTION("budget") {
    SearchOptions o;
    o.budget = 100;
    CHECK(candidate_count(ControlGrid::symmetric(0.2, 3, 3.0)) == 125);
    CHECK_THROWS_AS(exhaustive_search(s.ctx, s.eq.state, ControlGrid::symmetric(0.2, 3, 3.0), o), BudgetExceeded);
    CHECK(candidate_count(ControlGrid::symmetric(0.2, 1500, 15.0)) == std::numeric_limits<std::size_t>::max());
  }
}

TEST_CASE("coordinate descent") {
  const Setup s;
  SECTION("equilibrium start") {
    const ControlGrid g = ControlGrid::symmetric(0.2, 15, 15.0);
    const SearchResult r = coordinate_descent(s.ctx, s.eq.state, g, ControlSchedule::zeros(g));
    CHECK(r.cost < 1e-20);
    CHECK(r.sweep_costs.size() == 1);
    CHECK(r.schedule.values == std::vector<double>(15, 0.0));
  }
  SECTION("never better than exhaustive, never worse than its seed") {
    const ControlGrid g = ControlGrid::symmetric(0.2, 4, 4.0);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ang(-0.6, 0.6);
    for (int trial = 0; trial < 5; ++trial) {
      const State x0 = s.eq.state + State{ang(rng), 0.0, ang(rng), 0.0};
      const SearchResult ex = exhaustive_search(s.ctx, x0, g);
      ControlSchedule seed{g, {0.2, -0.2, 0.1, 0.0}};
      const SearchResult cd = coordinate_descent(s.ctx, x0, g, seed);
      CHECK(cd.cost >= ex.cost);
      CHECK(cd.cost <= schedule_cost(s.ctx, x0, seed));
      CHECK(schedule_cost(s.ctx, x0, cd.schedule) == cd.cost);
      for (std::size_t i = 1; i < cd.sweep_costs.size(); ++i) CHECK(cd.sweep_costs[i] <= cd.sweep_costs[i - 1]);
      CHECK(cd.method == SearchMethod::CoordinateDescent);
    }
  }
  SECTION("single interval is solved exactly") {
    const ControlGrid g = ControlGrid::symmetric(0.2, 1, 3.0);
    const State x0 = s.eq.state + State{0.3, 0.0, 0.1, 0.0};
    const SearchResult ex = exhaustive_search(s.ctx, x0, g);
    const SearchResult cd = coordinate_descent(s.ctx, x0, g, ControlSchedule::zeros(g));
    CHECK(cd.cost == ex.cost);
    CHECK(cd.schedule.values == ex.schedule.values);
  }
  SECTION("seed must match the grid") {
    const ControlGrid g = ControlGrid::symmetric(0.2, 4, 4.0);
    CHECK_THROWS_AS(coordinate_descent(s.ctx, s.eq.state, g, ControlSchedule::zeros(ControlGrid::symmetric(0.2, 2, 4.0))),
                    ConfigError);
  }
}

TEST_CASE("optimal schedule dispatch and the large disturbance") {
  const Setup s;
  const State x0 = s.eq.state + State{deg_to_rad(40), 0.0, deg_to_rad(10), 0.0};
  const ControlGrid g = ControlGrid::symmetric(0.2, 15, 15.0);
  const SearchResult r = optimal_schedule(s.ctx, x0, g);
  CHECK(r.method == SearchMethod::CoordinateDescent);
  CHECK(r.cost < schedule_cost(s.ctx, x0, ControlSchedule::zeros(g)));
  const SearchResult small = optimal_schedule(s.ctx, x0, ControlGrid::symmetric(0.2, 3, 15.0));
  CHECK(small.method == SearchMethod::Exhaustive);
}

TEST_CASE("interval refinement") {
  const Setup s;
  const State x0 = s.eq.state + State{deg_to_rad(40), 0.0, deg_to_rad(10), 0.0};
  SECTION("zero-only grid over one interval reproduces the uncontrolled cost") {
    const ControlGrid g{0.2, {0.0}, 1, 15.0};
    const auto pts = interval_refinement_study(s.ctx, x0, g, {15.0});
    REQUIRE(pts.size() == 1);
    CHECK(pts[0].cost == trajectory_cost(s.weights, simulate(s.model, x0, ZeroPolicy{}, 15.0), s.eq));
  }
  SECTION("nested refinement is non-increasing") {
    const ControlGrid base = ControlGrid::symmetric(0.2, 15, 15.0);
    const auto pts = interval_refinement_study(s.ctx, x0, base, {5.0, 2.5, 1.25});
    REQUIRE(pts.size() == 3);
    CHECK(pts[0].result.method == SearchMethod::Exhaustive);
    for (std::size_t i = 1; i < pts.size(); ++i) CHECK(pts[i].cost <= pts[i - 1].cost);
    for (const auto& p : pts) CHECK(schedule_cost(s.ctx, x0, p.result.schedule) == p.cost);
  }
  SECTION("lengths must tile the horizon") {
    const ControlGrid base = ControlGrid::symmetric(0.2, 15, 15.0);
    CHECK_THROWS_AS(interval_refinement_study(s.ctx, x0, base, {0.35}), ConfigError);
    CHECK_THROWS_AS(grid_with_interval(base, 4.0, 0.01), ConfigError);
    CHECK(grid_with_interval(base, 0.5, 0.01).num_intervals == 30);
  }
}

TEST_CASE("grid and schedule helpers") {
  const ControlGrid g = ControlGrid::symmetric(0.2, 15, 15.0);
  CHECK(g.levels == std::vector<double>{-0.2, -0.1, 0.0, 0.1, 0.2});
  CHECK(g.steps_per_interval(0.01) == 100);
  CHECK(nearest_level(g, 0.04) == 2);
  CHECK(nearest_level(g, 0.05) == 2);
  CHECK(nearest_level(g, 0.06) == 3);
  CHECK(nearest_level(g, 5.0) == 4);

  const ControlSchedule coarse{ControlGrid::symmetric(0.2, 3, 15.0), {0.2, -0.1, 0.0}};
  const ControlSchedule fine = upsample(coarse, ControlGrid::symmetric(0.2, 6, 15.0));
  CHECK(fine.values == std::vector<double>{0.2, 0.2, -0.1, -0.1, 0.0, 0.0});

  CHECK_THROWS_AS((ControlGrid{0.2, {-0.2, 0.2}, 3, 3.0}.validate(0.01)), ConfigError);
  CHECK_THROWS_AS((ControlGrid{0.2, {0.0, -0.1}, 3, 3.0}.validate(0.01)), ConfigError);
  CHECK_THROWS_AS((ControlGrid{0.2, {0.0, 0.3}, 3, 3.0}.validate(0.01)), ConfigError);
  CHECK_THROWS_AS((ControlGrid{0.2, {0.0}, 0, 3.0}.validate(0.01)), ConfigError);
  CHECK_THROWS_AS((ControlGrid{0.2, {0.0}, 7, 1.0}.validate(0.01)), ConfigError);
  CHECK_THROWS_AS((ControlSchedule{g, {0.0}}.validate()), ConfigError);
}
