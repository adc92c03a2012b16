#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "essctl/bfs.hpp"
#include "essctl/datagen.hpp"
#include "essctl/lqr.hpp"
#include "essctl/mlp.hpp"
#include "essctl/predictor.hpp"

namespace essctl {

struct DatagenConfig {
  double range_deg = 15.0;
  double step_deg = 0.5;
  std::size_t samples_per_point = 1;
  /// Large-disturbance base offsets as (delta1, delta2) angle deviations in degrees.
  std::vector<std::array<double, 2>> base_offsets_deg{{40.0, 10.0}, {10.0, 35.0}};
  std::size_t samples_per_trajectory = 1500;
  double large_threshold_deg = 15.0;
  std::vector<double> variation_factors{0.8, 0.9, 1.1, 1.2};
  std::size_t decimation = 1;
  PredictionSource feature_source = PredictionSource::LinearPrediction;
};

struct RunConfig {
  MicrogridModel model = default_model();
  std::array<double, 2> equilibrium_guess{0.0, 0.0};
  CostWeights weights;
  ControlGrid grid = ControlGrid::symmetric(0.2, 15, 15.0);
  double dt = kDefaultDt;
  double window = 0.1;        ///< measurement window length, s, in [0.1, 1.0]
  double update_period = 0.1; ///< online decision period, s
  std::uint64_t seed = 42;
  unsigned threads = 0;
  SearchOptions search;
  DatagenConfig datagen;
  TrainConfig train;
  /// Standard small-disturbance scenarios as (delta1, delta2) deviations in degrees.
  std::vector<std::array<double, 2>> small_scenarios_deg{{2.0, -1.0}};

  double horizon() const { return grid.tf; }
  void validate() const;
};

/// Derived, read-only quantities shared by every stage.
struct Artifacts {
  Equilibrium eq;
  Linearization lin;
  LqrSolution lqr;
  std::shared_ptr<const LinearPredictor> predictor;

  CostContext cost_context(const RunConfig& config) const;
  LabelingContext labeling_context(const RunConfig& config) const;
};

/// Equilibrium, linearization, LQR gain and predictor cache for `config`.
Artifacts build_artifacts(const RunConfig& config);

/// Deviation state from angle offsets in degrees (speeds zero).
State angle_offset(const std::array<double, 2>& deg);

/// Standard scenarios: configured small ones, the large base offsets, their variations.
std::vector<ScenarioSpec> standard_scenarios(const RunConfig& config);
std::vector<ScenarioSpec> large_base_scenarios(const RunConfig& config);

/// Generates the full hybrid training set for `config`.
struct DatagenOutput {
  Dataset dataset;
  GenerationLog log;
};
DatagenOutput run_datagen(const RunConfig& config, const Artifacts& art);

enum class NnInput { Predicted, TrueResponse };

struct ControlLoopResult {
  Trajectory trajectory;
  std::vector<double> decision_latency_s;
  std::size_t fallbacks = 0; ///< decisions that used the last-sample deviation
};

/// Closed loop with the network re-evaluated every update period. With
/// NnInput::Predicted the input is the linear prediction from the trailing measurement
/// window, fitted with the controls the loop applied over it; with NnInput::TrueResponse it is the simulated uncontrolled nonlinear response.
ControlLoopResult run_control_loop(const RunConfig& config, const Artifacts& art, const MlpModel& mlp,
                                   const State& x0, NnInput input = NnInput::Predicted);

struct ReportRow {
  std::string scenario;
  ScenarioKind kind = ScenarioKind::SmallGrid;
  std::string controller; ///< None | LQR | BFS | ML-offline | ML-online
  State x0;
  double cost = 0.0;
  double wall_time_s = 0.0;
  std::vector<double> controls; ///< applied control per sample, for re-verification
};

struct ComparisonReport {
  std::vector<ReportRow> rows;
  std::string config_hash;
  std::string model_hash;
  std::uint64_t seed = 0;
  Eigen::RowVector4d lqr_gain = Eigen::RowVector4d::Zero();

  const ReportRow* find(const std::string& scenario, const std::string& controller) const;
};

ComparisonReport run_compare(const RunConfig& config, const Artifacts& art, const MlpModel& mlp,
                             const std::vector<ScenarioSpec>& scenarios);

/// Largest |cost - re-simulated cost| over all rows.
double max_reverification_error(const RunConfig& config, const Artifacts& art,
                                const ComparisonReport& report);

} // namespace essctl
