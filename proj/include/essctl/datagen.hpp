#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "essctl/bfs.hpp"
#include "essctl/lqr.hpp"
#include "essctl/mlp.hpp"
#include "essctl/predictor.hpp"

namespace essctl {

enum class ScenarioKind { SmallGrid, LargeDisturbance, Variation };

std::string to_string(ScenarioKind k);

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::SmallGrid;
  State base_offset; ///< deviation from the equilibrium
  double variation_factor = 1.0;
  std::string id;
};

struct Dataset {
  std::vector<LabeledSample> samples;
  std::uint64_t split_seed = 0;
  std::size_t lqr_count = 0;
  std::size_t bfs_count = 0;
};

/// Shared, read-only inputs of both labelers.
struct LabelingContext {
  CostContext cost;
  LqrSolution lqr;
  ControlGrid grid;           ///< BFS search grid and admissible box
  const LinearPredictor* predictor = nullptr;
  double horizon = 15.0;
  std::size_t decimation = 1;
  /// Linear prediction by default; TrueResponse simulates the uncontrolled nonlinear model.
  PredictionSource feature_source = PredictionSource::LinearPrediction;
  SearchOptions search;
  unsigned threads = 0;
};

/// Diagnostics for points that had to be skipped (diverging simulations).
struct GenerationLog {
  std::vector<std::string> skipped;
};

/// Feature vector for a labeler sample: the zero-input response from `deviation`, either
/// linearly predicted or simulated, per `lc.feature_source`.
std::vector<double> prediction_features(const LabelingContext& lc, const State& deviation);

/// LQR-labeled samples on the square angle grid [-range, range]^2 (degrees), speeds zero.
/// With samples_per_point = 1 only the t = 0 sample of each grid point is emitted.
std::vector<LabeledSample> gen_small_grid(const LabelingContext& lc, double range_deg, double step_deg,
                                          std::size_t samples_per_point = 1, GenerationLog* log = nullptr);

/// BFS-labeled samples at evenly spaced points of each uncontrolled post-disturbance
/// trajectory. Base offsets must exceed `min_offset_deg` in max angle deviation
/// (a non-positive threshold disables the check).
std::vector<LabeledSample> gen_large_cases(const LabelingContext& lc, const std::vector<State>& base_offsets,
                                           std::size_t samples_per_trajectory, double min_offset_deg = 15.0,
                                           GenerationLog* log = nullptr);

/// Test scenarios scaling each base deviation by each factor in {0.8, 0.9, 1.1, 1.2}.
std::vector<ScenarioSpec> make_variations(const std::vector<ScenarioSpec>& bases,
                                          const std::vector<double>& factors);

/// Concatenates labeler outputs; throws DuplicateId on repeated sample ids.
Dataset assemble_dataset(std::vector<LabeledSample> small, std::vector<LabeledSample> large,
                         std::uint64_t split_seed);

/// Grid points per axis for the square small-disturbance grid.
std::size_t grid_points_per_axis(double range_deg, double step_deg);

} // namespace essctl
