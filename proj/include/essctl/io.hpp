#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "essctl/bfs.hpp"
#include "essctl/datagen.hpp"
#include "essctl/lqr.hpp"
#include "essctl/mlp.hpp"
#include "essctl/pipeline.hpp"

namespace essctl {

using Json = nlohmann::json;

inline constexpr int kModelFormatVersion = 1;
inline constexpr int kReportFormatVersion = 1;

/// 64-bit FNV-1a digest as 16 hex digits.
std::string fnv1a_hex(std::string_view data);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view text);

// Run configuration. Missing keys keep their defaults; wrong types raise ConfigError.
Json config_to_json(const RunConfig& config);
RunConfig config_from_json(const Json& j);
RunConfig load_config(const std::string& path);
std::string config_hash(const RunConfig& config);

// Network persistence. Loading validates shapes (InvariantViolation) and the
// format version (VersionMismatch); malformed text raises ParseError.
Json model_to_json(const MlpModel& model);
MlpModel model_from_json(const Json& j);
std::string dump_model(const MlpModel& model);
MlpModel parse_model(std::string_view text);
void save_model(const std::string& path, const MlpModel& model);
MlpModel load_model(const std::string& path);

// Dataset CSV: `id,source,label,f0,f1,...`, 17 significant digits.
void write_dataset_csv(std::ostream& os, const Dataset& ds);
void write_dataset_csv(const std::string& path, const Dataset& ds);
Dataset read_dataset_csv(std::istream& is, std::uint64_t split_seed = 0);
Dataset read_dataset_csv(const std::string& path, std::uint64_t split_seed = 0);

/// Generation settings, seeds, counts and the grid-count discrepancy note.
Json dataset_manifest(const RunConfig& config, const Dataset& ds, const GenerationLog& log);

Json lqr_to_json(const LqrSolution& sol, const Equilibrium& eq);
Json equilibrium_to_json(const Equilibrium& eq);
Json search_result_to_json(const SearchResult& r);
Json refinement_to_json(const std::vector<RefinementPoint>& points);
Json train_report_to_json(const TrainReport& r);

/// With include_wall_time = false the output is reproducible byte for byte.
Json report_to_json(const ComparisonReport& report, bool include_wall_time = true);
ComparisonReport report_from_json(const Json& j);

/// Plain-text cost table, one row per scenario and one column per controller.
std::string render_report_table(const ComparisonReport& report);
std::string render_refinement_table(const std::vector<RefinementPoint>& points);

} // namespace essctl
