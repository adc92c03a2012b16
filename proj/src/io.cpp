#include "essctl/io.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "essctl/errors.hpp"

namespace essctl {

namespace {

template <class T>
void read_opt(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

Json matrix3_to_json(const Eigen::Matrix3d& m) {
  Json rows = Json::array();
  for (int i = 0; i < 3; ++i) rows.push_back({m(i, 0), m(i, 1), m(i, 2)});
  return rows;
}

Eigen::Matrix3d matrix3_from_json(const Json& j, const char* what) {
  Eigen::Matrix3d m;
  try {
    if (!j.is_array() || j.size() != 3) throw ConfigError("");
    for (int i = 0; i < 3; ++i) {
      if (!j[i].is_array() || j[i].size() != 3) throw ConfigError("");
      for (int k = 0; k < 3; ++k) m(i, k) = j[i][k].get<double>();
    }
  } catch (const std::exception&) {
    throw ConfigError(std::string(what) + " must be a 3x3 array of numbers");
  }
  return m;
}

Json state_to_json(const State& s) { return {s.delta1, s.domega1, s.delta2, s.domega2}; }

State state_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 4) throw ParseError("state must be an array of 4 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

std::vector<double> vec_to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd std_to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

} // namespace

std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << text;
  if (!os) throw IoError("failed writing " + path);
}

// ---------------------------------------------------------------------------
// Run configuration

Json config_to_json(const RunConfig& c) {
  Json machines = Json::array();
  for (const auto& m : c.model.machines)
    machines.push_back({{"H", m.inertia_h}, {"KD", m.damping_kd}, {"Pm", m.mech_power_pm}, {"E", m.emf_e}});
  Json base_offsets = Json::array();
  for (const auto& b : c.datagen.base_offsets_deg) base_offsets.push_back({b[0], b[1]});
  Json small = Json::array();
  for (const auto& s : c.small_scenarios_deg) small.push_back({s[0], s[1]});

  return {
      {"model",
       {{"machines", machines},
        {"G", matrix3_to_json(c.model.network.conductance_g)},
        {"B", matrix3_to_json(c.model.network.susceptance_b)},
        {"omega0", c.model.omega0},
        {"ess_bus", c.model.ess_bus},
        {"equilibrium_guess", {c.equilibrium_guess[0], c.equilibrium_guess[1]}}}},
      {"weights", {{"w1", c.weights.w1}, {"w2", c.weights.w2}, {"w3", c.weights.w3}, {"terminal", c.weights.terminal_weight}}},
      {"grid", {{"u_max", c.grid.u_max}, {"levels", c.grid.levels}, {"intervals", c.grid.num_intervals}, {"tf", c.grid.tf}}},
      {"dt", c.dt},
      {"window", c.window},
      {"update_period", c.update_period},
      {"seed", c.seed},
      {"search", {{"budget", c.search.budget}, {"max_sweeps", c.search.max_sweeps}}},
      {"datagen",
       {{"range_deg", c.datagen.range_deg},
        {"step_deg", c.datagen.step_deg},
        {"samples_per_point", c.datagen.samples_per_point},
        {"base_offsets_deg", base_offsets},
        {"samples_per_trajectory", c.datagen.samples_per_trajectory},
        {"large_threshold_deg", c.datagen.large_threshold_deg},
        {"variation_factors", c.datagen.variation_factors},
        {"decimation", c.datagen.decimation},
        {"feature_source", c.datagen.feature_source == PredictionSource::TrueResponse ? "true" : "linear"}}},
      {"train",
       {{"learning_rate", c.train.learning_rate},
        {"batch_size", c.train.batch_size},
        {"max_epochs", c.train.max_epochs},
        {"adam_beta1", c.train.adam_beta1},
        {"adam_beta2", c.train.adam_beta2},
        {"adam_eps", c.train.adam_eps},
        {"seed", c.train.seed},
        {"validation_fraction", c.train.validation_fraction},
        {"patience", c.train.patience}}},
      {"scenarios", {{"small_deg", small}}},
  };
}

RunConfig config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  RunConfig c;
  if (j.contains("model")) {
    const Json& m = j.at("model");
    if (m.contains("machines")) {
      const Json& ms = m.at("machines");
      if (!ms.is_array() || ms.size() != 2) throw ConfigError("model.machines must list exactly 2 machines");
      for (std::size_t i = 0; i < 2; ++i) {
        read_opt(ms[i], "H", c.model.machines[i].inertia_h);
        read_opt(ms[i], "KD", c.model.machines[i].damping_kd);
        read_opt(ms[i], "Pm", c.model.machines[i].mech_power_pm);
        read_opt(ms[i], "E", c.model.machines[i].emf_e);
      }
    }
    if (m.contains("G")) c.model.network.conductance_g = matrix3_from_json(m.at("G"), "model.G");
    if (m.contains("B")) c.model.network.susceptance_b = matrix3_from_json(m.at("B"), "model.B");
    read_opt(m, "omega0", c.model.omega0);
    read_opt(m, "ess_bus", c.model.ess_bus);
    read_opt(m, "equilibrium_guess", c.equilibrium_guess);
  }
  if (j.contains("weights")) {
    const Json& w = j.at("weights");
    read_opt(w, "w1", c.weights.w1);
    read_opt(w, "w2", c.weights.w2);
    read_opt(w, "w3", c.weights.w3);
    read_opt(w, "terminal", c.weights.terminal_weight);
  }
  if (j.contains("grid")) {
    const Json& g = j.at("grid");
    read_opt(g, "u_max", c.grid.u_max);
    read_opt(g, "intervals", c.grid.num_intervals);
    read_opt(g, "tf", c.grid.tf);
    if (g.contains("levels"))
      read_opt(g, "levels", c.grid.levels);
    else
      c.grid.levels = ControlGrid::symmetric(c.grid.u_max, c.grid.num_intervals).levels;
  }
  read_opt(j, "dt", c.dt);
  read_opt(j, "window", c.window);
  read_opt(j, "update_period", c.update_period);
  read_opt(j, "seed", c.seed);
  c.train.seed = c.seed;
  read_opt(j, "threads", c.threads);
  if (j.contains("search")) {
    read_opt(j.at("search"), "budget", c.search.budget);
    read_opt(j.at("search"), "max_sweeps", c.search.max_sweeps);
  }
  if (j.contains("datagen")) {
    const Json& d = j.at("datagen");
    read_opt(d, "range_deg", c.datagen.range_deg);
    read_opt(d, "step_deg", c.datagen.step_deg);
    read_opt(d, "samples_per_point", c.datagen.samples_per_point);
    read_opt(d, "base_offsets_deg", c.datagen.base_offsets_deg);
    read_opt(d, "samples_per_trajectory", c.datagen.samples_per_trajectory);
    read_opt(d, "large_threshold_deg", c.datagen.large_threshold_deg);
    read_opt(d, "variation_factors", c.datagen.variation_factors);
    read_opt(d, "decimation", c.datagen.decimation);
    if (d.contains("feature_source")) {
      std::string source;
      read_opt(d, "feature_source", source);
      if (source == "linear")
        c.datagen.feature_source = PredictionSource::LinearPrediction;
      else if (source == "true")
        c.datagen.feature_source = PredictionSource::TrueResponse;
      else
        throw ConfigError("datagen.feature_source must be \"linear\" or \"true\"");
    }
  }
  if (j.contains("train")) {
    const Json& t = j.at("train");
    read_opt(t, "learning_rate", c.train.learning_rate);
    read_opt(t, "batch_size", c.train.batch_size);
    read_opt(t, "max_epochs", c.train.max_epochs);
    read_opt(t, "adam_beta1", c.train.adam_beta1);
    read_opt(t, "adam_beta2", c.train.adam_beta2);
    read_opt(t, "adam_eps", c.train.adam_eps);
    read_opt(t, "seed", c.train.seed);
    read_opt(t, "validation_fraction", c.train.validation_fraction);
    read_opt(t, "patience", c.train.patience);
  }
  if (j.contains("scenarios")) read_opt(j.at("scenarios"), "small_deg", c.small_scenarios_deg);
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const RunConfig& config) { return fnv1a_hex(config_to_json(config).dump()); }

// ---------------------------------------------------------------------------
// Network

Json model_to_json(const MlpModel& model) {
  Json weights = Json::array();
  Json biases = Json::array();
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    const auto& w = model.weights[l];
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(w.size()));
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) flat.push_back(w(r, c));
    weights.push_back(flat);
    biases.push_back(vec_to_std(model.biases[l]));
  }
  return {{"format", "essctl-mlp"},
          {"format_version", kModelFormatVersion},
          {"layer_dims", model.layer_dims},
          {"weights", weights},
          {"biases", biases},
          {"input_mean", vec_to_std(model.input_mean)},
          {"input_std", vec_to_std(model.input_std)},
          {"u_max", model.u_max},
          {"feature_decimation", model.feature_decimation}};
}

MlpModel model_from_json(const Json& j) {
  MlpModel model;
  try {
    if (!j.is_object()) throw ParseError("model document must be a JSON object");
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion)
      throw VersionMismatch("model format_version " + std::to_string(version) + ", expected " +
                            std::to_string(kModelFormatVersion));
    model.layer_dims = j.at("layer_dims").get<std::vector<std::size_t>>();
    const auto& wj = j.at("weights");
    const auto& bj = j.at("biases");
    if (!wj.is_array() || !bj.is_array() || wj.size() + 1 != model.layer_dims.size() || bj.size() != wj.size())
      throw InvariantViolation("layer count does not match layer_dims");
    for (std::size_t l = 0; l < wj.size(); ++l) {
      const auto flat = wj[l].get<std::vector<double>>();
      const auto rows = static_cast<Eigen::Index>(model.layer_dims[l + 1]);
      const auto cols = static_cast<Eigen::Index>(model.layer_dims[l]);
      if (static_cast<Eigen::Index>(flat.size()) != rows * cols)
        throw InvariantViolation("weight array " + std::to_string(l) + " has " + std::to_string(flat.size()) +
                                 " entries, expected " + std::to_string(rows * cols));
      model.weights.push_back(
          Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(flat.data(), rows, cols));
      model.biases.push_back(std_to_vec(bj[l].get<std::vector<double>>()));
    }
    model.input_mean = std_to_vec(j.at("input_mean").get<std::vector<double>>());
    model.input_std = std_to_vec(j.at("input_std").get<std::vector<double>>());
    model.u_max = j.at("u_max").get<double>();
    model.feature_decimation = j.value("feature_decimation", std::size_t{1});
  } catch (const Json::exception& e) {
    throw ParseError(std::string("model document: ") + e.what());
  }
  model.validate();
  return model;
}

std::string dump_model(const MlpModel& model) { return model_to_json(model).dump() + "\n"; }

MlpModel parse_model(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ParseError(std::string("model document: ") + e.what());
  }
  return model_from_json(j);
}

void save_model(const std::string& path, const MlpModel& model) { write_text_file(path, dump_model(model)); }

MlpModel load_model(const std::string& path) { return parse_model(read_text_file(path)); }

// ---------------------------------------------------------------------------
// Dataset

void write_dataset_csv(std::ostream& os, const Dataset& ds) {
  const std::size_t dim = ds.samples.empty() ? 0 : ds.samples.front().features.size();
  os << "id,source,label";
  for (std::size_t i = 0; i < dim; ++i) os << ",f" << i;
  os << '\n' << std::setprecision(17);
  for (const auto& s : ds.samples) {
    if (s.features.size() != dim) throw DimensionMismatch("dataset rows have inconsistent feature lengths");
    os << s.id << ',' << to_string(s.source) << ',' << s.label;
    for (double f : s.features) os << ',' << f;
    os << '\n';
  }
}

void write_dataset_csv(const std::string& path, const Dataset& ds) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_dataset_csv(os, ds);
  if (!os) throw IoError("failed writing " + path);
}

Dataset read_dataset_csv(std::istream& is, std::uint64_t split_seed) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("id,source,label", 0) != 0)
    throw ParseError("dataset CSV must start with the header id,source,label,...");
  const auto dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',') - 2);
  std::vector<LabeledSample> small, large;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != dim + 3)
      throw ParseError("dataset line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) + " cells");
    LabeledSample s;
    s.id = cells[0];
    s.source = sample_source_from(cells[1]);
    try {
      s.label = std::stod(cells[2]);
      s.features.reserve(dim);
      for (std::size_t i = 3; i < cells.size(); ++i) s.features.push_back(std::stod(cells[i]));
    } catch (const std::exception&) {
      throw ParseError("dataset line " + std::to_string(lineno) + " has a malformed number");
    }
    (s.source == SampleSource::Lqr ? small : large).push_back(std::move(s));
  }
  if (small.empty() && large.empty()) throw ParseError("dataset CSV has no samples");
  return assemble_dataset(std::move(small), std::move(large), split_seed);
}

Dataset read_dataset_csv(const std::string& path, std::uint64_t split_seed) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  return read_dataset_csv(is, split_seed);
}

Json dataset_manifest(const RunConfig& config, const Dataset& ds, const GenerationLog& log) {
  const std::size_t per_axis = grid_points_per_axis(config.datagen.range_deg, config.datagen.step_deg);
  Json model_json = config_to_json(config)["model"];
  return {{"generator", "essctl datagen"},
          {"config", config_to_json(config)},
          {"model_hash", fnv1a_hex(model_json.dump())},
          {"seeds", {{"split_seed", ds.split_seed}, {"run_seed", config.seed}}},
          {"counts",
           {{"total", ds.samples.size()},
            {"lqr", ds.lqr_count},
            {"bfs", ds.bfs_count},
            {"small_grid_points", per_axis * per_axis},
            {"skipped", log.skipped.size()}}},
          {"feature_dim", ds.samples.empty() ? 0 : ds.samples.front().features.size()},
          {"skipped", log.skipped},
          {"reference_counts",
           {{"lqr_cases", 3731},
            {"bfs_cases", 3000},
            {"total_cases", 6722},
            {"note", "the reference case study reports 3,731 LQR cases and 6,722 in total; a "
                     "-15..15 degree grid at 0.5 degree spacing has 61 x 61 = 3,721 points, so this "
                     "generator emits 3,721 LQR cases and 3,721 + 3,000 = 6,721 in total"}}}};
}

// ---------------------------------------------------------------------------
// Reports

Json equilibrium_to_json(const Equilibrium& eq) {
  return {{"state", state_to_json(eq.state)}, {"residual", eq.residual}, {"iterations", eq.iterations}};
}

Json lqr_to_json(const LqrSolution& sol, const Equilibrium& eq) {
  Json p = Json::array();
  for (int i = 0; i < 4; ++i) p.push_back({sol.p(i, 0), sol.p(i, 1), sol.p(i, 2), sol.p(i, 3)});
  return {{"K", {sol.k(0), sol.k(1), sol.k(2), sol.k(3)}},
          {"P", p},
          {"riccati_residual", sol.riccati_residual},
          {"iterations", sol.iterations},
          {"closed_loop_abscissa", sol.closed_loop_abscissa},
          {"equilibrium", equilibrium_to_json(eq)}};
}

Json search_result_to_json(const SearchResult& r) {
  return {{"schedule", r.schedule.values},
          {"interval_length", r.schedule.grid.interval_length()},
          {"levels", r.schedule.grid.levels},
          {"cost", r.cost},
          {"evaluations", r.evaluations},
          {"method", to_string(r.method)},
          {"sweep_costs", r.sweep_costs}};
}

Json refinement_to_json(const std::vector<RefinementPoint>& points) {
  Json rows = Json::array();
  for (const auto& p : points)
    rows.push_back({{"interval_length", p.interval_length}, {"cost", p.cost}, {"search", search_result_to_json(p.result)}});
  return rows;
}

Json train_report_to_json(const TrainReport& r) {
  return {{"train_loss", r.train_loss},
          {"val_loss", r.val_loss},
          {"final_epoch", r.final_epoch},
          {"best_epoch", r.best_epoch},
          {"train_size", r.train_size},
          {"val_size", r.val_size},
          {"degenerate_features", r.degenerate_features},
          {"warnings", r.warnings},
          {"wall_time_s", r.wall_time_s}};
}

Json report_to_json(const ComparisonReport& report, bool include_wall_time) {
  Json rows = Json::array();
  for (const auto& r : report.rows) {
    Json row = {{"scenario", r.scenario},
                {"kind", to_string(r.kind)},
                {"controller", r.controller},
                {"x0", state_to_json(r.x0)},
                {"cost", r.cost},
                {"controls", r.controls}};
    if (include_wall_time) row["wall_time_s"] = r.wall_time_s;
    rows.push_back(std::move(row));
  }
  return {{"format", "essctl-report"},
          {"format_version", kReportFormatVersion},
          {"metadata",
           {{"config_hash", report.config_hash},
            {"model_hash", report.model_hash},
            {"seed", report.seed},
            {"lqr_gain", {report.lqr_gain(0), report.lqr_gain(1), report.lqr_gain(2), report.lqr_gain(3)}}}},
          {"rows", rows}};
}

ComparisonReport report_from_json(const Json& j) {
  ComparisonReport report;
  try {
    if (j.at("format_version").get<int>() != kReportFormatVersion)
      throw VersionMismatch("unsupported report format_version");
    const Json& meta = j.at("metadata");
    report.config_hash = meta.at("config_hash").get<std::string>();
    report.model_hash = meta.at("model_hash").get<std::string>();
    report.seed = meta.at("seed").get<std::uint64_t>();
    const auto k = meta.at("lqr_gain").get<std::vector<double>>();
    if (k.size() != 4) throw InvariantViolation("lqr_gain must have 4 entries");
    report.lqr_gain << k[0], k[1], k[2], k[3];
    for (const auto& rj : j.at("rows")) {
      ReportRow r;
      r.scenario = rj.at("scenario").get<std::string>();
      const auto kind = rj.at("kind").get<std::string>();
      r.kind = kind == "small" ? ScenarioKind::SmallGrid
               : kind == "large" ? ScenarioKind::LargeDisturbance
                                 : ScenarioKind::Variation;
      r.controller = rj.at("controller").get<std::string>();
      r.x0 = state_from_json(rj.at("x0"));
      r.cost = rj.at("cost").get<double>();
      r.wall_time_s = rj.value("wall_time_s", 0.0);
      r.controls = rj.at("controls").get<std::vector<double>>();
      report.rows.push_back(std::move(r));
    }
  } catch (const Json::exception& e) {
    throw ParseError(std::string("report document: ") + e.what());
  }
  return report;
}

std::string render_report_table(const ComparisonReport& report) {
  static const char* controllers[] = {"None", "LQR", "BFS", "ML-offline", "ML-online"};
  std::vector<std::string> scenarios;
  for (const auto& r : report.rows)
    if (std::find(scenarios.begin(), scenarios.end(), r.scenario) == scenarios.end()) scenarios.push_back(r.scenario);

  std::ostringstream os;
  os << std::left << std::setw(22) << "scenario";
  for (const char* c : controllers) os << std::right << std::setw(12) << c;
  os << '\n' << std::string(22 + 12 * 5, '-') << '\n';
  os << std::fixed << std::setprecision(4);
  for (const auto& s : scenarios) {
    os << std::left << std::setw(22) << s;
    for (const char* c : controllers) {
      const ReportRow* r = report.find(s, c);
      os << std::right << std::setw(12);
      if (r)
        os << r->cost;
      else
        os << "-";
    }
    os << '\n';
  }
  return os.str();
}

std::string render_refinement_table(const std::vector<RefinementPoint>& points) {
  std::ostringstream os;
  os << std::left << std::setw(12) << "interval" << std::right << std::setw(12) << "cost" << std::setw(14)
     << "evaluations" << "  method\n";
  os << std::string(52, '-') << '\n';
  for (const auto& p : points) {
    std::ostringstream len;
    len << std::fixed << std::setprecision(2) << p.interval_length << "s";
    os << std::left << std::setw(12) << len.str() << std::right << std::fixed << std::setprecision(4)
       << std::setw(12) << p.cost << std::setw(14) << p.result.evaluations << "  " << to_string(p.result.method)
       << '\n';
  }
  return os.str();
}

} // namespace essctl
