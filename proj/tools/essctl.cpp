// essctl: command-line driver for the ESS feedback-control toolkit.
//
//   essctl <command> [--config run.json] [--out DIR] [overrides...]
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O failure.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "essctl/errors.hpp"
#include "essctl/io.hpp"
#include "essctl/pipeline.hpp"

namespace fs = std::filesystem;
using namespace essctl;

namespace {

struct Common {
  std::string config_path;
  std::string out_dir = "run";
  std::optional<std::uint64_t> seed;
  std::optional<double> window;
  std::optional<double> update_period;
  std::optional<std::size_t> intervals;
  std::optional<std::string> levels;
  std::optional<double> umax;
  std::optional<unsigned> threads;
};

std::vector<double> parse_csv_doubles(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cell, &used));
      if (cell.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw ConfigError(std::string(what) + ": cannot parse '" + cell + "' as a number");
    }
  }
  if (out.empty()) throw ConfigError(std::string(what) + " is empty");
  return out;
}

std::array<double, 2> parse_pair(const std::string& text, const char* what) {
  const auto v = parse_csv_doubles(text, what);
  if (v.size() != 2) throw ConfigError(std::string(what) + " expects two comma-separated values");
  return {v[0], v[1]};
}

RunConfig resolve_config(const Common& c) {
  RunConfig config = c.config_path.empty() ? RunConfig{} : load_config(c.config_path);
  if (c.seed) {
    config.seed = *c.seed;
    config.train.seed = *c.seed;
  }
  if (c.window) config.window = *c.window;
  if (c.update_period) config.update_period = *c.update_period;
  if (c.intervals) config.grid.num_intervals = *c.intervals;
  if (c.umax) config.grid.u_max = *c.umax;
  if (c.levels) {
    config.grid.levels = parse_csv_doubles(*c.levels, "--levels");
  } else if (c.umax) {
    config.grid.levels = ControlGrid::symmetric(*c.umax, config.grid.num_intervals, config.grid.tf).levels;
  }
  if (c.threads) config.threads = *c.threads;
  config.validate();
  return config;
}

fs::path prepare_out(const Common& c) {
  fs::path dir(c.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

void write_json(const fs::path& path, const Json& j) { write_text_file(path.string(), j.dump(2) + "\n"); }

void write_run_manifest(const fs::path& dir, const std::string& command, const RunConfig& config,
                        const Json& extra = Json::object()) {
  Json m = {{"command", command},
            {"config_hash", config_hash(config)},
            {"seed", config.seed},
            {"config", config_to_json(config)}};
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  write_json(dir / ("manifest-" + command + ".json"), m);
}

int cmd_equilibrium(const Common& c) {
  const RunConfig config = resolve_config(c);
  const Equilibrium eq = find_equilibrium(config.model, config.equilibrium_guess);
  const Linearization lin = linearize(config.model, eq);
  Json j = equilibrium_to_json(eq);
  j["delta_deg"] = {rad_to_deg(eq.state.delta1), rad_to_deg(eq.state.delta2)};
  Json a = Json::array();
  for (int i = 0; i < 4; ++i) a.push_back({lin.a(i, 0), lin.a(i, 1), lin.a(i, 2), lin.a(i, 3)});
  j["A"] = a;
  j["B"] = {lin.b(0), lin.b(1), lin.b(2), lin.b(3)};
  const fs::path dir = prepare_out(c);
  write_json(dir / "equilibrium.json", j);
  write_run_manifest(dir, "equilibrium", config);
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_lqr(const Common& c) {
  const RunConfig config = resolve_config(c);
  const Artifacts art = build_artifacts(config);
  const Json j = lqr_to_json(art.lqr, art.eq);
  const fs::path dir = prepare_out(c);
  write_json(dir / "lqr.json", j);
  write_run_manifest(dir, "lqr", config);
  std::cout << j.dump(2) << "\n";
  return 0;
}

struct SimulateArgs {
  std::string x0_deg = "2,-1";
  std::string policy = "none";
  double constant = 0.0;
  std::string prediction_csv;
};

int cmd_simulate(const Common& c, const SimulateArgs& a) {
  const RunConfig config = resolve_config(c);
  const Artifacts art = build_artifacts(config);
  const State x0 = art.eq.state + angle_offset(parse_pair(a.x0_deg, "--x0-deg"));
  ControlPolicy policy;
  if (a.policy == "none")
    policy = ZeroPolicy{};
  else if (a.policy == "constant")
    policy = ConstantPolicy{a.constant};
  else if (a.policy == "lqr")
    policy = lqr_policy(art.lqr, art.eq, config.grid.u_max);
  else
    throw ConfigError("--policy must be none, constant or lqr");
  const Trajectory traj = simulate(config.model, x0, policy, config.horizon(), config.dt);
  const double cost = trajectory_cost(config.weights, traj, art.eq);

  const fs::path dir = prepare_out(c);
  write_trajectory_csv((dir / "trajectory.csv").string(), traj);
  if (!a.prediction_csv.empty()) {
    // Fit on the first measurement window and predict the zero-input rest of the horizon from its end.
    MeasurementWindow w;
    w.dt = config.dt;
    const std::size_t n = step_count(config.window, config.dt) + 1;
    w.states.assign(traj.states.begin(), traj.states.begin() + static_cast<std::ptrdiff_t>(n));
    w.controls.assign(traj.controls.begin(), traj.controls.begin() + static_cast<std::ptrdiff_t>(n - 1));
    w.t_end = config.window;
    const State dev = art.predictor->fit_window(w);
    Trajectory pred = art.predictor->predict_horizon(dev, config.horizon() - config.window).absolute();
    pred.t0 = config.window;
    write_trajectory_csv(a.prediction_csv, pred);
  }
  write_run_manifest(dir, "simulate", config, {{"policy", a.policy}, {"cost", cost}});
  std::cout << "cost " << std::setprecision(10) << cost << "  samples " << traj.size() << "  -> "
            << (dir / "trajectory.csv").string() << "\n";
  return 0;
}

struct BfsArgs {
  std::string x0_deg = "40,10";
  std::string method = "auto";
};

int cmd_bfs(const Common& c, const BfsArgs& a) {
  const RunConfig config = resolve_config(c);
  const Artifacts art = build_artifacts(config);
  const CostContext ctx = art.cost_context(config);
  const State x0 = art.eq.state + angle_offset(parse_pair(a.x0_deg, "--x0-deg"));
  SearchOptions opts = config.search;
  opts.threads = config.threads;
  SearchResult r;
  if (a.method == "auto")
    r = optimal_schedule(ctx, x0, config.grid, opts);
  else if (a.method == "exhaustive")
    r = exhaustive_search(ctx, x0, config.grid, opts);
  else if (a.method == "descent")
    r = coordinate_descent(ctx, x0, config.grid, ControlSchedule::zeros(config.grid), opts);
  else
    throw ConfigError("--method must be auto, exhaustive or descent");
  const double uncontrolled = schedule_cost(ctx, x0, ControlSchedule::zeros(config.grid));
  Json j = search_result_to_json(r);
  j["uncontrolled_cost"] = uncontrolled;
  const fs::path dir = prepare_out(c);
  write_json(dir / "bfs.json", j);
  write_run_manifest(dir, "bfs", config);
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_refine(const Common& c, const BfsArgs& a, const std::string& lengths) {
  const RunConfig config = resolve_config(c);
  const Artifacts art = build_artifacts(config);
  const State x0 = art.eq.state + angle_offset(parse_pair(a.x0_deg, "--x0-deg"));
  SearchOptions opts = config.search;
  opts.threads = config.threads;
  const auto points = interval_refinement_study(art.cost_context(config), x0, config.grid,
                                                parse_csv_doubles(lengths, "--lengths"), opts);
  const fs::path dir = prepare_out(c);
  write_json(dir / "refine.json", refinement_to_json(points));
  const std::string table = render_refinement_table(points);
  write_text_file((dir / "refine.txt").string(), table);
  write_run_manifest(dir, "refine", config);
  std::cout << table;
  return 0;
}

int cmd_datagen(const Common& c) {
  const RunConfig config = resolve_config(c);
  const Artifacts art = build_artifacts(config);
  const auto t0 = std::chrono::steady_clock::now();
  const DatagenOutput out = run_datagen(config, art);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const fs::path dir = prepare_out(c);
  write_dataset_csv((dir / "dataset.csv").string(), out.dataset);
  Json manifest = dataset_manifest(config, out.dataset, out.log);
  manifest["wall_time_s"] = secs;
  write_json(dir / "manifest.json", manifest);
  std::cout << "samples " << out.dataset.samples.size() << " (LQR " << out.dataset.lqr_count << ", BFS "
            << out.dataset.bfs_count << ", skipped " << out.log.skipped.size() << ") in " << secs
            << " s -> " << (dir / "dataset.csv").string() << "\n";
  return 0;
}

int cmd_train(const Common& c, std::string dataset_path) {
  const RunConfig config = resolve_config(c);
  const fs::path dir = prepare_out(c);
  if (dataset_path.empty()) dataset_path = (dir / "dataset.csv").string();
  const Dataset ds = read_dataset_csv(dataset_path, config.seed);
  MlpModel init = init_model(default_layer_dims(ds.samples.front().features.size()), config.train.seed);
  init.u_max = config.grid.u_max;
  init.feature_decimation = config.datagen.decimation;
  const auto expected = feature_dim(step_count(config.horizon(), config.dt) + 1, config.datagen.decimation);
  if (init.input_dim() != expected)
    throw DimensionMismatch("dataset has " + std::to_string(init.input_dim()) +
                            " features but the configured horizon and decimation give " +
                            std::to_string(expected));
  const TrainOutput out = train(init, ds.samples, config.train);
  save_model((dir / "model.json").string(), out.model);
  write_json(dir / "train_report.json", train_report_to_json(out.report));
  write_run_manifest(dir, "train", config,
                     {{"dataset", dataset_path}, {"model_hash", fnv1a_hex(dump_model(out.model))}});
  const std::size_t best = out.report.best_epoch;
  std::cout << "epochs " << out.report.final_epoch << "  best " << best << "  val_mse "
            << (best > 0 && best <= out.report.val_loss.size() ? out.report.val_loss[best - 1] : 0.0)
            << "  wall " << out.report.wall_time_s << " s -> " << (dir / "model.json").string() << "\n";
  for (const auto& w : out.report.warnings) std::cerr << "warning: " << w << "\n";
  return 0;
}

MlpModel model_for(const Common& c, std::string model_path) {
  if (model_path.empty()) model_path = (fs::path(c.out_dir) / "model.json").string();
  return load_model(model_path);
}

int cmd_control(const Common& c, const SimulateArgs& a, const std::string& model_path, bool offline) {
  const RunConfig config = resolve_config(c);
  const Artifacts art = build_artifacts(config);
  const MlpModel mlp = model_for(c, model_path);
  const State x0 = art.eq.state + angle_offset(parse_pair(a.x0_deg, "--x0-deg"));
  const ControlLoopResult r =
      run_control_loop(config, art, mlp, x0, offline ? NnInput::TrueResponse : NnInput::Predicted);
  const double cost = trajectory_cost(config.weights, r.trajectory, art.eq);
  const auto& lat = r.decision_latency_s;
  const double max_lat = lat.empty() ? 0.0 : *std::max_element(lat.begin(), lat.end());
  const double mean_lat = lat.empty() ? 0.0 : std::accumulate(lat.begin(), lat.end(), 0.0) / static_cast<double>(lat.size());

  const fs::path dir = prepare_out(c);
  write_trajectory_csv((dir / "control.csv").string(), r.trajectory);
  const Json summary = {{"cost", cost},
                        {"decisions", lat.size()},
                        {"fallbacks", r.fallbacks},
                        {"max_latency_s", max_lat},
                        {"mean_latency_s", mean_lat},
                        {"input", offline ? "true-response" : "prediction"}};
  write_json(dir / "control.json", summary);
  write_run_manifest(dir, "control", config, {{"model_hash", fnv1a_hex(dump_model(mlp))}});
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_compare(const Common& c, const std::string& model_path) {
  const RunConfig config = resolve_config(c);
  const Artifacts art = build_artifacts(config);
  const MlpModel mlp = model_for(c, model_path);
  const ComparisonReport report = run_compare(config, art, mlp, standard_scenarios(config));
  const fs::path dir = prepare_out(c);
  write_json(dir / "report.json", report_to_json(report, true));
  const std::string table = render_report_table(report);
  write_text_file((dir / "report.txt").string(), table);
  write_run_manifest(dir, "compare", config, {{"model_hash", report.model_hash}});
  std::cout << table;
  return 0;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const NumericalError*>(&e)) return 3;
  if (dynamic_cast<const IoError*>(&e)) return 4;
  return 1;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  sub->add_option("--out", c.out_dir, "Run directory for outputs")->capture_default_str();
  sub->add_option("--seed", c.seed, "Seed for splits, shuffles and initialization");
  sub->add_option("--window", c.window, "Measurement window length in seconds [0.1, 1.0]");
  sub->add_option("--update-period", c.update_period, "Online control update period in seconds");
  sub->add_option("--intervals", c.intervals, "Number of piecewise-constant control intervals");
  sub->add_option("--levels", c.levels, "Comma-separated admissible control levels (p.u.)");
  sub->add_option("--umax", c.umax, "Control bound in p.u.");
  sub->add_option("--threads", c.threads, "Worker threads (0 = all cores)");
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Energy-storage feedback control toolkit"};
  app.require_subcommand(1);
  Common common;
  SimulateArgs sim;
  BfsArgs bfs;
  std::string lengths = "3,1.5,1,0.5";
  std::string dataset_path, model_path;
  bool offline = false;

  auto* eq = app.add_subcommand("equilibrium", "Solve the operating point and print the linearization");
  auto* simulate_cmd = app.add_subcommand("simulate", "Simulate one disturbance under a fixed policy");
  auto* lqr = app.add_subcommand("lqr", "Synthesize the LQR gain");
  auto* bfs_cmd = app.add_subcommand("bfs", "Search for the optimal piecewise-constant schedule");
  auto* datagen = app.add_subcommand("datagen", "Generate the hybrid LQR/BFS training set");
  auto* train_cmd = app.add_subcommand("train", "Train the neural controller");
  auto* control = app.add_subcommand("control", "Run the closed-loop online controller");
  auto* compare = app.add_subcommand("compare", "Compare None/LQR/BFS/ML controllers on standard scenarios");
  auto* refine = app.add_subcommand("refine", "Schedule cost versus interval length");
  for (auto* sub : {eq, simulate_cmd, lqr, bfs_cmd, datagen, train_cmd, control, compare, refine})
    add_common(sub, common);

  for (auto* sub : {simulate_cmd, control})
    sub->add_option("--x0-deg", sim.x0_deg, "Initial angle deviations d1,d2 in degrees")->capture_default_str();
  simulate_cmd->add_option("--policy", sim.policy, "none | constant | lqr")->capture_default_str();
  simulate_cmd->add_option("--constant", sim.constant, "Injection for --policy constant (p.u.)");
  simulate_cmd->add_option("--prediction-csv", sim.prediction_csv,
                           "Also write the linear prediction fitted on the first window");
  for (auto* sub : {bfs_cmd, refine})
    sub->add_option("--x0-deg", bfs.x0_deg, "Initial angle deviations d1,d2 in degrees")->capture_default_str();
  bfs_cmd->add_option("--method", bfs.method, "auto | exhaustive | descent")->capture_default_str();
  refine->add_option("--lengths", lengths, "Comma-separated interval lengths in seconds")->capture_default_str();
  train_cmd->add_option("--dataset", dataset_path, "Dataset CSV (default <out>/dataset.csv)");
  for (auto* sub : {control, compare})
    sub->add_option("--model", model_path, "Model JSON (default <out>/model.json)");
  control->add_flag("--offline", offline, "Feed the true uncontrolled response instead of the prediction");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*eq) return cmd_equilibrium(common);
    if (*simulate_cmd) return cmd_simulate(common, sim);
    if (*lqr) return cmd_lqr(common);
    if (*bfs_cmd) return cmd_bfs(common, bfs);
    if (*datagen) return cmd_datagen(common);
    if (*train_cmd) return cmd_train(common, dataset_path);
    if (*control) return cmd_control(common, sim, model_path, offline);
    if (*compare) return cmd_compare(common, model_path);
    if (*refine) return cmd_refine(common, bfs, lengths);
  } catch (const std::exception& e) {
    std::cerr << "essctl: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return 0;
}
