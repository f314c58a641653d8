// Command-line front end: simulate nominal data, train and calibrate skill
// models, run scenarios, and aggregate reports.

#include "revert/bench.hpp"
#include "revert/hmm.hpp"
#include "revert/introspect.hpp"
#include "revert/motion.hpp"
#include "revert/pipeline.hpp"
#include "revert/scenario.hpp"
#include "revert/shdp.hpp"
#include "revert/taskgraph.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace revert;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  double rate = kDefaultRateHz;
  std::string backend = "shdp-ar";
  double k = 5.0;
  double safety = 1.2;
  int window = 5;
  int modes = 5;
  std::string hmm_kind = "gaussian_full";
  double cov_floor = 1e-6;
  int iterations = 150;
  int chains = 1;
  std::string data_dir = REVERT_DEFAULT_DATA_DIR;
};

sim::SimConfig plant_config(const Globals& g) {
  sim::SimConfig c;
  c.rate_hz = g.rate;
  return c;
}

task::ExecutorConfig executor_config(const Globals& g) {
  task::ExecutorConfig c;
  c.motion_dir = fs::path(g.data_dir) / "motions";
  return c;
}

pipeline::TrainConfig train_config(const Globals& g) {
  pipeline::TrainConfig c;
  c.backend = pipeline::backend_from_string(g.backend);
  c.hmm_modes = g.modes;
  c.hmm_kind = hmm::emission_kind_from_string(g.hmm_kind);
  c.hmm_fit.seed = g.seed;
  c.hmm_fit.cov_floor = g.cov_floor;
  c.shdp.seed = g.seed;
  c.shdp.iterations = g.iterations;
  c.shdp.burn_in = g.iterations / 2;
  c.shdp.chains = g.chains;
  return c;
}

introspect::CalibrationConfig calibration_config(const Globals& g) {
  introspect::CalibrationConfig c;
  c.k = g.k;
  c.safety = g.safety;
  c.window = g.window;
  return c;
}

std::map<std::string, obs::TrialSet> load_training(const fs::path& dir) {
  std::map<std::string, obs::TrialSet> data;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".trials") continue;
    auto set = obs::load_trials(entry.path());
    data[set.skill_id] = std::move(set);
  }
  if (data.empty()) throw ValidationError("no .trials files in " + dir.string());
  return data;
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  return p.is_absolute() || fs::exists(p) ? p : base / p;
}

int cmd_simulate(const Globals& g, const std::string& graph_path, const std::string& scene,
                 int trials, const std::string& out) {
  const auto graph = task::load_graph(graph_path);
  const auto data =
      pipeline::collect_nominal(graph, scene, trials, g.seed, plant_config(g), executor_config(g));
  fs::create_directories(out);
  for (const auto& [skill, set] : data) {
    obs::save_trials(fs::path(out) / (skill + ".trials"), set);
    std::cout << skill << ": " << set.trials.size() << " trials\n";
  }
  return 0;
}

int cmd_train(const Globals& g, const std::string& data_dir, const std::string& out) {
  const auto data = load_training(data_dir);
  const auto cfg = train_config(g);
  fs::create_directories(out);
  for (const auto& [skill, set] : data) {
    if (cfg.backend == pipeline::Backend::shdp_ar) {
      const auto r = bnp::fit_shdp_ar_hmm(set, cfg.shdp);
      hmm::save_model(fs::path(out) / (skill + ".model"), r.model);
      std::ofstream diag(fs::path(out) / (skill + ".diag"));
      bnp::write_diagnostics(diag, r.diagnostics);
      std::cout << skill << ": " << r.model.modes() << " modes\n";
      for (const auto& w : r.diagnostics.warnings) std::cerr << "warning: " << skill << ": " << w << '\n';
    } else {
      const auto r = hmm::baum_welch_fit(set, cfg.hmm_modes, cfg.hmm_kind, cfg.hmm_fit);
      hmm::save_model(fs::path(out) / (skill + ".model"), r.model);
      std::cout << skill << ": " << r.model.modes() << " modes, "
                << r.loglik_history.size() << " EM iterations\n";
    }
  }
  return 0;
}

int cmd_calibrate(const Globals& g, const std::string& data_dir, const std::string& models) {
  const auto data = load_training(data_dir);
  for (const auto& [skill, set] : data) {
    const auto model = hmm::load_model(fs::path(models) / (skill + ".model"));
    const auto report = introspect::calibrate_loocv(set, model, calibration_config(g));
    introspect::save_thresholds(fs::path(models) / (skill + ".thr"), report.thresholds);
    std::cout << skill << ": f2_threshold " << report.thresholds.f2_threshold << " nats/s over "
              << report.folds.size() << " folds\n";
  }
  return 0;
}

int cmd_run(const Globals& g, const std::string& scenario_path, const std::string& models,
            const std::string& out, const std::string& monitor_log) {
  auto scenario = sim::load_scenario(scenario_path);
  const fs::path base = fs::path(scenario_path).parent_path();
  const auto graph = task::load_graph(resolve(scenario.graph, base));
  const auto system = pipeline::load_system(models, graph.skills(), executor_config(g), plant_config(g));
  if (g.seed != 0) scenario.seed = g.seed;

  std::ofstream log;
  if (!monitor_log.empty()) log.open(monitor_log);
  bench::ResultFile file;
  file.task = scenario.scene;
  file.condition = scenario.ranges.kind == sim::DisturbanceKind::tool_collision
                       ? "tool"
                       : sim::to_string(scenario.condition);
  file.backend = g.backend;
  file.scenario = scenario.name;
  for (int i = 0; i < scenario.trials; ++i)
    file.trials.push_back(sim::run_trial(scenario, graph, system, i, log.is_open() ? &log : nullptr));
  bench::save_results(out, file);
  const auto row = bench::summarize(file.trials, 1.0);
  std::cout << scenario.name << ": " << row.completed << "/" << row.trials
            << " tasks completed, recovery rate " << row.recovery << '\n';
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs, double window, const std::string& csv,
               const std::string& table) {
  std::vector<bench::ReportRow> rows;
  for (const auto& in : inputs) {
    const auto file = bench::load_results(in);
    auto row = bench::summarize(file.trials, window);
    row.task = file.task;
    row.condition = file.condition;
    row.backend = file.backend;
    rows.push_back(row);
  }
  if (!csv.empty()) {
    std::ofstream os(csv);
    bench::emit_csv(os, rows);
  }
  if (!table.empty()) {
    std::ofstream os(table);
    bench::emit_table(os, rows);
  }
  bench::emit_table(std::cout, rows);
  return 0;
}

int cmd_fit_dmp(const std::string& demo_path, int basis, const std::string& out) {
  obs::Trial demo;
  if (demo_path.empty()) {
    demo = pipeline::approach_demo();
  } else {
    const auto set = obs::load_trials(demo_path);
    demo = set.trials.front();
  }
  const auto p = motion::dmp_fit(motion::pose_trajectory(demo), basis);
  motion::save_dmp(out, p);
  auto roll = motion::dmp_rollout(p, demo.rate_hz);
  motion::normalize_quaternions(roll);
  const auto last = roll.positions.col(roll.size() - 1);
  std::cout << "fitted " << p.dims() << "-D primitive, " << basis << " basis functions, tau "
            << p.tau << " s; rollout endpoint error " << (last - p.g).norm() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Skill introspection and dependency-based recovery for simulated manipulation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--rate", g.rate, "Sample rate in Hz")->capture_default_str();
  app.add_option("--backend", g.backend, "Introspection backend")
      ->check(CLI::IsMember({"hmm", "shdp-ar"}))
      ->capture_default_str();
  app.add_option("--k", g.k, "Sigma multiplier of the F1 band")->capture_default_str();
  app.add_option("--safety", g.safety, "F2 threshold safety factor")->capture_default_str();
  app.add_option("--window", g.window, "F2 smoothing window in samples")->capture_default_str();
  app.add_option("--modes", g.modes, "Mode count of the baseline HMM")->capture_default_str();
  app.add_option("--hmm-kind", g.hmm_kind, "Emission kind of the baseline HMM")->capture_default_str();
  app.add_option("--cov-floor", g.cov_floor, "Covariance eigenvalue floor of the baseline HMM")
      ->capture_default_str();
  app.add_option("--iterations", g.iterations, "Gibbs iterations (half are burn-in)")
      ->capture_default_str();
  app.add_option("--chains", g.chains, "Independent Gibbs chains")->capture_default_str();
  app.add_option("--data-dir", g.data_dir, "Directory holding graphs/, motions/, scenarios/")
      ->capture_default_str();

  std::string graph, scene = "pick_place", out, data, models, scenario, monitor_log, demo;
  std::string csv, table;
  std::vector<std::string> inputs;
  int trials = 10, basis = 20;
  double match_window = 1.0;

  auto* simulate = app.add_subcommand("simulate", "Generate nominal training trials per skill");
  simulate->add_option("--graph", graph, "Task graph file")->required();
  simulate->add_option("--scene", scene, "Scene preset (pick_place, drawer)")->capture_default_str();
  simulate->add_option("--trials", trials, "Trials per skill")->capture_default_str();
  simulate->add_option("--out", out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Fit one model per skill");
  train->add_option("--data", data, "Directory of .trials files")->required();
  train->add_option("--out", out, "Model directory")->required();

  auto* calibrate = app.add_subcommand("calibrate", "LOOCV anomaly thresholds per skill");
  calibrate->add_option("--data", data, "Directory of .trials files")->required();
  calibrate->add_option("--models", models, "Model directory (thresholds written here)")->required();

  auto* run = app.add_subcommand("run", "Execute a scenario");
  run->add_option("--scenario", scenario, "Scenario file")->required();
  run->add_option("--models", models, "Model directory")->required();
  run->add_option("--out", out, "Results file")->required();
  run->add_option("--monitor-log", monitor_log, "Per-step monitor log");

  auto* report = app.add_subcommand("report", "Aggregate result files into a table");
  report->add_option("inputs", inputs, "Results files")->required();
  report->add_option("--match-window", match_window, "Detection match window in seconds")
      ->capture_default_str();
  report->add_option("--csv", csv, "CSV output");
  report->add_option("--table", table, "Aligned-text output");

  auto* fit = app.add_subcommand("fit-dmp", "Fit a pose primitive from a demonstration");
  fit->add_option("--demo", demo, "Trial file holding the demonstration (default: built-in)");
  fit->add_option("--basis", basis, "Basis functions per dimension")->capture_default_str();
  fit->add_option("--out", out, "Primitive file")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*simulate) return cmd_simulate(g, graph, scene, trials, out);
    if (*train) return cmd_train(g, data, out);
    if (*calibrate) return cmd_calibrate(g, data, models);
    if (*run) return cmd_run(g, scenario, models, out, monitor_log);
    if (*report) return cmd_report(inputs, match_window, csv, table);
    if (*fit) return cmd_fit_dmp(demo, basis, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
