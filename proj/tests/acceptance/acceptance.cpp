// End-to-end acceptance checks. Prints one PASS/FAIL line per check and
// exits non-zero if any check fails. Optional arguments select checks by
// number, e.g. `revert_acceptance 3 4`.

#include "revert/bench.hpp"
#include "revert/hmm.hpp"
#include "revert/introspect.hpp"
#include "revert/motion.hpp"
#include "revert/pipeline.hpp"
#include "revert/scenario.hpp"
#include "revert/shdp.hpp"
#include "revert/taskgraph.hpp"

#include "synthetic.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace revert;
using revert::testing::brute_force_loglik;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const fs::path kData = REVERT_DATA_DIR;

// --- shared trained systems -------------------------------------------------

struct Task {
  std::string name;
  task::TaskGraph graph;
  std::map<std::string, obs::TrialSet> nominal;
  std::map<pipeline::Backend, std::map<std::string, pipeline::SkillArtifacts>> skills;
};

task::ExecutorConfig executor_config() {
  task::ExecutorConfig c;
  c.motion_dir = kData / "motions";
  return c;
}

Task& trained(const std::string& name) {
  static std::map<std::string, Task> cache;
  if (auto it = cache.find(name); it != cache.end()) return it->second;
  Task t{name, task::load_graph(kData / "graphs" / (name + ".graph")), {}, {}};
  t.nominal = pipeline::collect_nominal(t.graph, name, 10, 7, sim::SimConfig{}, executor_config());
  for (auto backend : {pipeline::Backend::shdp_ar, pipeline::Backend::hmm}) {
    pipeline::TrainConfig tc;
    tc.backend = backend;
    t.skills[backend] = pipeline::train_and_calibrate(t.nominal, tc, {});
  }
  return cache.emplace(name, std::move(t)).first->second;
}

sim::System system_for(const std::string& task_name, pipeline::Backend backend) {
  return pipeline::make_system(trained(task_name).skills.at(backend), executor_config(),
                               sim::SimConfig{});
}

struct ScenarioRun {
  bench::ReportRow row;
  std::vector<sim::TrialResult> results;
};

ScenarioRun run(const std::string& scenario_file, pipeline::Backend backend,
                std::optional<std::uint64_t> seed = std::nullopt) {
  const fs::path path = kData / "scenarios" / scenario_file;
  auto sc = sim::load_scenario(path);
  if (seed) sc.seed = *seed;
  const auto graph = task::load_graph(path.parent_path() / sc.graph);
  ScenarioRun r;
  r.results = sim::run_scenario(sc, graph, system_for(sc.scene, backend));
  r.row = bench::summarize(r.results, 1.0);
  return r;
}

// --- checks -----------------------------------------------------------------

Outcome forward_oracle() {
  Rng rng(101);
  std::uniform_int_distribution<int> kd(1, 3), td(1, 6);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto kind = i % 2 == 0 ? hmm::EmissionKind::gaussian_full : hmm::EmissionKind::var;
    const auto m = revert::testing::random_model(kd(rng), kd(rng), kind, rng);
    const auto y = revert::testing::sample_sequence(m, td(rng), rng).y;
    const double got = hmm::forward_loglik(m, y);
    const double want = brute_force_loglik(m, y);
    worst = std::max(worst, std::abs(got - want) / std::max(1.0, std::abs(want)));
  }
  return {worst <= 1e-9, fmt("max relative error %.2e over 100 models", worst)};
}

Outcome em_monotone() {
  Rng rng(202);
  double worst_drop = 0.0;
  for (int i = 0; i < 20; ++i) {
    const auto truth = revert::testing::random_model(3, 13, hmm::EmissionKind::gaussian_full, rng);
    std::vector<Mat> data;
    for (int n = 0; n < 4; ++n) data.push_back(revert::testing::sample_sequence(truth, 80, rng).y);
    hmm::FitConfig fc;
    fc.max_iterations = 50;
    fc.tolerance = 0.0;
    fc.seed = static_cast<std::uint64_t>(i);
    const auto fit = hmm::baum_welch_fit(data, 3, hmm::EmissionKind::gaussian_full, fc);
    for (std::size_t t = 1; t < fit.loglik_history.size(); ++t)
      worst_drop = std::max(worst_drop, fit.loglik_history[t - 1] - fit.loglik_history[t]);
  }
  return {worst_drop <= 1e-8, fmt("largest per-iteration decrease %.2e over 20 fits", worst_drop)};
}

Outcome segmentation() {
  int good = 0;
  std::string modes;
  for (int rep = 0; rep < 10; ++rep) {
    const auto data = revert::testing::switching_var_data(10, 500, 1000 + rep);
    bnp::ShdpConfig c;
    c.seed = static_cast<std::uint64_t>(rep);
    const auto r = bnp::fit_shdp_ar_hmm(data.trials, c);
    std::vector<int> truth, pred;
    for (std::size_t n = 0; n < data.trials.size(); ++n) {
      const auto path = hmm::viterbi_modes(r.model, data.trials[n]);
      pred.insert(pred.end(), path.begin(), path.end());
      truth.insert(truth.end(), data.labels[n].begin(), data.labels[n].end());
    }
    const double err = revert::testing::matched_hamming(truth, pred);
    if (r.model.modes() == 3 && err <= 0.10) ++good;
    modes += fmt("%d/%.3f ", r.model.modes(), err);
  }
  return {good >= 8, fmt("%d/10 repetitions with 3 modes and error <= 10%% (modes/error: %s)", good,
                         modes.c_str())};
}

Outcome sticky_effect() {
  int longer = 0;
  for (int rep = 0; rep < 10; ++rep) {
    // Closely spaced regimes: single samples are ambiguous, so the
    // self-transition bias is what keeps segments whole.
    const auto data = revert::testing::switching_var_data(10, 500, 2000 + rep, 0.05, 0.3);
    auto mean_len = [&](double kappa) {
      bnp::ShdpConfig c;
      c.kappa = kappa;
      c.seed = static_cast<std::uint64_t>(rep);
      const auto r = bnp::fit_shdp_ar_hmm(data.trials, c);
      std::vector<std::vector<int>> paths;
      for (const auto& y : data.trials) paths.push_back(hmm::viterbi_modes(r.model, y));
      return revert::testing::mean_segment_length(paths);
    };
    if (mean_len(50.0) > mean_len(0.0)) ++longer;
  }
  return {longer >= 9, fmt("kappa=50 gave longer segments in %d/10 repetitions", longer)};
}

Outcome streaming_batch() {
  Rng rng(505);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const auto kind = i % 2 == 0 ? hmm::EmissionKind::gaussian_full : hmm::EmissionKind::var;
    const auto m = revert::testing::random_model(3, 13, kind, rng);
    const auto y = revert::testing::sample_sequence(m, 120, rng).y;
    hmm::ForwardFilter f(m);
    for (Eigen::Index t = 0; t < y.cols(); ++t) {
      const double streamed = f.step(y.col(t));
      const double batch = hmm::forward_loglik(m, y.leftCols(t + 1));
      worst = std::max(worst, std::abs(streamed - batch) / std::max(1.0, std::abs(batch)));
    }
  }
  return {worst <= 1e-9, fmt("max relative difference %.2e over 20 trials", worst)};
}

Outcome calibration_soundness() {
  std::size_t flags = 0, curves = 0;
  for (const std::string name : {"pick_place", "drawer"}) {
    for (const auto& [backend, skills] : trained(name).skills) {
      for (const auto& [skill, art] : skills) {
        for (const auto& fold : art.calibration.folds) {
          flags += introspect::count_flags(fold.thresholds,
                                           art.calibration.curves.at(fold.held_out).values);
          ++curves;
        }
      }
    }
  }
  return {flags == 0 && curves > 0,
          fmt("%zu flags over %zu held-out nominal curves, both tasks and backends", flags, curves)};
}

Outcome nominal_classification() {
  auto& t = trained("pick_place");
  const auto& skills = t.skills.at(pipeline::Backend::shdp_ar);
  std::vector<std::string> names;
  std::vector<const hmm::SkillModel*> models;
  for (const auto& [s, art] : skills) {
    names.push_back(s);
    models.push_back(&art.model);
  }
  // Fresh nominal executions, never seen in training.
  const auto test = pipeline::collect_nominal(t.graph, "pick_place", 25, 9090, sim::SimConfig{},
                                              executor_config());
  int correct = 0, total = 0;
  for (std::size_t a = 0; a < names.size(); ++a) {
    for (const auto& trial : test.at(names[a]).trials) {
      std::vector<double> ends;
      for (const auto* m : models) ends.push_back(introspect::lcurve(*m, trial).values.back());
      correct += introspect::classify_nominal(ends, a).correct ? 1 : 0;
      ++total;
    }
  }
  const double acc = static_cast<double>(correct) / total;
  return {acc >= 0.95, fmt("%d/%d test trials classified correctly (%.1f%%)", correct, total, 100 * acc)};
}

Outcome replication_one() {
  const auto r = run("pick_place_one.scn", pipeline::Backend::shdp_ar);
  const bool pass = r.row.recovery >= 0.80 && r.row.recovery <= 1.0 && r.row.pr.micro_precision >= 0.95;
  return {pass, fmt("recovery %.3f, micro precision %.3f, micro recall %.3f, %ld/%d tasks completed",
                    r.row.recovery, r.row.pr.micro_precision, r.row.pr.micro_recall, r.row.completed,
                    r.row.trials)};
}

Outcome replication_multi() {
  const auto r = run("drawer_multi.scn", pipeline::Backend::shdp_ar);
  const double per_trial = static_cast<double>(r.row.injections) / r.row.trials;
  const bool pass = r.row.recovery >= 0.85 && r.row.completed == r.row.trials;
  return {pass, fmt("recovery %.3f, %ld/%d tasks completed, %.1f injections per trial",
                    r.row.recovery, r.row.completed, r.row.trials, per_trial)};
}

Outcome backend_comparison() {
  std::string detail;
  bool within = true;
  for (const std::string s : {"pick_place_one.scn", "pick_place_multi.scn", "pick_place_tool.scn",
                              "drawer_one.scn", "drawer_multi.scn"}) {
    const double a = run(s, pipeline::Backend::shdp_ar).row.recovery;
    const double b = run(s, pipeline::Backend::hmm).row.recovery;
    within = within && a >= b - 0.05;
    detail += fmt("%s %.3f vs %.3f; ", s.substr(0, s.size() - 4).c_str(), a, b);
  }
  int better = 0;
  for (std::uint64_t rep = 0; rep < 10; ++rep) {
    const double a = run("drawer_multi.scn", pipeline::Backend::shdp_ar, 5000 + rep).row.recovery;
    const double b = run("drawer_multi.scn", pipeline::Backend::hmm, 5000 + rep).row.recovery;
    if (a > b) ++better;
  }
  detail += fmt("drawer multi strictly better in %d/10 seeded repetitions", better);
  return {within && better >= 7, detail};
}

Outcome recovery_resolution() {
  std::size_t checked = 0;
  bool ok = true;
  std::string pick_target;
  for (const std::string name : {"pick_place", "drawer"}) {
    const auto g = task::load_graph(kData / "graphs" / (name + ".graph"));
    for (const auto& n : g.nodes()) {
      // Oracle: walk dependencies until a node without one.
      std::string want = n.id;
      std::set<std::string> seen;
      while (g.node(want).dependency && seen.insert(want).second) want = *g.node(want).dependency;
      const auto got = task::resolve_recovery_target(g, n.id);
      ok = ok && got == want && task::resolve_recovery_target(g, got) == got;
      if (n.id == "pick") pick_target = got;
      ++checked;
    }
  }
  ok = ok && pick_target == "pre-pick";
  return {ok, fmt("%zu nodes resolved to fixpoints; pick reverts to %s", checked, pick_target.c_str())};
}

Outcome dmp_properties() {
  Rng rng(1212);
  std::uniform_real_distribution<double> u(-0.5, 0.5), dur(1.0, 2.0);
  double drift = 0.0, goal_err = 0.0, rmse_worst = 0.0;
  for (int i = 0; i < 10; ++i) {
    Vec a(3), b(3);
    for (int j = 0; j < 3; ++j) {
      a[j] = u(rng);
      b[j] = u(rng);
    }
    motion::Trajectory demo;
    demo.rate_hz = 200.0;
    demo.positions = revert::testing::min_jerk(a, b, dur(rng), demo.rate_hz);
    demo.velocities = Mat::Zero(3, demo.positions.cols());
    for (Eigen::Index t = 1; t < demo.positions.cols(); ++t)
      demo.velocities.col(t) = (demo.positions.col(t) - demo.positions.col(t - 1)) * demo.rate_hz;
    const auto p = motion::dmp_fit(demo, 30);

    const auto still = motion::dmp_rollout(p, b, b, p.tau, 200.0);
    drift = std::max(drift, (still.positions.colwise() - b).colwise().norm().maxCoeff());

    const auto roll = motion::dmp_rollout(p, 200.0);
    const Vec end = roll.positions.col(roll.size() - 1);
    goal_err = std::max(goal_err, (end - b).norm() / (b - a).norm());

    const auto n = demo.positions.cols();
    const double rmse = std::sqrt((roll.positions.leftCols(n) - demo.positions).colwise().squaredNorm().mean());
    rmse_worst = std::max(rmse_worst, rmse / (b - a).norm());
  }
  const bool pass = drift <= 1e-3 && goal_err <= 1e-3 && rmse_worst <= 0.02;
  return {pass, fmt("null drift %.2e, goal error %.2e |g-y0|, fit RMSE %.2f%% of |g-y0|", drift,
                    goal_err, 100 * rmse_worst)};
}

Outcome metrics_oracle() {
  const auto pr = bench::precision_recall({bench::Confusion{10, 2, 3, 0}});
  auto r4 = [](double v) { return std::round(v * 1e4) / 1e4; };
  const bool hand = r4(pr.micro_precision) == 0.8333 && r4(pr.micro_recall) == 0.7692 &&
                    r4(pr.f1) == 0.8;
  const bool collapse = pr.micro_precision == pr.macro_precision && pr.micro_recall == pr.macro_recall;
  return {hand && collapse, fmt("P %.4f, R %.4f, F1 %.4f, macro P %.4f, macro R %.4f",
                                pr.micro_precision, pr.micro_recall, pr.f1, pr.macro_precision,
                                pr.macro_recall)};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "revert_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir / "models");
  pipeline::save_artifacts(dir / "models", trained("pick_place").skills.at(pipeline::Backend::shdp_ar));
  auto sc = sim::load_scenario(kData / "scenarios" / "pick_place_multi.scn");
  sc.trials = 4;
  sc.graph = (kData / "graphs" / "pick_place.graph").string();
  {
    std::ofstream os(dir / "short.scn");
    sim::write_scenario(os, sc);
  }
  std::size_t size = 0;
  bool same = true;
  for (const char* seed : {"11", "12"}) {
    std::vector<std::string> outputs;
    for (int i = 0; i < 2; ++i) {
      const auto out = dir / ("run" + std::string(seed) + "_" + std::to_string(i) + ".res");
      const std::string cmd = std::string("\"") + REVERT_CLI + "\" --seed " + seed +
                              " --data-dir \"" + kData.string() + "\" run --scenario \"" +
                              (dir / "short.scn").string() + "\" --models \"" +
                              (dir / "models").string() + "\" --out \"" + out.string() +
                              "\" > /dev/null";
      if (std::system(cmd.c_str()) != 0) return {false, "run command failed: " + cmd};
      outputs.push_back(slurp(out));
    }
    same = same && !outputs[0].empty() && outputs[0] == outputs[1];
    size += outputs[0].size();
  }
  fs::remove_all(dir);
  return {same, fmt("two seeds, each run twice through the CLI: %s (%zu bytes)",
                    same ? "byte-identical" : "outputs differ", size)};
}

struct Check {
  int id;
  const char* name;
  std::function<Outcome()> fn;
  double limit_seconds = 0.0;  ///< 0: no runtime bound
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Check> checks = {
      {1, "forward oracle equivalence", forward_oracle, 5},
      {2, "EM monotonicity", em_monotone, 60},
      {3, "sHDP-AR-HMM segmentation", segmentation, 600},
      {4, "sticky effect", sticky_effect},
      {5, "streaming/batch equivalence", streaming_batch},
      {6, "calibration soundness", calibration_soundness},
      {7, "nominal classification", nominal_classification},
      {8, "pick-and-place, one anomaly per node", replication_one, 600},
      {9, "drawer, multiple anomalies per node", replication_multi, 900},
      {10, "backend comparison", backend_comparison},
      {11, "recovery resolution", recovery_resolution},
      {12, "DMP properties", dmp_properties},
      {13, "metrics hand oracle", metrics_oracle},
      {14, "run determinism", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : checks) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.limit_seconds > 0 && secs > c.limit_seconds) {
      o.pass = false;
      o.detail += fmt(" (over the %.0f s limit)", c.limit_seconds);
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << fmt(" %2d ", c.id) << c.name << ": " << o.detail
              << fmt(" [%.1f s]", secs) << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
