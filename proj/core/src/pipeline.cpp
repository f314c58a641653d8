#include "revert/pipeline.hpp"

#include <cmath>
#include <numbers>

namespace revert::pipeline {

std::string to_string(Backend b) { return b == Backend::hmm ? "hmm" : "shdp-ar"; }

Backend backend_from_string(const std::string& s) {
  if (s == "hmm") return Backend::hmm;
  if (s == "shdp-ar" || s == "shdp") return Backend::shdp_ar;
  throw ValidationError("unknown backend '" + s + "' (expected hmm or shdp-ar)");
}

std::map<std::string, obs::TrialSet> collect_nominal(const task::TaskGraph& graph,
                                                     const std::string& scene,
                                                     int trials_per_skill, std::uint64_t seed,
                                                     const sim::SimConfig& plant,
                                                     const task::ExecutorConfig& executor) {
  if (trials_per_skill < 1) throw ValidationError("need at least one trial per skill");
  std::map<std::string, obs::TrialSet> data;
  for (const auto& s : graph.skills()) data[s].skill_id = s;
  auto full = [&] {
    for (const auto& [s, set] : data)
      if (static_cast<int>(set.trials.size()) < trials_per_skill) return false;
    return true;
  };

  task::ExecutorConfig ec = executor;
  ec.monitoring = false;
  for (std::uint64_t run = 0; !full(); ++run) {
    if (run > static_cast<std::uint64_t>(trials_per_skill) * 4)
      throw Error("nominal collection did not produce enough trials");
    const auto run_seed = sim::derive_seed(seed, run);
    Rng scene_rng(sim::derive_seed(run_seed, 1));
    sim::SimConfig pc = plant;
    pc.seed = sim::derive_seed(run_seed, 3);
    sim::SimPlant p(pc, sim::scene_preset(scene, scene_rng));

    std::map<std::string, obs::Trial> current;
    task::Executor ex(graph, p, nullptr, ec);
    ex.set_sample_callback([&](const task::Node& node, int, const obs::Observation& o) {
      auto& tr = current[node.id];
      if (tr.samples.empty()) {
        tr.skill_id = node.skill_id;
        tr.rate_hz = pc.rate_hz;
      }
      obs::Observation s = o;
      s.t = static_cast<double>(tr.samples.size()) / pc.rate_hz;
      tr.samples.push_back(s);
    });
    const auto trace = ex.run();
    if (!trace.completed()) throw Error("nominal run " + std::to_string(run) + " did not complete");
    for (const auto& id : graph.execution_order()) {
      auto& tr = current.at(id);
      auto& set = data.at(tr.skill_id);
      if (static_cast<int>(set.trials.size()) < trials_per_skill) set.trials.push_back(std::move(tr));
    }
  }
  return data;
}

hmm::SkillModel train_skill(const obs::TrialSet& data, const TrainConfig& config) {
  if (config.backend == Backend::hmm)
    return hmm::baum_welch_fit(data, config.hmm_modes, config.hmm_kind, config.hmm_fit).model;
  return bnp::fit_shdp_ar_hmm(data, config.shdp).model;
}

std::map<std::string, SkillArtifacts> train_and_calibrate(
    const std::map<std::string, obs::TrialSet>& data, const TrainConfig& train,
    const introspect::CalibrationConfig& calibration) {
  std::map<std::string, SkillArtifacts> out;
  for (const auto& [skill, set] : data) {
    auto model = train_skill(set, train);
    auto report = introspect::calibrate_loocv(set, model, calibration);
    out.emplace(skill, SkillArtifacts{std::move(model), std::move(report)});
  }
  return out;
}

sim::System make_system(const std::map<std::string, SkillArtifacts>& skills,
                        const task::ExecutorConfig& executor, const sim::SimConfig& plant) {
  sim::System sys;
  for (const auto& [skill, a] : skills) {
    sys.models.push_back(a.model);
    sys.thresholds.push_back(a.calibration.thresholds);
  }
  sys.executor = executor;
  sys.plant = plant;
  return sys;
}

void save_artifacts(const std::filesystem::path& dir,
                    const std::map<std::string, SkillArtifacts>& skills) {
  std::filesystem::create_directories(dir);
  for (const auto& [skill, a] : skills) {
    hmm::save_model(dir / (skill + ".model"), a.model);
    introspect::save_thresholds(dir / (skill + ".thr"), a.calibration.thresholds);
  }
}

sim::System load_system(const std::filesystem::path& dir, const std::vector<std::string>& skills,
                        const task::ExecutorConfig& executor, const sim::SimConfig& plant) {
  sim::System sys;
  for (const auto& s : skills) {
    sys.models.push_back(hmm::load_model(dir / (s + ".model")));
    const auto thr = dir / (s + ".thr");
    if (!std::filesystem::exists(thr))
      throw ValidationError("missing calibration for skill '" + s + "' (" + thr.string() + ")");
    sys.thresholds.push_back(introspect::load_thresholds(thr));
  }
  sys.executor = executor;
  sys.plant = plant;
  return sys;
}

obs::Trial approach_demo(double rate_hz) {
  const double duration = 2.0;
  const Eigen::Vector3d start(0.35, 0.0, 0.3);
  const Eigen::Vector3d goal(0.47, -0.2, 0.1);
  const double half = std::numbers::pi / 4;
  obs::Trial demo;
  demo.skill_id = "handle_approach";
  demo.rate_hz = rate_hz;
  const auto n = static_cast<int>(std::llround(duration * rate_hz));
  for (int i = 0; i <= n; ++i) {
    const double s = static_cast<double>(i) / n;
    const double mj = s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
    obs::Observation o;
    o.t = static_cast<double>(i) / rate_hz;
    // Swing out to the side of the straight line, then come in along the
    // drawer front.
    o.position = start + mj * (goal - start) + Eigen::Vector3d(-0.05, -0.06, 0.0) * std::sin(std::numbers::pi * mj);
    const double angle = half * mj;
    o.orientation = {std::cos(angle), 0.0, std::sin(angle), 0.0};
    demo.samples.push_back(o);
  }
  return demo;
}

}  // namespace revert::pipeline
