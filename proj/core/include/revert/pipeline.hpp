#pragma once

#include "revert/executor.hpp"
#include "revert/hmm.hpp"
#include "revert/introspect.hpp"
#include "revert/motion.hpp"
#include "revert/scenario.hpp"
#include "revert/shdp.hpp"
#include "revert/taskgraph.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

/// Glue between the modules: nominal data collection, per-skill training,
/// calibration, and artifact directories.
namespace revert::pipeline {

enum class Backend { hmm, shdp_ar };

std::string to_string(Backend b);
Backend backend_from_string(const std::string& s);

struct TrainConfig {
  Backend backend = Backend::shdp_ar;
  int hmm_modes = 5;
  hmm::EmissionKind hmm_kind = hmm::EmissionKind::gaussian_full;
  hmm::FitConfig hmm_fit;
  bnp::ShdpConfig shdp;
};

/// Nominal executions of the task with monitoring off; each node execution
/// becomes one training trial of its skill. Runs continue until every skill
/// has `trials_per_skill` trials (extra trials are dropped).
std::map<std::string, obs::TrialSet> collect_nominal(const task::TaskGraph& graph,
                                                     const std::string& scene,
                                                     int trials_per_skill, std::uint64_t seed,
                                                     const sim::SimConfig& plant,
                                                     const task::ExecutorConfig& executor);

hmm::SkillModel train_skill(const obs::TrialSet& data, const TrainConfig& config);

struct SkillArtifacts {
  hmm::SkillModel model;
  introspect::CalibrationReport calibration;
};

std::map<std::string, SkillArtifacts> train_and_calibrate(
    const std::map<std::string, obs::TrialSet>& data, const TrainConfig& train,
    const introspect::CalibrationConfig& calibration);

/// Everything needed to run scenarios for one task with one backend.
sim::System make_system(const std::map<std::string, SkillArtifacts>& skills,
                        const task::ExecutorConfig& executor, const sim::SimConfig& plant);

// Artifact directories hold <skill>.model and <skill>.thr files.
void save_artifacts(const std::filesystem::path& dir,
                    const std::map<std::string, SkillArtifacts>& skills);
sim::System load_system(const std::filesystem::path& dir, const std::vector<std::string>& skills,
                        const task::ExecutorConfig& executor, const sim::SimConfig& plant);

/// Demonstration used for the drawer approach primitive: a minimum-jerk
/// reach from the drawer home pose to the pre-grip pose with a sideways arc
/// and a 90 degree wrist turn.
obs::Trial approach_demo(double rate_hz = kDefaultRateHz);

}  // namespace revert::pipeline
