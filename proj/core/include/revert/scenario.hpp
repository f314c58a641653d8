#pragma once

#include "revert/executor.hpp"
#include "revert/introspect.hpp"
#include "revert/sim.hpp"
#include "revert/taskgraph.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace revert::sim {

/// (i) no anomalies, (ii) anomalies without recovery, (iii) one anomaly per
/// node, (iv) several anomalies per node, one after the other.
enum class Condition { nominal, anomaly_no_recovery, one_per_node, multi_per_node };

std::string to_string(Condition c);
Condition condition_from_string(const std::string& s);

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Randomized disturbance draws. A `weak_fraction` of injections come from
/// the weak ranges, below the nominal amplitude floor.
struct ProfileRanges {
  DisturbanceKind kind = DisturbanceKind::human_collision;
  Range amplitude{10.0, 40.0};
  Range deviation{0.02, 0.08};
  Range duration{0.1, 0.3};
  double weak_fraction = 0.1;
  Range weak_amplitude{0.2, 1.0};
  Range weak_deviation{0.0, 0.0005};
};

/// Fixed values replacing the random draws for one node.
struct NodeOverride {
  std::optional<int> count;
  std::optional<double> amplitude;
  std::optional<double> deviation;
  std::optional<double> duration;
};

struct Scenario {
  std::string name = "scenario";
  Condition condition = Condition::nominal;
  std::string scene = "pick_place";  ///< scene preset
  std::string graph;                 ///< graph file, relative to the scenario file
  int trials = 10;
  std::uint64_t seed = 0;
  int repeats = 5;                   ///< injections per node under multi_per_node
  ProfileRanges ranges;
  std::map<std::string, NodeOverride> overrides;
};

void validate(const Scenario& s);
Scenario parse_scenario(std::istream& is);
Scenario load_scenario(const std::filesystem::path& path);
void write_scenario(std::ostream& os, const Scenario& s);

/// Injections per node implied by the condition (before overrides).
int injections_per_node(const Scenario& s);

/// Draws one disturbance from the ranges.
QueuedDisturbance draw_disturbance(const ProfileRanges& r, Rng& rng);

/// splitmix64 step, used to derive independent per-trial seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// Trained models and thresholds for every skill of a task, plus execution
/// settings.
struct System {
  std::vector<hmm::SkillModel> models;
  std::vector<introspect::ThresholdModel> thresholds;
  task::ExecutorConfig executor;
  SimConfig plant;
};

struct TrialResult {
  std::uint64_t seed = 0;
  task::ExecutionTrace trace;
  std::vector<FiredDisturbance> truth;
};

/// Runs one seeded trial of the scenario. `monitor_log`, when given,
/// receives the monitor stream.
TrialResult run_trial(const Scenario& scenario, const task::TaskGraph& graph,
                      const System& system, int trial, std::ostream* monitor_log = nullptr);

std::vector<TrialResult> run_scenario(const Scenario& scenario, const task::TaskGraph& graph,
                                      const System& system);

}  // namespace revert::sim
