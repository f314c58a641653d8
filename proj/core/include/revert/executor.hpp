#pragma once

#include "revert/introspect.hpp"
#include "revert/motion.hpp"
#include "revert/obsdata.hpp"
#include "revert/taskgraph.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace revert::task {

/// What the executor needs from a robot or simulator. Calls arrive in a strict
/// per-step sequence: command, observe, score, arbitrate.
class Plant {
 public:
  virtual ~Plant() = default;

  virtual double rate_hz() const = 0;
  virtual double time() const = 0;
  virtual obs::Pose pose() const = 0;
  /// Advances one sample toward `setpoint` and returns the emitted observation.
  virtual obs::Observation step(const obs::Pose& setpoint) = 0;
  /// Current goal pose for a scene object.
  virtual obs::Pose query_goal(const std::string& object) = 0;
  /// True once the tracking transient of the last command has died out.
  virtual bool settled() const = 0;

  /// A new motion is about to be commanded.
  virtual void on_command() {}
  virtual void on_node_entered(const Node& /*node*/, int /*attempt*/, double /*motion_duration*/) {}
  /// False while the plant needs the current node to keep running.
  virtual bool node_may_complete() const { return true; }
  virtual void on_node_completed(const Node& /*node*/) {}
  /// `undone` lists the nodes being reverted, from `to` through `from`.
  virtual void on_recovery(const std::string& /*from*/, const std::string& /*to*/,
                           const std::vector<std::string>& /*undone*/) {}
};

struct ExecutorConfig {
  int max_recoveries_per_node = 10;  ///< 0 fails the task on the first anomaly
  double settle_time = 0.5;          ///< hold at the goal after the motion ends
  double recovery_seconds_per_meter = 5.0;
  double recovery_min_duration = 1.0;
  double max_node_time = 120.0;      ///< per attempt, guards against livelock
  bool monitoring = true;
  std::filesystem::path motion_dir;  ///< where dmp:<name> parameter files live
};

/// Called once per plant step while a node runs (not during recovery).
using SampleCallback =
    std::function<void(const Node& node, int attempt, const obs::Observation& obs)>;

class Executor {
 public:
  /// `monitor` may be null when config.monitoring is false.
  Executor(const TaskGraph& graph, Plant& plant, introspect::Monitor* monitor,
           ExecutorConfig config);

  ExecutionTrace run();

  void set_sample_callback(SampleCallback cb) { on_sample_ = std::move(cb); }

  /// Generated motion for a node from `entry` (exposed for tests).
  motion::Trajectory node_motion(const Node& node, const obs::Pose& entry, const obs::Pose& goal);

 private:
  enum class Outcome { completed, anomaly, timeout };

  Outcome run_node(const Node& node, int attempt, ExecutionTrace& trace);
  void run_recovery(const obs::Pose& target);
  void record(ExecutionTrace& trace, Event e);
  const motion::DmpParams& dmp(const std::string& name);

  const TaskGraph& graph_;
  Plant& plant_;
  introspect::Monitor* monitor_;
  ExecutorConfig cfg_;
  SampleCallback on_sample_;
  std::map<std::string, motion::DmpParams> dmps_;
  std::map<std::string, obs::Pose> entry_poses_;
  double wall_start_ = 0.0;
  double last_statistic_ = 0.0;
};

/// Convenience wrapper around Executor::run.
ExecutionTrace execute(const TaskGraph& graph, Plant& plant, introspect::Monitor* monitor,
                       const ExecutorConfig& config);

obs::Pose pose_from_vector(const Eigen::Ref<const Vec>& v);
Vec pose_to_vector(const obs::Pose& p);

}  // namespace revert::task
