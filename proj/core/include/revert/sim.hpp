#pragma once

#include "revert/common.hpp"
#include "revert/executor.hpp"
#include "revert/obsdata.hpp"

#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

/// Kinematic manipulation plant with a spring-model wrench sensor and a
/// collision disturbance injector.
namespace revert::sim {

enum class DisturbanceKind { human_collision, tool_collision };

std::string to_string(DisturbanceKind k);
DisturbanceKind disturbance_kind_from_string(const std::string& s);

struct DisturbanceProfile {
  DisturbanceKind kind = DisturbanceKind::human_collision;
  double onset = 0.0;      ///< seconds; relative to the call in SimPlant::inject
  double amplitude = 0.0;  ///< N
  double duration = 0.2;   ///< s
  Eigen::Vector3d direction = Eigen::Vector3d::UnitX();
  double pose_deviation = 0.0;  ///< m
};

void validate(const DisturbanceProfile& p);

/// Pulse force magnitude at time `s` seconds after onset: a half sine for
/// human collisions; a quarter sine with 3x amplitude and 1/3 duration for
/// tool collisions. Zero outside the pulse.
double pulse_force(const DisturbanceProfile& p, double s);
double pulse_length(const DisturbanceProfile& p);

struct SimConfig {
  double rate_hz = kDefaultRateHz;
  double lag_time_constant = 0.05;  ///< s
  double stiffness = 500.0;         ///< N/m
  double sigma_force = 0.2;         ///< N
  double sigma_torque = 0.02;       ///< N m
  double sigma_position = 0.0005;   ///< m
  bool noise = true;
  double settle_tolerance = 1e-3;   ///< m
  std::uint64_t seed = 0;
};

enum class NodeAction { grasp, release };

/// A named goal is an object's pose shifted by a fixed offset; the goal takes
/// the object's orientation.
struct GoalRule {
  std::string object;
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();
};

struct SceneAction {
  NodeAction action = NodeAction::grasp;
  std::string object;
  double mass = 0.0;     ///< kg, weight felt while held
  double damping = 0.0;  ///< N s/m, resistance felt while held (drawer slide)
};

/// Object poses, the starting pose, named goals, and what completing a node
/// does to the scene (grasping a block, gripping a handle, ...). A grasped
/// object follows the end effector; reverting past the grasping node lets
/// go of it where it is, unless it springs back to a rest pose (a
/// soft-close drawer).
struct Scene {
  std::string name;
  obs::Pose home;
  std::map<std::string, obs::Pose> objects;
  std::map<std::string, GoalRule> goals;
  std::map<std::string, SceneAction> actions;  ///< keyed by node id
  std::map<std::string, obs::Pose> rest;       ///< keyed by object
};

/// "pick_place" or "drawer"; object placement jittered by `rng`.
Scene scene_preset(const std::string& name, Rng& rng);

struct FiredDisturbance {
  DisturbanceProfile profile;
  double time = 0.0;  ///< absolute onset on the plant clock
  std::string node;
  std::string skill;
  bool weak = false;
};

/// Disturbance queued for a node; fired during that node's attempts.
struct QueuedDisturbance {
  DisturbanceProfile profile;  ///< onset ignored; drawn on arming
  bool weak = false;
};

struct PlantState {
  obs::Pose pose;
  std::string held_object;  ///< empty when nothing is held
  std::map<std::string, obs::Pose> objects;
  double time = 0.0;
  std::uint64_t seed = 0;
};

class SimPlant : public task::Plant {
 public:
  SimPlant(SimConfig config, Scene scene);

  double rate_hz() const override { return cfg_.rate_hz; }
  double time() const override { return time_; }
  obs::Pose pose() const override;
  obs::Observation step(const obs::Pose& setpoint) override;
  obs::Pose query_goal(const std::string& object) override;
  bool settled() const override;

  void on_command() override;
  void on_node_entered(const task::Node& node, int attempt, double motion_duration) override;
  bool node_may_complete() const override;
  void on_node_completed(const task::Node& node) override;
  void on_recovery(const std::string& from, const std::string& to,
                   const std::vector<std::string>& undone) override;

  /// Starts a disturbance `profile.onset` seconds from now.
  void inject(const DisturbanceProfile& profile);

  /// Per-node disturbance queues consumed as nodes run. Each attempt arms the
  /// next queued disturbance at a uniform onset inside the motion; when a
  /// pulse passes without the node being reverted the next one fires in the
  /// same attempt after a short gap. A node cannot complete while its queue
  /// is non-empty or a pulse is in progress.
  void schedule(const std::string& node, std::vector<QueuedDisturbance> queue);
  const std::vector<FiredDisturbance>& fired() const noexcept { return fired_; }

  PlantState state() const;
  const SimConfig& config() const noexcept { return cfg_; }

 private:
  struct Active {
    DisturbanceProfile profile;
    double start = 0.0;
    double absorbed = 0.0;  // displacement fraction already folded into the lag state
  };

  Eigen::Vector3d displacement() const;
  bool pulse_in_progress() const;
  void arm_next(double earliest, double latest);
  void release();
  void fire_due();

  SimConfig cfg_;
  Scene scene_;
  Rng rng_;
  Rng schedule_rng_;
  double time_ = 0.0;
  Eigen::Vector3d lag_pos_;
  Eigen::Vector4d lag_quat_;
  obs::Pose setpoint_;
  Eigen::Vector3d prev_pos_;
  Eigen::Vector3d held_offset_ = Eigen::Vector3d::Zero();
  std::string held_object_;
  double held_mass_ = 0.0;
  double held_damping_ = 0.0;

  std::vector<Active> active_;
  std::map<std::string, std::deque<QueuedDisturbance>> queues_;
  std::string node_id_;
  std::string node_skill_;
  std::optional<std::pair<double, QueuedDisturbance>> armed_;
  std::vector<FiredDisturbance> fired_;
  double gap_min_ = 0.2;
  double gap_max_ = 0.5;
};

/// Uniform direction on the unit sphere.
Eigen::Vector3d random_direction(Rng& rng);

/// q1 * q2 for (w, x, y, z) quaternions.
Eigen::Vector4d quat_multiply(const Eigen::Vector4d& a, const Eigen::Vector4d& b);
Eigen::Vector3d quat_rotate(const Eigen::Vector4d& q, const Eigen::Vector3d& v);

}  // namespace revert::sim
