#include "revert/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace revert::sim {

namespace {

constexpr double kGravity = 9.81;
const Eigen::Vector3d kSensorLever(0.0, 0.0, 0.1);

double ramp(double s) { return 0.5 * (1.0 - std::cos(std::numbers::pi * std::clamp(s, 0.0, 1.0))); }

Eigen::Vector4d yaw_quat(double yaw) {
  return {std::cos(0.5 * yaw), 0.0, 0.0, std::sin(0.5 * yaw)};
}

}  // namespace

std::string to_string(DisturbanceKind k) {
  return k == DisturbanceKind::human_collision ? "human" : "tool";
}

DisturbanceKind disturbance_kind_from_string(const std::string& s) {
  if (s == "human" || s == "human_collision") return DisturbanceKind::human_collision;
  if (s == "tool" || s == "tool_collision") return DisturbanceKind::tool_collision;
  throw ParseError("unknown disturbance kind '" + s + "'", 0);
}

void validate(const DisturbanceProfile& p) {
  if (!(p.amplitude >= 0.0)) throw ValidationError("disturbance amplitude must be >= 0");
  if (!(p.duration > 0.0)) throw ValidationError("disturbance duration must be > 0");
  if (!(p.pose_deviation >= 0.0)) throw ValidationError("pose deviation must be >= 0");
  if (!(p.onset >= 0.0)) throw ValidationError("disturbance onset must be >= 0");
  if (std::abs(p.direction.norm() - 1.0) > 1e-9)
    throw ValidationError("disturbance direction must be a unit vector");
}

double pulse_length(const DisturbanceProfile& p) {
  return p.kind == DisturbanceKind::tool_collision ? p.duration / 3.0 : p.duration;
}

double pulse_force(const DisturbanceProfile& p, double s) {
  const double len = pulse_length(p);
  if (s < 0.0 || s > len) return 0.0;
  if (p.kind == DisturbanceKind::tool_collision)
    return 3.0 * p.amplitude * std::sin(0.5 * std::numbers::pi * s / len);
  return p.amplitude * std::sin(std::numbers::pi * s / len);
}

Eigen::Vector3d random_direction(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector3d v;
  do {
    v = {n(rng), n(rng), n(rng)};
  } while (v.norm() < 1e-12);
  return v.normalized();
}

Eigen::Vector4d quat_multiply(const Eigen::Vector4d& a, const Eigen::Vector4d& b) {
  return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
          a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
          a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
          a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

Eigen::Vector3d quat_rotate(const Eigen::Vector4d& q, const Eigen::Vector3d& v) {
  const Eigen::Quaterniond e(q[0], q[1], q[2], q[3]);
  return e.normalized() * v;
}

Scene scene_preset(const std::string& name, Rng& rng) {
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  Scene s;
  s.name = name;
  if (name == "pick_place") {
    s.home.position = {0.45, 0.0, 0.35};
    obs::Pose block;
    block.position = {0.6 + 0.02 * jitter(rng), 0.02 * jitter(rng), 0.0};
    block.orientation = yaw_quat(0.2 * jitter(rng));
    obs::Pose bin;
    bin.position = {0.4 + 0.01 * jitter(rng), 0.35 + 0.01 * jitter(rng), 0.0};
    s.objects = {{"block", block}, {"bin", bin}};
    s.goals = {{"block_above", {"block", {0.0, 0.0, 0.12}}},
               {"block_grasp", {"block", {0.0, 0.0, 0.02}}},
               {"bin_above", {"bin", {0.0, 0.0, 0.15}}},
               {"bin_place", {"bin", {0.0, 0.0, 0.05}}}};
    s.actions = {{"pick", {NodeAction::grasp, "block", 0.2, 0.0}},
                 {"place", {NodeAction::release, "block", 0.0, 0.0}}};
  } else if (name == "drawer") {
    s.home.position = {0.35, 0.0, 0.3};
    const Eigen::Vector4d side(std::cos(std::numbers::pi / 4), 0.0, std::sin(std::numbers::pi / 4), 0.0);
    obs::Pose handle;
    handle.position = {0.55 + 0.015 * jitter(rng), -0.2 + 0.015 * jitter(rng), 0.1};
    handle.orientation = side;
    s.objects = {{"handle", handle}, {"drawer_closed", handle}};
    s.rest = {{"handle", handle}};
    s.goals = {{"handle_pregrip", {"handle", {-0.08, 0.0, 0.0}}},
               {"handle_grasp", {"handle", {0.0, 0.0, 0.0}}},
               {"handle_open", {"drawer_closed", {-0.2, 0.0, 0.0}}},
               {"handle_closed", {"drawer_closed", {0.0, 0.0, 0.0}}}};
    s.actions = {{"grip", {NodeAction::grasp, "handle", 0.0, 15.0}},
                 {"push-to-close", {NodeAction::release, "handle", 0.0, 0.0}}};
  } else {
    throw ValidationError("unknown scene preset '" + name + "'");
  }
  return s;
}

// --- plant ------------------------------------------------------------------

SimPlant::SimPlant(SimConfig config, Scene scene)
    : cfg_(config),
      scene_(std::move(scene)),
      rng_(config.seed),
      schedule_rng_(config.seed ^ 0x9e3779b97f4a7c15ULL) {
  if (!(cfg_.rate_hz > 0.0) || !(cfg_.lag_time_constant > 0.0))
    throw ValidationError("rate and lag time constant must be positive");
  lag_pos_ = scene_.home.position;
  lag_quat_ = scene_.home.orientation.normalized();
  setpoint_ = {lag_pos_, lag_quat_};
  prev_pos_ = lag_pos_;
}

Eigen::Vector3d SimPlant::displacement() const {
  Eigen::Vector3d d = Eigen::Vector3d::Zero();
  for (const auto& a : active_) {
    const double r = ramp((time_ - a.start) / pulse_length(a.profile));
    d += a.profile.pose_deviation * (r - a.absorbed) * a.profile.direction;
  }
  return d;
}

bool SimPlant::pulse_in_progress() const {
  return std::any_of(active_.begin(), active_.end(), [&](const Active& a) {
    return time_ - a.start <= pulse_length(a.profile);
  });
}

obs::Pose SimPlant::pose() const { return {lag_pos_ + displacement(), lag_quat_}; }

bool SimPlant::settled() const {
  Eigen::Vector4d q = setpoint_.orientation;
  if (q.dot(lag_quat_) < 0.0) q = -q;
  return (setpoint_.position - lag_pos_).norm() < cfg_.settle_tolerance &&
         (q - lag_quat_).norm() < cfg_.settle_tolerance;
}

obs::Pose SimPlant::query_goal(const std::string& object) {
  const auto it = scene_.goals.find(object);
  if (it == scene_.goals.end())
    throw ValidationError("scene '" + scene_.name + "' has no goal '" + object + "'");
  const auto& obj = scene_.objects.at(it->second.object);
  return {obj.position + it->second.offset, obj.orientation};
}

void SimPlant::inject(const DisturbanceProfile& profile) {
  validate(profile);
  armed_.emplace(time_ + profile.onset, QueuedDisturbance{profile, false});
}

void SimPlant::schedule(const std::string& node, std::vector<QueuedDisturbance> queue) {
  for (const auto& q : queue) validate(q.profile);
  auto& dq = queues_[node];
  dq.insert(dq.end(), queue.begin(), queue.end());
}

void SimPlant::arm_next(double earliest, double latest) {
  if (armed_ || node_id_.empty()) return;
  auto it = queues_.find(node_id_);
  if (it == queues_.end() || it->second.empty()) return;
  std::uniform_real_distribution<double> u(earliest, latest);
  armed_.emplace(u(schedule_rng_), it->second.front());
  it->second.pop_front();
}

void SimPlant::fire_due() {
  if (!armed_ || time_ < armed_->first) return;
  Active a{armed_->second.profile, time_, 0.0};
  a.profile.onset = 0.0;
  active_.push_back(a);
  fired_.push_back({a.profile, time_, node_id_, node_skill_, armed_->second.weak});
  armed_.reset();
}

obs::Observation SimPlant::step(const obs::Pose& setpoint) {
  const double dt = 1.0 / cfg_.rate_hz;
  time_ += dt;
  setpoint_ = setpoint;
  fire_due();

  const double a = 1.0 - std::exp(-dt / cfg_.lag_time_constant);
  lag_pos_ += a * (setpoint.position - lag_pos_);
  Eigen::Vector4d qs = setpoint.orientation;
  if (qs.dot(lag_quat_) < 0.0) qs = -qs;
  lag_quat_ = (lag_quat_ + a * (qs - lag_quat_)).normalized();

  const Eigen::Vector3d pos = lag_pos_ + displacement();
  const Eigen::Vector3d vel = (pos - prev_pos_) / dt;
  prev_pos_ = pos;
  if (!held_object_.empty()) scene_.objects[held_object_].position = pos - held_offset_;

  Eigen::Vector3d force = cfg_.stiffness * (setpoint.position - pos);
  force.z() -= held_mass_ * kGravity;
  force -= held_damping_ * vel;
  for (const auto& act : active_)
    force += pulse_force(act.profile, time_ - act.start) * act.profile.direction;
  Eigen::Vector3d torque = quat_rotate(lag_quat_, kSensorLever).cross(force);

  obs::Observation o;
  o.t = time_;
  o.position = pos;
  o.orientation = lag_quat_;
  if (o.orientation[0] < 0.0) o.orientation = -o.orientation;
  o.force = force;
  o.torque = torque;
  if (cfg_.noise) {
    std::normal_distribution<double> n(0.0, 1.0);
    for (int i = 0; i < 3; ++i) o.position[i] += cfg_.sigma_position * n(rng_);
    for (int i = 0; i < 3; ++i) o.force[i] += cfg_.sigma_force * n(rng_);
    for (int i = 0; i < 3; ++i) o.torque[i] += cfg_.sigma_torque * n(rng_);
  }

  // A pulse that went by without the node being reverted: queue the next
  // one for this attempt after a short gap.
  if (!armed_ && !node_id_.empty() && !pulse_in_progress()) arm_next(time_ + gap_min_, time_ + gap_max_);
  return o;
}

void SimPlant::on_command() {
  // The arm stays where it was knocked to and tracks new commands from there.
  const Eigen::Vector3d d = displacement();
  lag_pos_ += d;
  for (auto& act : active_) act.absorbed = ramp((time_ - act.start) / pulse_length(act.profile));
  std::erase_if(active_, [&](const Active& act) {
    return time_ - act.start > pulse_length(act.profile);
  });
}

void SimPlant::on_node_entered(const task::Node& node, int, double motion_duration) {
  node_id_ = node.id;
  node_skill_ = node.skill_id;
  const double span = std::max(motion_duration, 0.1);
  arm_next(time_ + 0.05 * span, time_ + 0.95 * span);
}

bool SimPlant::node_may_complete() const {
  if (armed_ || pulse_in_progress()) return false;
  const auto it = queues_.find(node_id_);
  return it == queues_.end() || it->second.empty();
}

void SimPlant::release() {
  if (held_object_.empty()) return;
  auto& obj = scene_.objects[held_object_];
  if (held_mass_ > 0.0) obj.position.z() = std::max(0.0, obj.position.z());
  if (const auto it = scene_.rest.find(held_object_); it != scene_.rest.end()) obj = it->second;
  held_object_.clear();
  held_mass_ = 0.0;
  held_damping_ = 0.0;
}

void SimPlant::on_node_completed(const task::Node& node) {
  node_id_.clear();
  const auto it = scene_.actions.find(node.id);
  if (it == scene_.actions.end()) return;
  const auto& act = it->second;
  if (act.action == NodeAction::grasp) {
    held_object_ = act.object;
    held_offset_ = pose().position - scene_.objects.at(act.object).position;
    held_mass_ = act.mass;
    held_damping_ = act.damping;
  } else if (held_object_ == act.object) {
    release();
  }
}

void SimPlant::on_recovery(const std::string&, const std::string&,
                           const std::vector<std::string>& undone) {
  if (armed_) {
    queues_[node_id_].push_front(armed_->second);
    armed_.reset();
  }
  node_id_.clear();
  for (const auto& id : undone) {
    const auto it = scene_.actions.find(id);
    if (it != scene_.actions.end() && it->second.action == NodeAction::grasp &&
        it->second.object == held_object_) {
      // Reverting past the grasp: let go where the object is; a dropped
      // block lands on the table.
      if (held_mass_ > 0.0) scene_.objects[held_object_].position.z() = 0.0;
      release();
    }
  }
}

PlantState SimPlant::state() const {
  return {pose(), held_object_, scene_.objects, time_, cfg_.seed};
}

}  // namespace revert::sim
