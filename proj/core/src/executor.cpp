#include "revert/executor.hpp"

#include <chrono>
#include <cmath>

namespace revert::task {

namespace {

double wall_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

}  // namespace

obs::Pose pose_from_vector(const Eigen::Ref<const Vec>& v) {
  obs::Pose p;
  p.position = v.head<3>();
  p.orientation = v.segment<4>(3).normalized();
  return p;
}

Vec pose_to_vector(const obs::Pose& p) {
  Vec v(7);
  v << p.position, p.orientation;
  return v;
}

Executor::Executor(const TaskGraph& graph, Plant& plant, introspect::Monitor* monitor,
                   ExecutorConfig config)
    : graph_(graph), plant_(plant), monitor_(monitor), cfg_(std::move(config)) {
  if (cfg_.max_recoveries_per_node < 0) throw ValidationError("recovery cap must be >= 0");
  if (cfg_.monitoring) {
    if (!monitor_) throw ValidationError("monitoring enabled without a monitor");
    for (const auto& n : graph_.nodes())
      if (!monitor_->index_of(n.skill_id))
        throw ValidationError("missing calibration for skill '" + n.skill_id + "'");
  }
}

const motion::DmpParams& Executor::dmp(const std::string& name) {
  auto it = dmps_.find(name);
  if (it == dmps_.end())
    it = dmps_.emplace(name, motion::load_dmp(cfg_.motion_dir / (name + ".dmp"))).first;
  return it->second;
}

motion::Trajectory Executor::node_motion(const Node& node, const obs::Pose& entry,
                                         const obs::Pose& goal) {
  Vec start = pose_to_vector(entry);
  Vec end = pose_to_vector(goal);
  if (start.segment<4>(3).dot(end.segment<4>(3)) < 0.0) end.segment<4>(3) *= -1.0;
  motion::Trajectory traj;
  if (node.motion.kind == MotionSpec::Kind::spline) {
    traj = motion::spline_interp({{0.0, start}, {node.motion.duration, end}}, plant_.rate_hz());
  } else {
    const auto& p = dmp(node.motion.name);
    if (p.dims() != 7) throw ValidationError("DMP '" + node.motion.name + "' is not a pose DMP");
    traj = motion::dmp_rollout(p, start, end, p.tau, plant_.rate_hz());
  }
  motion::normalize_quaternions(traj);
  return traj;
}

void Executor::record(ExecutionTrace& trace, Event e) {
  e.sim_time = plant_.time();
  e.wall_time = wall_seconds() - wall_start_;
  trace.events.push_back(std::move(e));
}

Executor::Outcome Executor::run_node(const Node& node, int attempt, ExecutionTrace& trace) {
  const obs::Pose entry = plant_.pose();
  entry_poses_.try_emplace(node.id, entry);
  const obs::Pose goal =
      node.goal.kind == GoalSpec::Kind::scene ? plant_.query_goal(node.goal.object) : node.goal.pose;
  const auto traj = node_motion(node, entry, goal);

  plant_.on_command();
  plant_.on_node_entered(node, attempt, traj.duration());
  if (cfg_.monitoring) monitor_->reset(node.skill_id);
  Event entered;
  entered.kind = EventKind::node_entered;
  entered.node = node.id;
  entered.skill = node.skill_id;
  entered.attempt = attempt;
  record(trace, entered);

  const auto settle_steps = static_cast<Eigen::Index>(std::llround(cfg_.settle_time * plant_.rate_hz()));
  const double t_start = plant_.time();
  const obs::Pose hold = pose_from_vector(traj.positions.col(traj.size() - 1));
  for (Eigen::Index i = 0;; ++i) {
    const obs::Pose setpoint = i < traj.size() ? pose_from_vector(traj.positions.col(i)) : hold;
    const auto o = plant_.step(setpoint);
    if (on_sample_) on_sample_(node, attempt, o);
    if (cfg_.monitoring) {
      monitor_->score_step(obs::to_feature_vector(o));
      const auto r = monitor_->detect();
      if (r.status == introspect::Status::anomaly) {
        last_statistic_ = r.statistic;
        return Outcome::anomaly;
      }
    }
    if (i + 1 >= traj.size() + settle_steps && plant_.settled() && plant_.node_may_complete())
      return Outcome::completed;
    if (plant_.time() - t_start > cfg_.max_node_time) return Outcome::timeout;
  }
}

void Executor::run_recovery(const obs::Pose& target) {
  plant_.on_command();
  const obs::Pose from = plant_.pose();
  const double dist = (target.position - from.position).norm();
  const double duration = std::max(cfg_.recovery_min_duration, cfg_.recovery_seconds_per_meter * dist);
  Vec a = pose_to_vector(from);
  Vec b = pose_to_vector(target);
  if (a.segment<4>(3).dot(b.segment<4>(3)) < 0.0) b.segment<4>(3) *= -1.0;
  auto traj = motion::spline_interp({{0.0, a}, {duration, b}}, plant_.rate_hz());
  motion::normalize_quaternions(traj);
  // The recovery controller corrects any knock that is still in progress,
  // then comes to rest as a completed node would before re-entering.
  for (Eigen::Index i = 0; i < traj.size(); ++i) {
    plant_.on_command();
    plant_.step(pose_from_vector(traj.positions.col(i)));
  }
  const obs::Pose hold = pose_from_vector(traj.positions.col(traj.size() - 1));
  const auto settle_steps = std::llround(cfg_.settle_time * plant_.rate_hz());
  const auto max_settle = std::llround(cfg_.max_node_time * plant_.rate_hz());
  for (long long i = 0; i < max_settle && (i < settle_steps || !plant_.settled()); ++i) {
    plant_.on_command();
    plant_.step(hold);
  }
}

ExecutionTrace Executor::run() {
  ExecutionTrace trace;
  wall_start_ = wall_seconds();
  entry_poses_.clear();
  std::map<std::string, int> recoveries;
  std::map<std::string, int> attempts;
  const auto order = graph_.execution_order();
  std::string current = graph_.entry();
  while (true) {
    const Node& node = graph_.node(current);
    const int attempt = ++attempts[current];
    const auto outcome = run_node(node, attempt, trace);
    if (outcome == Outcome::timeout) {
      Event e;
      e.kind = EventKind::task_failed;
      e.node = current;
      e.skill = node.skill_id;
      e.reason = "timeout";
      record(trace, e);
      return trace;
    }
    if (outcome == Outcome::completed) {
      plant_.on_node_completed(node);
      Event e;
      e.kind = EventKind::node_completed;
      e.node = current;
      e.skill = node.skill_id;
      record(trace, e);
      const auto next = graph_.successor(current);
      if (!next) {
        Event done;
        done.kind = EventKind::task_completed;
        record(trace, done);
        return trace;
      }
      current = *next;
      continue;
    }

    Event flag;
    flag.kind = EventKind::anomaly_flagged;
    flag.node = current;
    flag.skill = node.skill_id;
    flag.statistic = last_statistic_;
    record(trace, flag);
    if (++recoveries[current] > cfg_.max_recoveries_per_node) {
      Event e;
      e.kind = EventKind::task_failed;
      e.node = current;
      e.skill = node.skill_id;
      e.reason = cfg_.max_recoveries_per_node == 0 ? "anomaly" : "recovery_limit";
      record(trace, e);
      return trace;
    }
    const std::string target = resolve_recovery_target(graph_, current);
    Event rec;
    rec.kind = EventKind::recovery_started;
    rec.node = current;
    rec.skill = node.skill_id;
    rec.target = target;
    record(trace, rec);

    std::vector<std::string> undone;
    bool in_range = false;
    for (const auto& id : order) {
      if (id == target) in_range = true;
      if (in_range) undone.push_back(id);
      if (id == current) break;
    }
    plant_.on_recovery(current, target, undone);
    run_recovery(entry_poses_.at(target));
    current = target;
  }
}

ExecutionTrace execute(const TaskGraph& graph, Plant& plant, introspect::Monitor* monitor,
                       const ExecutorConfig& config) {
  return Executor(graph, plant, monitor, config).run();
}

}  // namespace revert::task
