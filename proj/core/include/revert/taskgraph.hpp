#pragma once

#include "revert/common.hpp"
#include "revert/obsdata.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

/// Milestone task graphs with manually annotated state dependencies, and the
/// execution trace they produce.
namespace revert::task {

struct MotionSpec {
  enum class Kind { spline, dmp };
  Kind kind = Kind::spline;
  double duration = 1.0;  ///< spline only, seconds
  std::string name;       ///< dmp only: parameter file stem
};

struct GoalSpec {
  enum class Kind { fixed, scene };
  Kind kind = Kind::fixed;
  obs::Pose pose;      ///< fixed goals
  std::string object;  ///< scene goals: queried from the plant on entry
};

struct Node {
  std::string id;
  std::string skill_id;
  MotionSpec motion;
  GoalSpec goal;
  std::optional<std::string> dependency;
};

/// Dependency pointers that loop back on themselves.
class DependencyCycleError : public ValidationError {
 public:
  explicit DependencyCycleError(std::vector<std::string> cycle);
  const std::vector<std::string>& cycle() const noexcept { return cycle_; }

 private:
  std::vector<std::string> cycle_;
};

class TaskGraph {
 public:
  /// Validates references, reachability, successor acyclicity and
  /// dependency acyclicity.
  TaskGraph(std::vector<Node> nodes, std::vector<std::pair<std::string, std::string>> edges,
            std::string entry);

  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  const std::vector<std::pair<std::string, std::string>>& edges() const noexcept {
    return edges_;
  }
  const std::string& entry() const noexcept { return entry_; }

  const Node& node(const std::string& id) const;
  bool contains(const std::string& id) const;
  /// First listed successor, if any.
  std::optional<std::string> successor(const std::string& id) const;
  /// Node ids visited by following first successors from the entry.
  std::vector<std::string> execution_order() const;
  /// Distinct skill ids in execution order.
  std::vector<std::string> skills() const;

 private:
  std::optional<std::size_t> find(const std::string& id) const;

  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, std::string>> edges_;
  std::string entry_;
};

TaskGraph parse_graph(std::istream& is);
TaskGraph load_graph(const std::filesystem::path& path);
void write_graph(std::ostream& os, const TaskGraph& g);

/// Follows dependency pointers to the first node without one; a node without
/// a dependency resolves to itself.
std::string resolve_recovery_target(const TaskGraph& g, const std::string& anomalous);

enum class EventKind {
  node_entered,
  node_completed,
  anomaly_flagged,
  recovery_started,
  task_completed,
  task_failed
};

std::string to_string(EventKind k);
EventKind event_kind_from_string(const std::string& s);

struct Event {
  EventKind kind = EventKind::node_entered;
  double sim_time = 0.0;   ///< seconds on the plant clock
  double wall_time = 0.0;  ///< seconds since execution start; not persisted
  std::string node;        ///< recovery_started: source node
  std::string skill;
  std::string target;      ///< recovery_started only
  int attempt = 0;         ///< node_entered only
  double statistic = 0.0;  ///< anomaly_flagged only
  std::string reason;      ///< task_failed only
};

struct ExecutionTrace {
  std::vector<Event> events;

  bool completed() const;
  bool failed() const;
  std::size_t count(EventKind k) const;
};

/// One event per line. Only the plant clock is written, so traces of seeded
/// runs are byte-reproducible.
void write_event(std::ostream& os, const Event& e);
Event parse_event(const std::vector<std::string>& tokens, std::size_t first, std::size_t line);
void write_trace(std::ostream& os, const ExecutionTrace& trace);
ExecutionTrace read_trace(std::istream& is);

/// Structural checks: every recovery_started directly follows an
/// anomaly_flagged of the same node, nodes are completed only after being
/// entered, and the trace ends in exactly one terminal event. Returns an
/// empty string when well-formed.
std::string check_trace(const ExecutionTrace& trace);

}  // namespace revert::task
