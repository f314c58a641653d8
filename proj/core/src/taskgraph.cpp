#include "revert/taskgraph.hpp"

#include "revert/textio.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <ostream>
#include <set>

namespace revert::task {

namespace {

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

MotionSpec parse_motion(const std::string& ref, std::size_t line) {
  const auto colon = ref.find(':');
  if (colon == std::string::npos) throw ParseError("motion ref must be spline:<s> or dmp:<name>", line);
  const auto kind = ref.substr(0, colon);
  const auto arg = ref.substr(colon + 1);
  MotionSpec m;
  if (kind == "spline") {
    m.kind = MotionSpec::Kind::spline;
    m.duration = textio::parse_double(arg, line);
    if (!(m.duration > 0.0)) throw ParseError("spline duration must be positive", line);
  } else if (kind == "dmp") {
    m.kind = MotionSpec::Kind::dmp;
    if (arg.empty()) throw ParseError("dmp motion needs a name", line);
    m.name = arg;
  } else {
    throw ParseError("unknown motion kind '" + kind + "'", line);
  }
  return m;
}

GoalSpec parse_goal(const std::string& ref, std::size_t line) {
  const auto colon = ref.find(':');
  if (colon == std::string::npos) throw ParseError("goal must be static:<pose> or scene:<object>", line);
  const auto kind = ref.substr(0, colon);
  const auto arg = ref.substr(colon + 1);
  GoalSpec g;
  if (kind == "static") {
    const auto parts = textio::split(arg, ',');
    if (parts.size() != 7) throw ParseError("static goal needs x,y,z,qw,qx,qy,qz", line);
    for (int i = 0; i < 3; ++i) g.pose.position[i] = textio::parse_double(parts[static_cast<std::size_t>(i)], line);
    for (int i = 0; i < 4; ++i)
      g.pose.orientation[i] = textio::parse_double(parts[static_cast<std::size_t>(i + 3)], line);
    const double n = g.pose.orientation.norm();
    if (std::abs(n - 1.0) > 1e-6) throw ParseError("static goal quaternion is not unit norm", line);
  } else if (kind == "scene") {
    g.kind = GoalSpec::Kind::scene;
    if (arg.empty()) throw ParseError("scene goal needs an object name", line);
    g.object = arg;
  } else {
    throw ParseError("unknown goal kind '" + kind + "'", line);
  }
  return g;
}

}  // namespace

DependencyCycleError::DependencyCycleError(std::vector<std::string> cycle)
    : ValidationError("dependency cycle: " + join(cycle, " -> ")), cycle_(std::move(cycle)) {}

TaskGraph::TaskGraph(std::vector<Node> nodes,
                     std::vector<std::pair<std::string, std::string>> edges, std::string entry)
    : nodes_(std::move(nodes)), edges_(std::move(edges)), entry_(std::move(entry)) {
  if (nodes_.empty()) throw ValidationError("task graph has no nodes");
  std::set<std::string> ids;
  for (const auto& n : nodes_) {
    if (n.id.empty() || n.skill_id.empty()) throw ValidationError("node id and skill are required");
    if (!ids.insert(n.id).second) throw ValidationError("duplicate node '" + n.id + "'");
  }
  if (!ids.count(entry_)) throw ValidationError("entry node '" + entry_ + "' does not exist");
  for (const auto& [a, b] : edges_) {
    if (!ids.count(a)) throw ValidationError("edge references unknown node '" + a + "'");
    if (!ids.count(b)) throw ValidationError("edge references unknown node '" + b + "'");
  }
  for (const auto& n : nodes_)
    if (n.dependency && !ids.count(*n.dependency))
      throw ValidationError("node '" + n.id + "' depends on unknown node '" + *n.dependency + "'");

  // Dependency pointers: at most one per node, so walk each chain.
  for (const auto& n : nodes_) {
    std::vector<std::string> path{n.id};
    const Node* cur = &n;
    while (cur->dependency) {
      const auto& next = *cur->dependency;
      const auto it = std::find(path.begin(), path.end(), next);
      if (it != path.end()) {
        std::vector<std::string> cycle(it, path.end());
        cycle.push_back(next);
        throw DependencyCycleError(std::move(cycle));
      }
      path.push_back(next);
      cur = &node(next);
    }
  }

  // Successor relation: a DAG with every node reachable from the entry.
  std::map<std::string, int> state;  // 1 = on stack, 2 = done
  std::vector<std::string> stack;
  auto visit = [&](auto&& self, const std::string& id) -> void {
    state[id] = 1;
    stack.push_back(id);
    for (const auto& [a, b] : edges_) {
      if (a != id) continue;
      if (state[b] == 1) {
        auto it = std::find(stack.begin(), stack.end(), b);
        std::vector<std::string> cycle(it, stack.end());
        cycle.push_back(b);
        throw ValidationError("successor cycle: " + join(cycle, " -> "));
      }
      if (state[b] == 0) self(self, b);
    }
    stack.pop_back();
    state[id] = 2;
  };
  visit(visit, entry_);
  for (const auto& n : nodes_)
    if (state[n.id] != 2) throw ValidationError("node '" + n.id + "' is unreachable from the entry");
}

std::optional<std::size_t> TaskGraph::find(const std::string& id) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].id == id) return i;
  return std::nullopt;
}

const Node& TaskGraph::node(const std::string& id) const {
  const auto i = find(id);
  if (!i) throw ValidationError("unknown node '" + id + "'");
  return nodes_[*i];
}

bool TaskGraph::contains(const std::string& id) const { return find(id).has_value(); }

std::optional<std::string> TaskGraph::successor(const std::string& id) const {
  for (const auto& [a, b] : edges_)
    if (a == id) return b;
  return std::nullopt;
}

std::vector<std::string> TaskGraph::execution_order() const {
  std::vector<std::string> order{entry_};
  while (auto next = successor(order.back())) order.push_back(*next);
  return order;
}

std::vector<std::string> TaskGraph::skills() const {
  std::vector<std::string> out;
  for (const auto& id : execution_order()) {
    const auto& s = node(id).skill_id;
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  }
  return out;
}

TaskGraph parse_graph(std::istream& is) {
  textio::LineReader in(is);
  std::vector<Node> nodes;
  std::vector<std::pair<std::string, std::string>> edges;
  std::optional<std::string> entry;
  std::string line;
  while (in.next(line)) {
    const auto tok = textio::split_ws(line);
    const std::size_t ln = in.line_no();
    if (tok[0] == "node") {
      if (tok.size() < 2) throw ParseError("node needs an id", ln);
      const auto kv = textio::parse_kv(tok, 2, ln);
      Node n;
      n.id = tok[1];
      n.skill_id = textio::require_key(kv, "skill", ln);
      n.motion = parse_motion(textio::require_key(kv, "motion", ln), ln);
      n.goal = parse_goal(textio::require_key(kv, "goal", ln), ln);
      const auto& dep = textio::require_key(kv, "dep", ln);
      if (dep != "none") n.dependency = dep;
      nodes.push_back(std::move(n));
    } else if (tok[0] == "edge") {
      if (tok.size() != 3) throw ParseError("edge needs two node ids", ln);
      edges.emplace_back(tok[1], tok[2]);
    } else if (tok[0] == "entry") {
      if (tok.size() != 2) throw ParseError("entry needs one node id", ln);
      if (entry) throw ParseError("duplicate entry line", ln);
      entry = tok[1];
    } else {
      throw ParseError("unknown record '" + tok[0] + "'", ln);
    }
  }
  if (!entry) throw ParseError("graph has no entry line", in.line_no());
  return TaskGraph(std::move(nodes), std::move(edges), *entry);
}

TaskGraph load_graph(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path.string());
  return parse_graph(is);
}

void write_graph(std::ostream& os, const TaskGraph& g) {
  for (const auto& n : g.nodes()) {
    os << "node " << n.id << " skill=" << n.skill_id << " motion=";
    if (n.motion.kind == MotionSpec::Kind::spline)
      os << "spline:" << textio::fmt(n.motion.duration);
    else
      os << "dmp:" << n.motion.name;
    os << " goal=";
    if (n.goal.kind == GoalSpec::Kind::scene) {
      os << "scene:" << n.goal.object;
    } else {
      os << "static:";
      for (int i = 0; i < 3; ++i) os << textio::fmt(n.goal.pose.position[i]) << ',';
      for (int i = 0; i < 4; ++i) os << textio::fmt(n.goal.pose.orientation[i]) << (i < 3 ? "," : "");
    }
    os << " dep=" << n.dependency.value_or("none") << '\n';
  }
  for (const auto& [a, b] : g.edges()) os << "edge " << a << ' ' << b << '\n';
  os << "entry " << g.entry() << '\n';
}

std::string resolve_recovery_target(const TaskGraph& g, const std::string& anomalous) {
  const Node* cur = &g.node(anomalous);
  while (cur->dependency) cur = &g.node(*cur->dependency);
  return cur->id;
}

// --- traces -----------------------------------------------------------------

std::string to_string(EventKind k) {
  switch (k) {
    case EventKind::node_entered: return "node_entered";
    case EventKind::node_completed: return "node_completed";
    case EventKind::anomaly_flagged: return "anomaly_flagged";
    case EventKind::recovery_started: return "recovery_started";
    case EventKind::task_completed: return "task_completed";
    case EventKind::task_failed: return "task_failed";
  }
  return "unknown";
}

EventKind event_kind_from_string(const std::string& s) {
  for (auto k : {EventKind::node_entered, EventKind::node_completed, EventKind::anomaly_flagged,
                 EventKind::recovery_started, EventKind::task_completed, EventKind::task_failed})
    if (to_string(k) == s) return k;
  throw ParseError("unknown event '" + s + "'", 0);
}

bool ExecutionTrace::completed() const {
  return !events.empty() && events.back().kind == EventKind::task_completed;
}

bool ExecutionTrace::failed() const {
  return !events.empty() && events.back().kind == EventKind::task_failed;
}

std::size_t ExecutionTrace::count(EventKind k) const {
  return static_cast<std::size_t>(
      std::count_if(events.begin(), events.end(), [k](const Event& e) { return e.kind == k; }));
}

void write_event(std::ostream& os, const Event& e) {
  os << textio::fmt(e.sim_time) << ' ' << to_string(e.kind);
  switch (e.kind) {
    case EventKind::node_entered:
      os << ' ' << e.node << " skill=" << e.skill << " attempt=" << e.attempt;
      break;
    case EventKind::node_completed:
      os << ' ' << e.node << " skill=" << e.skill;
      break;
    case EventKind::anomaly_flagged:
      os << ' ' << e.node << " skill=" << e.skill << " f2=" << textio::fmt(e.statistic);
      break;
    case EventKind::recovery_started:
      os << ' ' << e.node << " skill=" << e.skill << " to=" << e.target;
      break;
    case EventKind::task_completed:
      break;
    case EventKind::task_failed:
      os << ' ' << (e.node.empty() ? "-" : e.node) << " reason=" << e.reason;
      break;
  }
  os << '\n';
}

Event parse_event(const std::vector<std::string>& tok, std::size_t first, std::size_t line) {
  if (tok.size() < first + 2) throw ParseError("event needs a time and a kind", line);
  Event e;
  e.sim_time = textio::parse_double(tok[first], line);
  try {
    e.kind = event_kind_from_string(tok[first + 1]);
  } catch (const ParseError& err) {
    throw ParseError(err.what(), line);
  }
  if (e.kind == EventKind::task_completed) return e;
  if (tok.size() < first + 3) throw ParseError("event needs a node", line);
  e.node = tok[first + 2];
  const auto kv = textio::parse_kv(tok, first + 3, line);
  switch (e.kind) {
    case EventKind::node_entered:
      e.skill = textio::require_key(kv, "skill", line);
      e.attempt = static_cast<int>(textio::parse_long(textio::require_key(kv, "attempt", line), line));
      break;
    case EventKind::node_completed:
      e.skill = textio::require_key(kv, "skill", line);
      break;
    case EventKind::anomaly_flagged:
      e.skill = textio::require_key(kv, "skill", line);
      e.statistic = textio::parse_double(textio::require_key(kv, "f2", line), line);
      break;
    case EventKind::recovery_started:
      e.skill = textio::require_key(kv, "skill", line);
      e.target = textio::require_key(kv, "to", line);
      break;
    case EventKind::task_failed:
      if (e.node == "-") e.node.clear();
      e.reason = textio::require_key(kv, "reason", line);
      break;
    case EventKind::task_completed:
      break;
  }
  return e;
}

void write_trace(std::ostream& os, const ExecutionTrace& trace) {
  for (const auto& e : trace.events) write_event(os, e);
}

ExecutionTrace read_trace(std::istream& is) {
  textio::LineReader in(is);
  ExecutionTrace trace;
  std::string line;
  while (in.next(line)) trace.events.push_back(parse_event(textio::split_ws(line), 0, in.line_no()));
  return trace;
}

std::string check_trace(const ExecutionTrace& trace) {
  if (trace.events.empty()) return "empty trace";
  std::string open;
  bool monitoring_off = false;
  for (std::size_t i = 0; i < trace.events.size(); ++i) {
    const auto& e = trace.events[i];
    const bool last = i + 1 == trace.events.size();
    const auto at = " (event " + std::to_string(i) + ")";
    if ((e.kind == EventKind::task_completed || e.kind == EventKind::task_failed) != last)
      return "terminal event not at the end" + at;
    if (i > 0 && e.sim_time < trace.events[i - 1].sim_time) return "time goes backwards" + at;
    switch (e.kind) {
      case EventKind::node_entered:
        open = e.node;
        monitoring_off = false;
        break;
      case EventKind::node_completed:
        if (e.node != open) return "node_completed without matching node_entered" + at;
        open.clear();
        break;
      case EventKind::anomaly_flagged:
        if (monitoring_off) return "anomaly flagged while monitoring was off" + at;
        if (e.node != open) return "anomaly_flagged outside its node" + at;
        break;
      case EventKind::recovery_started:
        if (i == 0 || trace.events[i - 1].kind != EventKind::anomaly_flagged ||
            trace.events[i - 1].node != e.node)
          return "recovery_started without a preceding anomaly_flagged" + at;
        open.clear();
        monitoring_off = true;
        break;
      case EventKind::task_completed:
      case EventKind::task_failed:
        break;
    }
  }
  return {};
}

}  // namespace revert::task
