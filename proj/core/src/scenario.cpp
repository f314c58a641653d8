#include "revert/scenario.hpp"

#include "revert/textio.hpp"

#include <fstream>
#include <ostream>

namespace revert::sim {

std::string to_string(Condition c) {
  switch (c) {
    case Condition::nominal: return "nominal";
    case Condition::anomaly_no_recovery: return "anomaly_no_recovery";
    case Condition::one_per_node: return "one_per_node";
    case Condition::multi_per_node: return "multi_per_node";
  }
  return "unknown";
}

Condition condition_from_string(const std::string& s) {
  for (auto c : {Condition::nominal, Condition::anomaly_no_recovery, Condition::one_per_node,
                 Condition::multi_per_node})
    if (to_string(c) == s) return c;
  throw ParseError("unknown condition '" + s + "'", 0);
}

namespace {

void check_range(const Range& r, const std::string& what, double floor) {
  if (!(r.lo >= floor) || !(r.hi >= r.lo))
    throw ValidationError(what + " range must satisfy " + textio::fmt(floor) + " <= lo <= hi");
}

double draw(const Range& r, Rng& rng) {
  if (r.hi == r.lo) return r.lo;
  std::uniform_real_distribution<double> u(r.lo, r.hi);
  return u(rng);
}

}  // namespace

void validate(const Scenario& s) {
  if (s.trials < 0) throw ValidationError("trial count must be >= 0");
  if (s.condition == Condition::multi_per_node && s.repeats < 2)
    throw ValidationError("multi_per_node needs at least 2 injections per node");
  check_range(s.ranges.amplitude, "amplitude", 0.0);
  check_range(s.ranges.deviation, "deviation", 0.0);
  check_range(s.ranges.duration, "duration", 1e-6);
  check_range(s.ranges.weak_amplitude, "weak amplitude", 0.0);
  check_range(s.ranges.weak_deviation, "weak deviation", 0.0);
  if (!(s.ranges.weak_fraction >= 0.0 && s.ranges.weak_fraction <= 1.0))
    throw ValidationError("weak fraction must lie in [0, 1]");
  for (const auto& [node, o] : s.overrides) {
    if (o.count && *o.count < 0) throw ValidationError("override count for '" + node + "' is negative");
    if (s.condition == Condition::one_per_node && o.count && *o.count != 1)
      throw ValidationError("one_per_node requires exactly one injection per node");
    if (s.condition == Condition::multi_per_node && o.count && *o.count < 2)
      throw ValidationError("multi_per_node requires at least two injections per node");
  }
}

int injections_per_node(const Scenario& s) {
  switch (s.condition) {
    case Condition::nominal: return 0;
    case Condition::anomaly_no_recovery:
    case Condition::one_per_node: return 1;
    case Condition::multi_per_node: return s.repeats;
  }
  return 0;
}

Scenario parse_scenario(std::istream& is) {
  textio::LineReader in(is);
  Scenario s;
  std::string line;
  auto range = [&](const std::vector<std::string>& tok, std::size_t ln) {
    if (tok.size() != 3) throw ParseError("'" + tok[0] + "' needs lo and hi", ln);
    return Range{textio::parse_double(tok[1], ln), textio::parse_double(tok[2], ln)};
  };
  while (in.next(line)) {
    const auto tok = textio::split_ws(line);
    const auto ln = in.line_no();
    const auto& key = tok[0];
    auto one = [&]() -> const std::string& {
      if (tok.size() != 2) throw ParseError("'" + key + "' takes one value", ln);
      return tok[1];
    };
    if (key == "scenario") {
      s.name = one();
    } else if (key == "condition") {
      try {
        s.condition = condition_from_string(one());
      } catch (const ParseError& e) {
        throw ParseError(e.what(), ln);
      }
    } else if (key == "scene") {
      s.scene = one();
    } else if (key == "graph") {
      s.graph = one();
    } else if (key == "trials") {
      s.trials = static_cast<int>(textio::parse_long(one(), ln));
    } else if (key == "seed") {
      s.seed = static_cast<std::uint64_t>(textio::parse_long(one(), ln));
    } else if (key == "repeats") {
      s.repeats = static_cast<int>(textio::parse_long(one(), ln));
    } else if (key == "kind") {
      try {
        s.ranges.kind = disturbance_kind_from_string(one());
      } catch (const ParseError& e) {
        throw ParseError(e.what(), ln);
      }
    } else if (key == "amplitude") {
      s.ranges.amplitude = range(tok, ln);
    } else if (key == "deviation") {
      s.ranges.deviation = range(tok, ln);
    } else if (key == "duration") {
      s.ranges.duration = range(tok, ln);
    } else if (key == "weak_fraction") {
      s.ranges.weak_fraction = textio::parse_double(one(), ln);
    } else if (key == "weak_amplitude") {
      s.ranges.weak_amplitude = range(tok, ln);
    } else if (key == "weak_deviation") {
      s.ranges.weak_deviation = range(tok, ln);
    } else if (key == "override") {
      if (tok.size() < 3) throw ParseError("override needs a node and key=value pairs", ln);
      const auto kv = textio::parse_kv(tok, 2, ln);
      NodeOverride o;
      for (const auto& [k, v] : kv) {
        if (k == "count") o.count = static_cast<int>(textio::parse_long(v, ln));
        else if (k == "amplitude") o.amplitude = textio::parse_double(v, ln);
        else if (k == "deviation") o.deviation = textio::parse_double(v, ln);
        else if (k == "duration") o.duration = textio::parse_double(v, ln);
        else throw ParseError("unknown override key '" + k + "'", ln);
      }
      s.overrides[tok[1]] = o;
    } else {
      throw ParseError("unknown scenario key '" + key + "'", ln);
    }
  }
  validate(s);
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path.string());
  return parse_scenario(is);
}

void write_scenario(std::ostream& os, const Scenario& s) {
  auto range = [&](const char* key, const Range& r) {
    os << key << ' ' << textio::fmt(r.lo) << ' ' << textio::fmt(r.hi) << '\n';
  };
  os << "scenario " << s.name << '\n';
  os << "condition " << to_string(s.condition) << '\n';
  os << "scene " << s.scene << '\n';
  if (!s.graph.empty()) os << "graph " << s.graph << '\n';
  os << "trials " << s.trials << '\n';
  os << "seed " << s.seed << '\n';
  os << "repeats " << s.repeats << '\n';
  os << "kind " << to_string(s.ranges.kind) << '\n';
  range("amplitude", s.ranges.amplitude);
  range("deviation", s.ranges.deviation);
  range("duration", s.ranges.duration);
  os << "weak_fraction " << textio::fmt(s.ranges.weak_fraction) << '\n';
  range("weak_amplitude", s.ranges.weak_amplitude);
  range("weak_deviation", s.ranges.weak_deviation);
  for (const auto& [node, o] : s.overrides) {
    os << "override " << node;
    if (o.count) os << " count=" << *o.count;
    if (o.amplitude) os << " amplitude=" << textio::fmt(*o.amplitude);
    if (o.deviation) os << " deviation=" << textio::fmt(*o.deviation);
    if (o.duration) os << " duration=" << textio::fmt(*o.duration);
    os << '\n';
  }
}

QueuedDisturbance draw_disturbance(const ProfileRanges& r, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  QueuedDisturbance q;
  q.weak = u(rng) < r.weak_fraction;
  q.profile.kind = r.kind;
  q.profile.amplitude = draw(q.weak ? r.weak_amplitude : r.amplitude, rng);
  q.profile.pose_deviation = draw(q.weak ? r.weak_deviation : r.deviation, rng);
  q.profile.duration = draw(r.duration, rng);
  q.profile.direction = random_direction(rng);
  return q;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

TrialResult run_trial(const Scenario& scenario, const task::TaskGraph& graph,
                      const System& system, int trial, std::ostream* monitor_log) {
  TrialResult result;
  result.seed = derive_seed(scenario.seed, static_cast<std::uint64_t>(trial));
  Rng scene_rng(derive_seed(result.seed, 1));
  Rng draw_rng(derive_seed(result.seed, 2));

  SimConfig pc = system.plant;
  pc.seed = derive_seed(result.seed, 3);
  SimPlant plant(pc, scene_preset(scenario.scene, scene_rng));

  const int per_node = injections_per_node(scenario);
  for (const auto& id : graph.execution_order()) {
    int count = per_node;
    const auto ov = scenario.overrides.find(id);
    if (ov != scenario.overrides.end() && ov->second.count && per_node > 0) count = *ov->second.count;
    std::vector<QueuedDisturbance> queue;
    for (int i = 0; i < count; ++i) {
      auto q = draw_disturbance(scenario.ranges, draw_rng);
      if (ov != scenario.overrides.end()) {
        const auto& o = ov->second;
        if (o.amplitude) q.profile.amplitude = *o.amplitude;
        if (o.deviation) q.profile.pose_deviation = *o.deviation;
        if (o.duration) q.profile.duration = *o.duration;
        if (o.amplitude || o.deviation) q.weak = false;
      }
      queue.push_back(q);
    }
    if (!queue.empty()) plant.schedule(id, std::move(queue));
  }

  std::vector<const hmm::SkillModel*> models;
  std::vector<const introspect::ThresholdModel*> thresholds;
  for (const auto& m : system.models) {
    models.push_back(&m);
    const introspect::ThresholdModel* th = nullptr;
    for (const auto& t : system.thresholds)
      if (t.skill_id == m.skill_id()) th = &t;
    thresholds.push_back(th);
  }
  task::ExecutorConfig ec = system.executor;
  if (scenario.condition == Condition::anomaly_no_recovery) ec.max_recoveries_per_node = 0;

  std::optional<introspect::Monitor> monitor;
  if (ec.monitoring) {
    monitor.emplace(models, thresholds);
    monitor->set_log(monitor_log);
  }
  result.trace = task::execute(graph, plant, monitor ? &*monitor : nullptr, ec);
  result.truth = plant.fired();
  return result;
}

std::vector<TrialResult> run_scenario(const Scenario& scenario, const task::TaskGraph& graph,
                                      const System& system) {
  validate(scenario);
  std::vector<TrialResult> out;
  out.reserve(static_cast<std::size_t>(scenario.trials));
  for (int i = 0; i < scenario.trials; ++i) out.push_back(run_trial(scenario, graph, system, i));
  return out;
}

}  // namespace revert::sim
