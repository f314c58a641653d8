#include "revert/taskgraph.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace revert;
namespace tk = revert::task;

namespace {

const std::string kDataDir = REVERT_DATA_DIR;

tk::TaskGraph graph_from(const std::string& text) {
  std::stringstream ss(text);
  return tk::parse_graph(ss);
}

const char* kChain =
    "node a skill=s motion=spline:1 goal=static:0,0,0,1,0,0,0 dep=none\n"
    "node b skill=s motion=spline:1 goal=static:0,0,0,1,0,0,0 dep=a\n"
    "node c skill=t motion=spline:1 goal=static:0,0,0,1,0,0,0 dep=b\n"
    "edge a b\nedge b c\nentry a\n";

tk::Event ev(tk::EventKind k, double t, std::string node = {}, std::string target = {}) {
  tk::Event e;
  e.kind = k;
  e.sim_time = t;
  e.node = std::move(node);
  e.skill = e.node.empty() ? "" : "s";
  e.target = std::move(target);
  if (k == tk::EventKind::task_failed) e.reason = "anomaly";
  return e;
}

}  // namespace

TEST(GraphLoad, PickAndPlaceOrder) {
  const auto g = tk::load_graph(kDataDir + "/graphs/pick_place.graph");
  const std::vector<std::string> want = {"pre-pick", "pick", "pre-pick-retract", "pre-place",
                                         "place"};
  EXPECT_EQ(g.execution_order(), want);
  EXPECT_EQ(g.node("pre-pick-retract").skill_id, g.node("pre-pick").skill_id);
  EXPECT_EQ(g.skills().size(), 4u);
}

TEST(GraphLoad, DrawerOrder) {
  const auto g = tk::load_graph(kDataDir + "/graphs/drawer.graph");
  const std::vector<std::string> want = {"pre-grip", "grip", "pull-to-open", "push-to-close",
                                         "go-back-to-start"};
  EXPECT_EQ(g.execution_order(), want);
  EXPECT_EQ(g.node("pre-grip").motion.kind, tk::MotionSpec::Kind::dmp);
  EXPECT_EQ(g.node("pre-grip").motion.name, "handle_approach");
}

TEST(GraphLoad, MutualDependencyIsACycle) {
  const std::string text =
      "node a skill=s motion=spline:1 goal=static:0,0,0,1,0,0,0 dep=b\n"
      "node b skill=s motion=spline:1 goal=static:0,0,0,1,0,0,0 dep=a\n"
      "edge a b\nentry a\n";
  try {
    graph_from(text);
    FAIL() << "expected a cycle";
  } catch (const tk::DependencyCycleError& e) {
    const std::vector<std::string> want = {"a", "b", "a"};
    EXPECT_EQ(e.cycle(), want);
  }
}

TEST(GraphLoad, DanglingReferencesAreRejected) {
  EXPECT_THROW(graph_from("node a skill=s motion=spline:1 goal=static:0,0,0,1,0,0,0 dep=zz\n"
                          "entry a\n"),
               ValidationError);
  EXPECT_THROW(graph_from("node a skill=s motion=spline:1 goal=static:0,0,0,1,0,0,0 dep=none\n"
                          "edge a q\nentry a\n"),
               ValidationError);
  EXPECT_THROW(graph_from("node a skill=s motion=spline:1 goal=static:0,0,0,1,0,0,0 dep=none\n"
                          "entry q\n"),
               ValidationError);
}

TEST(GraphLoad, WriteThenParseIsStable) {
  const auto g = tk::load_graph(kDataDir + "/graphs/drawer.graph");
  std::stringstream a;
  tk::write_graph(a, g);
  std::stringstream b;
  tk::write_graph(b, graph_from(a.str()));
  EXPECT_EQ(a.str(), b.str());
}

TEST(RecoveryTarget, PickRevertsToPrePick) {
  const auto g = tk::load_graph(kDataDir + "/graphs/pick_place.graph");
  EXPECT_EQ(tk::resolve_recovery_target(g, "pick"), "pre-pick");
  EXPECT_EQ(tk::resolve_recovery_target(g, "place"), "pre-place");
}

TEST(RecoveryTarget, NodeWithoutDependencyIsItself) {
  const auto g = graph_from(kChain);
  EXPECT_EQ(tk::resolve_recovery_target(g, "a"), "a");
}

TEST(RecoveryTarget, ChainResolvesToItsRoot) {
  const auto g = graph_from(kChain);
  EXPECT_EQ(tk::resolve_recovery_target(g, "c"), "a");
  EXPECT_EQ(tk::resolve_recovery_target(g, "b"), "a");
}

TEST(RecoveryTarget, IsAFixpointOnShippedGraphs) {
  for (const char* name : {"pick_place", "drawer"}) {
    const auto g = tk::load_graph(kDataDir + "/graphs/" + name + ".graph");
    for (const auto& n : g.nodes()) {
      const auto t = tk::resolve_recovery_target(g, n.id);
      EXPECT_EQ(tk::resolve_recovery_target(g, t), t);
      EXPECT_FALSE(g.node(t).dependency.has_value());
    }
  }
}

TEST(Trace, RoundTripPreservesPersistedFields) {
  tk::ExecutionTrace tr;
  tr.events.push_back(ev(tk::EventKind::node_entered, 0.0, "a"));
  tr.events.back().attempt = 1;
  auto flag = ev(tk::EventKind::anomaly_flagged, 0.735, "a");
  flag.statistic = 812.25;
  tr.events.push_back(flag);
  tr.events.push_back(ev(tk::EventKind::recovery_started, 0.735, "a", "a"));
  tr.events.push_back(ev(tk::EventKind::node_entered, 2.1, "a"));
  tr.events.back().attempt = 2;
  tr.events.push_back(ev(tk::EventKind::node_completed, 3.5, "a"));
  tr.events.push_back(ev(tk::EventKind::task_completed, 3.5));
  tr.events[1].wall_time = 99.0;
  std::stringstream ss;
  tk::write_trace(ss, tr);
  const auto back = tk::read_trace(ss);
  ASSERT_EQ(back.events.size(), tr.events.size());
  for (std::size_t i = 0; i < tr.events.size(); ++i) {
    EXPECT_EQ(back.events[i].kind, tr.events[i].kind);
    EXPECT_EQ(back.events[i].sim_time, tr.events[i].sim_time);
    EXPECT_EQ(back.events[i].node, tr.events[i].node);
    EXPECT_EQ(back.events[i].attempt, tr.events[i].attempt);
    EXPECT_EQ(back.events[i].target, tr.events[i].target);
    EXPECT_EQ(back.events[i].statistic, tr.events[i].statistic);
    EXPECT_EQ(back.events[i].wall_time, 0.0);
  }
  EXPECT_TRUE(back.completed());
  EXPECT_EQ(back.count(tk::EventKind::node_entered), 2u);
  EXPECT_EQ(tk::check_trace(back), "");
}

TEST(Trace, EventKindNamesRoundTrip) {
  for (auto k : {tk::EventKind::node_entered, tk::EventKind::node_completed,
                 tk::EventKind::anomaly_flagged, tk::EventKind::recovery_started,
                 tk::EventKind::task_completed, tk::EventKind::task_failed})
    EXPECT_EQ(tk::event_kind_from_string(tk::to_string(k)), k);
  EXPECT_THROW(tk::event_kind_from_string("exploded"), Error);
}

TEST(Trace, RecoveryWithoutFlagIsMalformed) {
  tk::ExecutionTrace tr;
  tr.events = {ev(tk::EventKind::node_entered, 0.0, "a"),
               ev(tk::EventKind::recovery_started, 0.5, "a", "a"),
               ev(tk::EventKind::task_completed, 1.0)};
  EXPECT_NE(tk::check_trace(tr), "");
}

TEST(Trace, CompletionWithoutEntryIsMalformed) {
  tk::ExecutionTrace tr;
  tr.events = {ev(tk::EventKind::node_completed, 0.5, "a"), ev(tk::EventKind::task_completed, 1.0)};
  EXPECT_NE(tk::check_trace(tr), "");
}

TEST(Trace, MissingTerminalEventIsMalformed) {
  tk::ExecutionTrace tr;
  tr.events = {ev(tk::EventKind::node_entered, 0.0, "a")};
  EXPECT_NE(tk::check_trace(tr), "");
  tr.events.push_back(ev(tk::EventKind::task_failed, 1.0, "a"));
  EXPECT_EQ(tk::check_trace(tr), "");
  EXPECT_TRUE(tr.failed());
}
