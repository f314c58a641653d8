#include "revert/bench.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace revert;
namespace tk = revert::task;

namespace {

// Builds traces event by event on a running clock, recording injections as
// ground truth.
struct TraceBuilder {
  tk::ExecutionTrace trace;
  std::vector<bench::Injection> truth;
  double t = 0.0;

  void push(tk::EventKind k, const std::string& node, const std::string& target = {}) {
    tk::Event e;
    e.kind = k;
    e.sim_time = t;
    e.node = node;
    e.skill = node.empty() ? "" : "skill_" + node;
    e.target = target;
    if (k == tk::EventKind::task_failed) e.reason = "anomaly";
    trace.events.push_back(e);
  }
  void enter(const std::string& node) { push(tk::EventKind::node_entered, node); }
  void inject(const std::string& node) { truth.push_back({t, node, "skill_" + node}); }
  void flag(const std::string& node) { push(tk::EventKind::anomaly_flagged, node); }
  void recover(const std::string& node) { push(tk::EventKind::recovery_started, node, node); }
  void complete(const std::string& node) { push(tk::EventKind::node_completed, node); }
  void advance(double dt) { t += dt; }

  // One knock in a node: flagged and reverted, or absorbed without a flag.
  void knock(const std::string& node, bool detected) {
    enter(node);
    advance(0.4);
    inject(node);
    advance(0.3);
    if (detected) {
      flag(node);
      recover(node);
      advance(1.0);
    } else {
      advance(1.0);
      complete(node);
    }
  }
};

}  // namespace

TEST(MatchTimes, PerfectAlignment) {
  const std::vector<double> truth = {1, 3, 5, 7, 9};
  std::vector<double> flags;
  for (double t : truth) flags.push_back(t + 0.3);
  EXPECT_EQ(bench::match_times(flags, truth, 1.0), (bench::Confusion{5, 0, 0, 0}));
}

TEST(MatchTimes, OneMissedOneSpurious) {
  const std::vector<double> truth = {1, 3, 5, 7, 9};
  const std::vector<double> flags = {1.3, 3.3, 5.3, 7.3, 12.0};
  EXPECT_EQ(bench::match_times(flags, truth, 1.0), (bench::Confusion{4, 1, 1, 0}));
}

TEST(MatchTimes, OutsideTheWindowIsNoMatch) {
  EXPECT_EQ(bench::match_times({2.5}, {1.0}, 1.0), (bench::Confusion{0, 1, 1, 0}));
  EXPECT_EQ(bench::match_times({0.9}, {1.0}, 1.0), (bench::Confusion{0, 1, 1, 0}));
  EXPECT_EQ(bench::match_times({2.0}, {1.0}, 1.0), (bench::Confusion{1, 0, 0, 0}));
}

TEST(MatchTimes, OneFlagMatchesOneInjection) {
  EXPECT_EQ(bench::match_times({1.5}, {1.0, 1.2}, 1.0), (bench::Confusion{1, 0, 1, 0}));
}

TEST(MatchDetections, CountsNominalNodesAsTrueNegatives) {
  TraceBuilder b;
  b.enter("a");
  b.advance(1.0);
  b.complete("a");
  b.knock("b", true);
  b.enter("b");
  b.advance(1.0);
  b.complete("b");
  b.push(tk::EventKind::task_completed, "");
  const auto m = bench::match_detections(b.trace, b.truth, 1.0);
  EXPECT_EQ(m.pooled, (bench::Confusion{1, 0, 0, 2}));
  EXPECT_EQ(m.per_skill.at("skill_b"), (bench::Confusion{1, 0, 0, 1}));
  ASSERT_TRUE(m.matched_event[0].has_value());
  EXPECT_EQ(b.trace.events[*m.matched_event[0]].kind, tk::EventKind::anomaly_flagged);
  EXPECT_THROW(bench::match_detections(b.trace, b.truth, 0.0), ValidationError);
}

TEST(PrecisionRecall, HandComputedExample) {
  const auto pr = bench::precision_recall({{10, 2, 3, 0}});
  EXPECT_NEAR(pr.micro_precision, 10.0 / 12.0, 1e-12);
  EXPECT_NEAR(pr.micro_recall, 10.0 / 13.0, 1e-12);
  const double p = 10.0 / 12.0, r = 10.0 / 13.0;
  EXPECT_NEAR(pr.f1, 2 * p * r / (p + r), 1e-12);
  EXPECT_NEAR(pr.f1, 0.8, 1e-4);
  EXPECT_EQ(pr.macro_precision, pr.micro_precision);
  EXPECT_EQ(pr.macro_recall, pr.micro_recall);
}

TEST(PrecisionRecall, MacroIsUnweightedMean) {
  // (P, R) = (1.0, 0.5) and (0.5, 1.0).
  const auto pr = bench::precision_recall({{2, 0, 2, 0}, {2, 2, 0, 0}});
  EXPECT_DOUBLE_EQ(pr.macro_precision, 0.75);
  EXPECT_DOUBLE_EQ(pr.macro_recall, 0.75);
}

TEST(PrecisionRecall, EmptyCountsAreZero) {
  const auto pr = bench::precision_recall({{0, 0, 0, 5}});
  EXPECT_EQ(pr.micro_precision, 0.0);
  EXPECT_EQ(pr.micro_recall, 0.0);
  EXPECT_EQ(pr.f1, 0.0);
}

TEST(PrecisionRecall, SkillOrderDoesNotMatter) {
  const bench::Confusion a{3, 1, 2, 0}, b{7, 0, 1, 4}, c{1, 3, 0, 2};
  const auto x = bench::precision_recall({a, b, c});
  const auto y = bench::precision_recall({c, a, b});
  EXPECT_EQ(x.micro_precision, y.micro_precision);
  EXPECT_EQ(x.micro_recall, y.micro_recall);
  EXPECT_DOUBLE_EQ(x.macro_precision, y.macro_precision);
  EXPECT_DOUBLE_EQ(x.macro_recall, y.macro_recall);
}

TEST(RecoveryRate, AllRecovered) {
  TraceBuilder b;
  for (const char* n : {"a", "b"}) {
    b.knock(n, true);
    b.enter(n);
    b.advance(1.0);
    b.complete(n);
  }
  b.push(tk::EventKind::task_completed, "");
  EXPECT_DOUBLE_EQ(bench::recovery_rate({b.trace}, {b.truth}, 1.0), 1.0);
}

TEST(RecoveryRate, ThreeMissedOfTwentyFive) {
  TraceBuilder b;
  int missed = 0;
  for (const char* n : {"a", "b", "c", "d", "e"}) {
    for (int i = 0; i < 5; ++i) {
      const bool detected = !(i == 4 && missed < 3);
      if (!detected) {
        ++missed;
        b.knock(n, false);
        break;  // the node completed, so the next node starts
      }
      b.knock(n, true);
    }
    if (b.trace.events.back().kind != tk::EventKind::node_completed) {
      b.enter(n);
      b.advance(1.0);
      b.complete(n);
    }
  }
  b.push(tk::EventKind::task_completed, "");
  ASSERT_EQ(b.truth.size(), 25u);
  EXPECT_DOUBLE_EQ(bench::recovery_rate({b.trace}, {b.truth}, 1.0), 22.0 / 25.0);
  const auto m = bench::match_detections(b.trace, b.truth, 1.0);
  EXPECT_EQ(m.pooled.tp, 22);
  EXPECT_EQ(m.pooled.fn, 3);
}

TEST(RecoveryRate, NoRecoveryMeansZero) {
  TraceBuilder b;
  b.enter("a");
  b.advance(0.4);
  b.inject("a");
  b.advance(0.3);
  b.flag("a");
  b.push(tk::EventKind::task_failed, "a");
  EXPECT_EQ(bench::recovery_rate({b.trace}, {b.truth}, 1.0), 0.0);
  EXPECT_EQ(bench::recovery_rate({}, {}, 1.0), 0.0);
}

TEST(Results, RoundTripReproducesTheReport) {
  bench::ResultFile rf{"pick_place", "one_per_node", "shdp-ar", "demo", {}};
  for (int trial = 0; trial < 3; ++trial) {
    TraceBuilder b;
    b.knock("a", trial != 1);
    if (trial != 1) {
      b.enter("a");
      b.advance(1.0);
      b.complete("a");
    }
    b.push(tk::EventKind::task_completed, "");
    sim::TrialResult r;
    r.seed = 100 + trial;
    r.trace = b.trace;
    for (const auto& inj : b.truth) {
      sim::FiredDisturbance f;
      f.time = inj.t;
      f.node = inj.node;
      f.skill = inj.skill;
      f.profile.amplitude = 12.5;
      f.weak = trial == 1;
      r.truth.push_back(f);
    }
    rf.trials.push_back(r);
  }
  std::stringstream ss;
  bench::write_results(ss, rf);
  const auto back = bench::read_results(ss);
  EXPECT_EQ(back.task, rf.task);
  EXPECT_EQ(back.backend, rf.backend);
  ASSERT_EQ(back.trials.size(), 3u);
  EXPECT_EQ(back.trials[1].truth[0].weak, true);
  EXPECT_EQ(back.trials[2].seed, 102u);
  const auto a = bench::summarize(rf.trials, 1.0), b = bench::summarize(back.trials, 1.0);
  EXPECT_EQ(a.recovery, b.recovery);
  EXPECT_NEAR(a.recovery, 2.0 / 3.0, 1e-12);
  EXPECT_EQ(a.pr.micro_recall, b.pr.micro_recall);
  EXPECT_EQ(a.completed, 3);
  EXPECT_EQ(a.injections, 3);
}

TEST(Report, EmptyTableStillHasHeaders) {
  std::stringstream csv, table;
  bench::emit_csv(csv, {});
  bench::emit_table(table, {});
  EXPECT_FALSE(csv.str().empty());
  EXPECT_NE(csv.str().find("recovery"), std::string::npos);
  EXPECT_NE(table.str().find("Recovery"), std::string::npos);
}

TEST(Report, RowLabels) {
  EXPECT_EQ(bench::row_label("pick_place", "one_per_node"), "Pick & Place (1 An./skill)");
  EXPECT_EQ(bench::row_label("drawer", "multi_per_node"), "Open Drawer (Mult. An./skill)");
}
