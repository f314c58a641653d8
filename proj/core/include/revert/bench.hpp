#pragma once

#include "revert/scenario.hpp"
#include "revert/taskgraph.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

/// Detection metrics, recovery rate, and Table-style reports computed purely
/// from persisted traces and ground truth.
namespace revert::bench {

struct Confusion {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  long tn = 0;

  Confusion& operator+=(const Confusion& o);
  bool operator==(const Confusion&) const = default;
};

struct Injection {
  double t = 0.0;
  std::string node;
  std::string skill;
};

std::vector<Injection> injections(const std::vector<sim::FiredDisturbance>& fired);

struct Matching {
  std::map<std::string, Confusion> per_skill;
  Confusion pooled;
  /// For each injection, the index (into trace.events) of its matched flag.
  std::vector<std::optional<std::size_t>> matched_event;
};

/// Greedy one-to-one matching in time order: a flag inside
/// [injection, injection + window] is a true positive. TN counts node
/// executions that ended with neither a flag nor an injection.
Matching match_detections(const task::ExecutionTrace& trace, const std::vector<Injection>& truth,
                          double window);

/// Flag times only, single skill.
Confusion match_times(const std::vector<double>& flags, const std::vector<double>& truth,
                      double window);

struct PrecisionRecall {
  double micro_precision = 0.0;
  double micro_recall = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double f1 = 0.0;  ///< harmonic mean of the micro values
};

/// Ratios with a zero denominator count as 0.
PrecisionRecall precision_recall(const std::vector<Confusion>& per_skill);

/// Injections that were detected, followed by a recovery, and whose node
/// later completed, over all injections. 0 when there are no injections.
double recovery_rate(const std::vector<task::ExecutionTrace>& traces,
                     const std::vector<std::vector<Injection>>& truth, double window);

struct ReportRow {
  std::string task;
  std::string condition;
  std::string backend;
  int trials = 0;
  long injections = 0;
  long completed = 0;
  double recovery = 0.0;
  PrecisionRecall pr;
};

/// Aggregates one batch of trials into a report row.
ReportRow summarize(const std::vector<sim::TrialResult>& results, double window);

/// Table rows in the canonical order; missing rows are skipped.
void emit_csv(std::ostream& os, const std::vector<ReportRow>& rows);
void emit_table(std::ostream& os, const std::vector<ReportRow>& rows);

/// Canonical row labels: task + condition -> label.
std::string row_label(const std::string& task, const std::string& condition);

/// A batch of trials plus what produced it.
struct ResultFile {
  std::string task;       ///< scene preset
  std::string condition;  ///< scenario condition, or "tool"
  std::string backend;
  std::string scenario;
  std::vector<sim::TrialResult> trials;
};

// Result files: a header line, then one block per trial with its events and
// ground truth.
void write_results(std::ostream& os, const ResultFile& results);
ResultFile read_results(std::istream& is);
void save_results(const std::filesystem::path& path, const ResultFile& results);
ResultFile load_results(const std::filesystem::path& path);

}  // namespace revert::bench
