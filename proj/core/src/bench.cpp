#include "revert/bench.hpp"

#include "revert/textio.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>

namespace revert::bench {

namespace {

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

Confusion& Confusion::operator+=(const Confusion& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  return *this;
}

std::vector<Injection> injections(const std::vector<sim::FiredDisturbance>& fired) {
  std::vector<Injection> out;
  for (const auto& f : fired) out.push_back({f.time, f.node, f.skill});
  return out;
}

Matching match_detections(const task::ExecutionTrace& trace, const std::vector<Injection>& truth,
                          double window) {
  if (!(window > 0.0)) throw ValidationError("match window must be > 0");
  Matching m;
  m.matched_event.assign(truth.size(), std::nullopt);

  std::vector<std::size_t> flags;
  for (std::size_t i = 0; i < trace.events.size(); ++i)
    if (trace.events[i].kind == task::EventKind::anomaly_flagged) flags.push_back(i);

  std::vector<std::size_t> order(truth.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return truth[a].t < truth[b].t; });

  std::vector<bool> used(flags.size(), false);
  for (std::size_t idx : order) {
    const auto& inj = truth[idx];
    for (std::size_t f = 0; f < flags.size(); ++f) {
      const double t = trace.events[flags[f]].sim_time;
      if (used[f] || t < inj.t) continue;
      if (t > inj.t + window) break;
      used[f] = true;
      m.matched_event[idx] = flags[f];
      break;
    }
    auto& c = m.per_skill[inj.skill];
    if (m.matched_event[idx]) ++c.tp;
    else ++c.fn;
  }
  for (std::size_t f = 0; f < flags.size(); ++f)
    if (!used[f]) ++m.per_skill[trace.events[flags[f]].skill].fp;

  // Node executions that ran to completion with no flag and no injection.
  const task::Event* open = nullptr;
  for (const auto& e : trace.events) {
    if (e.kind == task::EventKind::node_entered) {
      open = &e;
    } else if (e.kind == task::EventKind::anomaly_flagged) {
      open = nullptr;
    } else if (e.kind == task::EventKind::node_completed && open) {
      const bool injected = std::any_of(truth.begin(), truth.end(), [&](const Injection& inj) {
        return inj.node == e.node && inj.t >= open->sim_time && inj.t <= e.sim_time;
      });
      if (!injected) ++m.per_skill[e.skill].tn;
      open = nullptr;
    }
  }
  for (const auto& [skill, c] : m.per_skill) m.pooled += c;
  return m;
}

Confusion match_times(const std::vector<double>& flags, const std::vector<double>& truth,
                      double window) {
  task::ExecutionTrace trace;
  std::vector<double> sorted = flags;
  std::sort(sorted.begin(), sorted.end());
  for (double t : sorted) {
    task::Event e;
    e.kind = task::EventKind::anomaly_flagged;
    e.sim_time = t;
    e.skill = "skill";
    trace.events.push_back(e);
  }
  std::vector<Injection> inj;
  for (double t : truth) inj.push_back({t, "node", "skill"});
  return match_detections(trace, inj, window).pooled;
}

PrecisionRecall precision_recall(const std::vector<Confusion>& per_skill) {
  if (per_skill.empty()) throw ValidationError("precision_recall needs at least one skill");
  PrecisionRecall pr;
  Confusion pooled;
  for (const auto& c : per_skill) {
    pooled += c;
    pr.macro_precision += ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
    pr.macro_recall += ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
  }
  const auto n = static_cast<double>(per_skill.size());
  pr.macro_precision /= n;
  pr.macro_recall /= n;
  pr.micro_precision = ratio(static_cast<double>(pooled.tp), static_cast<double>(pooled.tp + pooled.fp));
  pr.micro_recall = ratio(static_cast<double>(pooled.tp), static_cast<double>(pooled.tp + pooled.fn));
  const double s = pr.micro_precision + pr.micro_recall;
  pr.f1 = s > 0.0 ? 2.0 * pr.micro_precision * pr.micro_recall / s : 0.0;
  return pr;
}

double recovery_rate(const std::vector<task::ExecutionTrace>& traces,
                     const std::vector<std::vector<Injection>>& truth, double window) {
  if (traces.size() != truth.size()) throw ValidationError("one truth list per trace required");
  long total = 0;
  long recovered = 0;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& ev = traces[i].events;
    const auto m = match_detections(traces[i], truth[i], window);
    total += static_cast<long>(truth[i].size());
    for (std::size_t j = 0; j < truth[i].size(); ++j) {
      if (!m.matched_event[j]) continue;
      const std::size_t f = *m.matched_event[j];
      if (f + 1 >= ev.size() || ev[f + 1].kind != task::EventKind::recovery_started) continue;
      const auto& node = ev[f].node;
      const bool finished = std::any_of(ev.begin() + static_cast<long>(f) + 1, ev.end(), [&](const task::Event& e) {
        return e.kind == task::EventKind::node_completed && e.node == node;
      });
      if (finished) ++recovered;
    }
  }
  return ratio(static_cast<double>(recovered), static_cast<double>(total));
}

ReportRow summarize(const std::vector<sim::TrialResult>& results, double window) {
  ReportRow row;
  row.trials = static_cast<int>(results.size());
  std::map<std::string, Confusion> per_skill;
  std::vector<task::ExecutionTrace> traces;
  std::vector<std::vector<Injection>> truth;
  for (const auto& r : results) {
    traces.push_back(r.trace);
    truth.push_back(injections(r.truth));
    row.injections += static_cast<long>(r.truth.size());
    if (r.trace.completed()) ++row.completed;
    for (const auto& [skill, c] : match_detections(r.trace, truth.back(), window).per_skill)
      per_skill[skill] += c;
  }
  std::vector<Confusion> cs;
  for (const auto& [skill, c] : per_skill) cs.push_back(c);
  if (!cs.empty()) row.pr = precision_recall(cs);
  row.recovery = recovery_rate(traces, truth, window);
  return row;
}

std::string row_label(const std::string& task, const std::string& condition) {
  const std::string t = task == "drawer" ? "Open Drawer" : "Pick & Place";
  if (condition == "tool") return "Tool Collision Pick & Place";
  if (condition == "one_per_node") return t + " (1 An./skill)";
  if (condition == "multi_per_node") return t + " (Mult. An./skill)";
  if (condition == "anomaly_no_recovery") return t + " (no recovery)";
  return t + " (" + condition + ")";
}

namespace {

int row_rank(const ReportRow& r) {
  const std::vector<std::string> canonical = {
      "Pick & Place (1 An./skill)", "Pick & Place (Mult. An./skill)", "Open Drawer (1 An./skill)",
      "Open Drawer (Mult. An./skill)", "Tool Collision Pick & Place"};
  const auto it = std::find(canonical.begin(), canonical.end(), row_label(r.task, r.condition));
  return it == canonical.end() ? static_cast<int>(canonical.size()) : static_cast<int>(it - canonical.begin());
}

std::vector<ReportRow> ordered(std::vector<ReportRow> rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
    const int ra = row_rank(a), rb = row_rank(b);
    if (ra != rb) return ra < rb;
    return a.backend < b.backend;
  });
  return rows;
}

}  // namespace

void emit_csv(std::ostream& os, const std::vector<ReportRow>& rows) {
  os << "experiment,backend,trials,injections,completed,recovery_rate,micro_recall,"
        "micro_precision,macro_recall,macro_precision,harmonic_f1\n";
  for (const auto& r : ordered(rows)) {
    os << '"' << row_label(r.task, r.condition) << "\"," << r.backend << ',' << r.trials << ','
       << r.injections << ',' << r.completed << ',' << fixed4(r.recovery) << ','
       << fixed4(r.pr.micro_recall) << ',' << fixed4(r.pr.micro_precision) << ','
       << fixed4(r.pr.macro_recall) << ',' << fixed4(r.pr.macro_precision) << ','
       << fixed4(r.pr.f1) << '\n';
  }
}

void emit_table(std::ostream& os, const std::vector<ReportRow>& rows) {
  const std::vector<std::string> header = {"Experiment",   "Backend",     "Trials",
                                           "Recovery %",   "Micro R %",   "Micro P %",
                                           "Macro R %",    "Macro P %",   "Harmonic F1 %"};
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : ordered(rows))
    cells.push_back({row_label(r.task, r.condition), r.backend, std::to_string(r.trials),
                     pct(r.recovery), pct(r.pr.micro_recall), pct(r.pr.micro_precision),
                     pct(r.pr.macro_recall), pct(r.pr.macro_precision), pct(r.pr.f1)});
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
  }
  auto line = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) os << "  ";
      if (c < 2) os << std::left << std::setw(static_cast<int>(width[c])) << row[c];
      else os << std::right << std::setw(static_cast<int>(width[c])) << row[c];
    }
    os << '\n';
  };
  line(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  os << std::string(total + 2 * (width.size() - 1), '-') << '\n';
  for (const auto& row : cells) line(row);
  os << std::right;
}

// --- result files -----------------------------------------------------------

void write_results(std::ostream& os, const ResultFile& file) {
  os << "results task=" << file.task << " condition=" << file.condition
     << " backend=" << file.backend << " scenario=" << file.scenario << '\n';
  const auto& results = file.trials;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    os << "trial " << i << " seed=" << r.seed << '\n';
    for (const auto& e : r.trace.events) {
      os << "event ";
      task::write_event(os, e);
    }
    for (const auto& f : r.truth) {
      const auto& p = f.profile;
      os << "truth " << textio::fmt(f.time) << ' ' << f.node << " skill=" << f.skill
         << " kind=" << sim::to_string(p.kind) << " amplitude=" << textio::fmt(p.amplitude)
         << " duration=" << textio::fmt(p.duration) << " deviation=" << textio::fmt(p.pose_deviation)
         << " direction=" << textio::fmt(p.direction.x()) << ',' << textio::fmt(p.direction.y())
         << ',' << textio::fmt(p.direction.z()) << " weak=" << (f.weak ? 1 : 0) << '\n';
    }
    os << "end\n";
  }
}

ResultFile read_results(std::istream& is) {
  textio::LineReader in(is);
  ResultFile file;
  {
    const auto tok = in.expect_tokens("results header");
    if (tok[0] != "results") throw ParseError("not a results file", in.line_no());
    const auto kv = textio::parse_kv(tok, 1, in.line_no());
    file.task = textio::require_key(kv, "task", in.line_no());
    file.condition = textio::require_key(kv, "condition", in.line_no());
    file.backend = textio::require_key(kv, "backend", in.line_no());
    file.scenario = textio::require_key(kv, "scenario", in.line_no());
  }
  auto& out = file.trials;
  std::string line;
  bool open = false;
  while (in.next(line)) {
    const auto tok = textio::split_ws(line);
    const auto ln = in.line_no();
    if (tok[0] == "trial") {
      if (open) throw ParseError("trial block not closed", ln);
      if (tok.size() != 3) throw ParseError("trial header needs an index and seed", ln);
      const auto kv = textio::parse_kv(tok, 2, ln);
      sim::TrialResult r;
      r.seed = std::stoull(textio::require_key(kv, "seed", ln));
      out.push_back(std::move(r));
      open = true;
    } else if (tok[0] == "event") {
      if (!open) throw ParseError("event outside a trial block", ln);
      out.back().trace.events.push_back(task::parse_event(tok, 1, ln));
    } else if (tok[0] == "truth") {
      if (!open) throw ParseError("truth outside a trial block", ln);
      if (tok.size() < 4) throw ParseError("truth needs a time and a node", ln);
      sim::FiredDisturbance f;
      f.time = textio::parse_double(tok[1], ln);
      f.node = tok[2];
      const auto kv = textio::parse_kv(tok, 3, ln);
      f.skill = textio::require_key(kv, "skill", ln);
      f.profile.kind = sim::disturbance_kind_from_string(textio::require_key(kv, "kind", ln));
      f.profile.amplitude = textio::parse_double(textio::require_key(kv, "amplitude", ln), ln);
      f.profile.duration = textio::parse_double(textio::require_key(kv, "duration", ln), ln);
      f.profile.pose_deviation = textio::parse_double(textio::require_key(kv, "deviation", ln), ln);
      const auto dir = textio::split(textio::require_key(kv, "direction", ln), ',');
      if (dir.size() != 3) throw ParseError("direction needs three components", ln);
      for (int i = 0; i < 3; ++i)
        f.profile.direction[i] = textio::parse_double(dir[static_cast<std::size_t>(i)], ln);
      f.weak = textio::require_key(kv, "weak", ln) == "1";
      out.back().truth.push_back(f);
    } else if (tok[0] == "end") {
      if (!open) throw ParseError("'end' outside a trial block", ln);
      open = false;
    } else {
      throw ParseError("unknown record '" + tok[0] + "'", ln);
    }
  }
  if (open) throw ParseError("unterminated trial block", in.line_no());
  return file;
}

void save_results(const std::filesystem::path& path, const ResultFile& results) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  write_results(os, results);
}

ResultFile load_results(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path.string());
  return read_results(is);
}

}  // namespace revert::bench
