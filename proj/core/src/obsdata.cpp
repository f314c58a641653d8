#include "revert/obsdata.hpp"

#include "revert/textio.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace revert::obs {

namespace {

constexpr double kQuatNormTol = 1e-6;
constexpr double kSpacingTol = 1e-9;

std::string where(std::size_t trial, std::size_t sample) {
  return "trial " + std::to_string(trial) + ", sample " + std::to_string(sample);
}

bool finite(const Eigen::Ref<const Vec>& v) { return v.allFinite(); }

}  // namespace

std::string to_string(Outcome o) { return o == Outcome::nominal ? "nominal" : "anomalous"; }

Outcome outcome_from_string(const std::string& s) {
  if (s == "nominal") return Outcome::nominal;
  if (s == "anomalous") return Outcome::anomalous;
  throw ParseError("unknown outcome '" + s + "'", 0);
}

Vec to_feature_vector(const Observation& obs) {
  Vec y(kFeatureDim);
  y << obs.position, obs.orientation, obs.force, obs.torque;
  return y;
}

Observation from_feature_vector(double t, const Eigen::Ref<const Vec>& y) {
  if (y.size() != kFeatureDim)
    throw ValidationError("feature vector has dimension " + std::to_string(y.size()) +
                          ", expected 13");
  Observation o;
  o.t = t;
  o.position = y.segment<3>(0);
  o.orientation = y.segment<4>(3);
  o.force = y.segment<3>(7);
  o.torque = y.segment<3>(10);
  return o;
}

Mat feature_matrix(const Trial& trial) {
  Mat m(kFeatureDim, static_cast<Eigen::Index>(trial.samples.size()));
  for (std::size_t i = 0; i < trial.samples.size(); ++i)
    m.col(static_cast<Eigen::Index>(i)) = to_feature_vector(trial.samples[i]);
  return m;
}

std::vector<Mat> feature_matrices(const TrialSet& set) {
  std::vector<Mat> out;
  out.reserve(set.trials.size());
  for (const auto& t : set.trials) out.push_back(feature_matrix(t));
  return out;
}

void validate(const Observation& obs, std::size_t trial_index, std::size_t sample_index) {
  if (!std::isfinite(obs.t) || obs.t < 0.0)
    throw ValidationError(where(trial_index, sample_index) + ": field t must be finite and >= 0");
  if (!finite(obs.position) || !finite(obs.force) || !finite(obs.torque) ||
      !finite(obs.orientation))
    throw ValidationError(where(trial_index, sample_index) + ": non-finite value");
  const double n = obs.orientation.norm();
  if (std::abs(n - 1.0) > kQuatNormTol)
    throw ValidationError(where(trial_index, sample_index) +
                          ": field orientation is not a unit quaternion (norm " +
                          textio::fmt(n) + ")");
}

void validate(const Trial& trial, std::size_t trial_index) {
  const std::string tag = "trial " + std::to_string(trial_index);
  if (trial.skill_id.empty()) throw ValidationError(tag + ": field skill_id is empty");
  if (!(trial.rate_hz > 0.0) || !std::isfinite(trial.rate_hz))
    throw ValidationError(tag + ": field rate_hz must be positive");
  if (trial.samples.empty()) throw ValidationError(tag + ": field samples is empty");
  const double dt = 1.0 / trial.rate_hz;
  for (std::size_t i = 0; i < trial.samples.size(); ++i) {
    validate(trial.samples[i], trial_index, i);
    if (i > 0) {
      const double gap = trial.samples[i].t - trial.samples[i - 1].t;
      if (!(gap > 0.0) || std::abs(gap - dt) > kSpacingTol)
        throw ValidationError(where(trial_index, i) + ": field t spacing " + textio::fmt(gap) +
                              " differs from 1/rate_hz");
    }
  }
  const double dur = trial.duration();
  for (double a : trial.anomaly_times)
    if (!(a >= 0.0 && a <= dur))
      throw ValidationError(tag + ": field anomaly_times entry " + textio::fmt(a) +
                            " outside [0, duration]");
}

void validate(const TrialSet& set) {
  if (set.trials.empty()) throw ValidationError("no trials");
  for (std::size_t i = 0; i < set.trials.size(); ++i) {
    const Trial& t = set.trials[i];
    validate(t, i);
    if (t.skill_id != set.skill_id)
      throw ValidationError("trial " + std::to_string(i) + ": field skill_id '" + t.skill_id +
                            "' differs from set skill '" + set.skill_id + "'");
    if (t.rate_hz != set.trials.front().rate_hz)
      throw ValidationError("trial " + std::to_string(i) + ": field rate_hz differs within set");
  }
}

TrialSet parse_trials(std::istream& is) {
  TrialSet set;
  textio::LineReader reader(is);
  std::string line;
  Trial* current = nullptr;
  while (reader.next(line)) {
    const std::size_t ln = reader.line_no();
    const auto tok = textio::split_ws(line);
    if (tok.front() == "#trial") {
      const auto kv = textio::parse_kv(tok, 1, ln);
      Trial t;
      t.skill_id = textio::require_key(kv, "skill", ln);
      t.rate_hz = textio::parse_double(textio::require_key(kv, "rate", ln), ln);
      try {
        t.outcome = outcome_from_string(textio::require_key(kv, "outcome", ln));
      } catch (const ParseError& e) {
        throw ParseError(e.what(), ln);
      }
      const std::string& an = textio::require_key(kv, "anomalies", ln);
      if (an != "none")
        for (const auto& s : textio::split(an, ','))
          t.anomaly_times.push_back(textio::parse_double(s, ln));
      if (set.trials.empty()) set.skill_id = t.skill_id;
      set.trials.push_back(std::move(t));
      current = &set.trials.back();
      continue;
    }
    if (!current) throw ParseError("sample line before any #trial header", ln);
    if (tok.size() != 14)
      throw ParseError("sample line has " + std::to_string(tok.size()) + " fields, expected 14",
                       ln);
    double v[14];
    for (int i = 0; i < 14; ++i) v[i] = textio::parse_double(tok[i], ln);
    Observation o;
    o.t = v[0];
    o.position = {v[1], v[2], v[3]};
    o.orientation = {v[4], v[5], v[6], v[7]};
    o.force = {v[8], v[9], v[10]};
    o.torque = {v[11], v[12], v[13]};
    current->samples.push_back(o);
  }
  if (set.trials.empty()) throw ValidationError("no trials");
  validate(set);
  return set;
}

TrialSet load_trials(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open trial file " + path.string());
  return parse_trials(in);
}

void write_trials(std::ostream& os, const TrialSet& set) {
  using textio::fmt;
  for (const auto& t : set.trials) {
    os << "#trial skill=" << t.skill_id << " rate=" << fmt(t.rate_hz)
       << " outcome=" << to_string(t.outcome) << " anomalies=";
    if (t.anomaly_times.empty()) os << "none";
    for (std::size_t i = 0; i < t.anomaly_times.size(); ++i)
      os << (i ? "," : "") << fmt(t.anomaly_times[i]);
    os << '\n';
    for (const auto& o : t.samples) {
      os << fmt(o.t);
      for (int i = 0; i < 3; ++i) os << ' ' << fmt(o.position[i]);
      for (int i = 0; i < 4; ++i) os << ' ' << fmt(o.orientation[i]);
      for (int i = 0; i < 3; ++i) os << ' ' << fmt(o.force[i]);
      for (int i = 0; i < 3; ++i) os << ' ' << fmt(o.torque[i]);
      os << '\n';
    }
  }
}

void save_trials(const std::filesystem::path& path, const TrialSet& set) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write trial file " + path.string());
  write_trials(out, set);
}

}  // namespace revert::obs
