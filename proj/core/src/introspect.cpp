#include "revert/introspect.hpp"

#include "revert/textio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

namespace revert::introspect {

namespace {

constexpr double kMinThreshold = 1e-9;

double at_clamped(const Vec& v, std::size_t t) {
  const auto n = static_cast<std::size_t>(v.size());
  return v[static_cast<Eigen::Index>(std::min(t, n - 1))];
}

}  // namespace

LCurve lcurve(const hmm::SkillModel& model, const obs::Trial& trial) {
  return {model.skill_id(), hmm::forward_curve(model, obs::feature_matrix(trial)), trial.rate_hz};
}

double ThresholdModel::f1(std::size_t t) const {
  return at_clamped(mu, t) - k * at_clamped(sigma, t);
}

void validate(const ThresholdModel& th) {
  if (th.mu.size() == 0 || th.mu.size() != th.sigma.size())
    throw ValidationError("threshold model for '" + th.skill_id + "' has mismatched mu/sigma");
  if (!th.mu.allFinite() || !th.sigma.allFinite() || (th.sigma.array() < 0.0).any())
    throw ValidationError("threshold model for '" + th.skill_id + "' has invalid sigma");
  if (!(th.f2_threshold > 0.0)) throw ValidationError("f2_threshold must be positive");
  if (th.window < 1) throw ValidationError("smoothing window must be >= 1");
  if (!(th.rate_hz > 0.0)) throw ValidationError("rate must be positive");
}

std::string to_string(Status s) { return s == Status::nominal ? "nominal" : "anomaly"; }

// --- F2 ---------------------------------------------------------------------

F2Detector::F2Detector(const ThresholdModel& thresholds) : th_(&thresholds) {}

void F2Detector::reset() {
  gaps_.clear();
  t_ = 0;
  status_ = Status::nominal;
}

F2Detector::Result F2Detector::step(double loglik) {
  const double f1 = th_->f1(t_);
  gaps_.push_back(std::abs(loglik - f1));
  const auto w = static_cast<std::size_t>(th_->window);
  if (gaps_.size() > w + 1) gaps_.pop_front();
  ++t_;

  Result r;
  r.f1_crossed = loglik < f1;
  // Difference of consecutive w-sample means: (g_t - g_{t-w}) / w.
  if (gaps_.size() == w + 1)
    r.statistic = std::abs(gaps_.back() - gaps_.front()) / static_cast<double>(w) * th_->rate_hz;
  if (r.statistic > th_->f2_threshold) status_ = Status::anomaly;
  r.status = status_;
  return r;
}

double peak_f2(const ThresholdModel& th, const std::vector<double>& curve) {
  F2Detector det(th);
  double peak = 0.0;
  for (double l : curve) peak = std::max(peak, det.step(l).statistic);
  return peak;
}

std::size_t count_flags(const ThresholdModel& th, const std::vector<double>& curve) {
  F2Detector det(th);
  std::size_t n = 0;
  for (double l : curve)
    if (det.step(l).status == Status::anomaly) ++n;
  return n;
}

// --- calibration ------------------------------------------------------------

void curve_statistics(const std::vector<std::vector<double>>& curves, Vec& mu, Vec& sigma) {
  if (curves.empty()) throw ValidationError("no curves to summarize");
  std::size_t len = curves.front().size();
  for (const auto& c : curves) len = std::min(len, c.size());
  if (len == 0) throw ValidationError("empty L-curve");
  const auto n = static_cast<double>(curves.size());
  const auto t_len = static_cast<Eigen::Index>(len);
  // Offsets from the first curve keep identical curves at exactly zero spread.
  const auto& ref = curves.front();
  Vec shift = Vec::Zero(t_len);
  sigma = Vec::Zero(t_len);
  for (const auto& c : curves)
    for (Eigen::Index t = 0; t < t_len; ++t)
      shift[t] += c[static_cast<std::size_t>(t)] - ref[static_cast<std::size_t>(t)];
  shift /= n;
  mu.resize(t_len);
  for (Eigen::Index t = 0; t < t_len; ++t) mu[t] = ref[static_cast<std::size_t>(t)] + shift[t];
  if (curves.size() < 2) return;
  for (const auto& c : curves)
    for (Eigen::Index t = 0; t < t_len; ++t) {
      const double d = c[static_cast<std::size_t>(t)] - ref[static_cast<std::size_t>(t)] - shift[t];
      sigma[t] += d * d;
    }
  sigma = (sigma / (n - 1.0)).cwiseSqrt();
}

CalibrationReport calibrate_loocv(const obs::TrialSet& training, const hmm::SkillModel& model,
                                  const CalibrationConfig& config) {
  obs::validate(training);
  if (training.trials.size() < 3) throw ValidationError("calibration needs at least 3 trials");
  if (config.window < 1) throw ValidationError("smoothing window must be >= 1");
  if (!(config.safety >= 1.0)) throw ValidationError("safety factor must be >= 1");

  std::size_t shortest = training.trials.front().samples.size();
  std::size_t longest = shortest;
  for (const auto& tr : training.trials) {
    shortest = std::min(shortest, tr.samples.size());
    longest = std::max(longest, tr.samples.size());
  }
  const double spread =
      static_cast<double>(longest - shortest) / static_cast<double>(std::max<std::size_t>(shortest, 1));
  if (spread > config.max_length_spread)
    throw ValidationError("training trials for '" + training.skill_id + "' differ in length by " +
                          std::to_string(static_cast<int>(std::round(spread * 100))) +
                          "% (limit " +
                          std::to_string(static_cast<int>(std::round(config.max_length_spread * 100))) +
                          "%)");

  CalibrationReport report;
  std::vector<std::vector<double>> values;
  for (const auto& tr : training.trials) {
    report.curves.push_back(lcurve(model, tr));
    values.push_back(report.curves.back().values);
  }

  const double rate = training.trials.front().rate_hz;
  auto make = [&](const std::vector<std::vector<double>>& curves) {
    ThresholdModel th;
    th.skill_id = model.skill_id();
    th.k = config.k;
    th.window = config.window;
    th.rate_hz = rate;
    curve_statistics(curves, th.mu, th.sigma);
    return th;
  };

  double max_peak = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::vector<std::vector<double>> rest;
    for (std::size_t j = 0; j < values.size(); ++j)
      if (j != i) rest.push_back(values[j]);
    CalibrationFold fold{make(rest), i, 0.0};
    fold.peak = peak_f2(fold.thresholds, values[i]);
    max_peak = std::max(max_peak, fold.peak);
    report.folds.push_back(std::move(fold));
  }

  const double threshold = std::max(config.safety * max_peak, kMinThreshold);
  report.thresholds = make(values);
  report.thresholds.f2_threshold = threshold;
  for (auto& f : report.folds) f.thresholds.f2_threshold = threshold;
  return report;
}

ThresholdModel calibrate(const obs::TrialSet& training, const hmm::SkillModel& model,
                         const CalibrationConfig& config) {
  return calibrate_loocv(training, model, config).thresholds;
}

// --- classification ---------------------------------------------------------

Classification classify_nominal(const std::vector<double>& lvalues, std::size_t active) {
  if (active >= lvalues.size()) throw ValidationError("active skill index out of range");
  Classification c;
  if (lvalues.size() < 2) return c;
  double best_other = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < lvalues.size(); ++i)
    if (i != active) best_other = std::max(best_other, lvalues[i]);
  c.margin = lvalues[active] - best_other;
  c.correct = lvalues[active] > best_other;
  return c;
}

std::optional<std::size_t> time_to_correct(const std::vector<LCurve>& curves,
                                           std::size_t active) {
  if (curves.empty()) return std::nullopt;
  std::size_t len = curves.front().values.size();
  for (const auto& c : curves) len = std::min(len, c.values.size());
  if (len == 0) return std::nullopt;
  std::vector<double> l(curves.size());
  std::optional<std::size_t> first;
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t m = 0; m < curves.size(); ++m) l[m] = curves[m].values[t];
    if (classify_nominal(l, active).correct) {
      if (!first) first = t;
    } else {
      first.reset();
    }
  }
  return first;
}

// --- monitor ----------------------------------------------------------------

Monitor::Monitor(std::vector<const hmm::SkillModel*> models,
                 std::vector<const ThresholdModel*> thresholds)
    : models_(std::move(models)), thresholds_(std::move(thresholds)) {
  if (models_.empty()) throw ValidationError("monitor needs at least one model");
  if (thresholds_.size() != models_.size())
    throw ValidationError("monitor needs one threshold model per skill model");
  const int d = models_.front()->dim();
  for (std::size_t i = 0; i < models_.size(); ++i) {
    if (models_[i]->dim() != d) throw ValidationError("monitor models differ in dimension");
    if (thresholds_[i] == nullptr)
      throw ValidationError("missing calibration for skill '" + models_[i]->skill_id() + "'");
    filters_.emplace_back(*models_[i]);
    curves_.push_back({models_[i]->skill_id(), {}, thresholds_[i]->rate_hz});
  }
  latest_.assign(models_.size(), 0.0);
  reset(0);
}

std::optional<std::size_t> Monitor::index_of(const std::string& skill_id) const {
  for (std::size_t i = 0; i < models_.size(); ++i)
    if (models_[i]->skill_id() == skill_id) return i;
  return std::nullopt;
}

void Monitor::reset(std::size_t active) {
  if (active >= models_.size())
    throw ValidationError("unknown skill index " + std::to_string(active));
  active_ = active;
  for (auto& f : filters_) f.reset();
  for (auto& c : curves_) c.values.clear();
  std::fill(latest_.begin(), latest_.end(), 0.0);
  detector_.emplace(*thresholds_[active]);
  steps_ = 0;
}

void Monitor::reset(const std::string& skill_id) {
  const auto idx = index_of(skill_id);
  if (!idx) throw ValidationError("unknown skill '" + skill_id + "'");
  reset(*idx);
}

const std::vector<double>& Monitor::score_step(const Eigen::Ref<const Vec>& y) {
  for (std::size_t i = 0; i < filters_.size(); ++i) {
    latest_[i] = filters_[i].step(y);
    curves_[i].values.push_back(latest_[i]);
  }
  ++steps_;
  return latest_;
}

F2Detector::Result Monitor::detect() {
  const auto r = detector_->step(latest_[active_]);
  if (log_) {
    *log_ << textio::fmt(static_cast<double>(steps_ - 1) / thresholds_[active_]->rate_hz);
    for (double l : latest_) *log_ << ' ' << textio::fmt(l);
    *log_ << ' ' << textio::fmt(r.statistic) << ' ' << to_string(r.status) << '\n';
  }
  return r;
}

// --- serialization ----------------------------------------------------------

void write_thresholds(std::ostream& os, const ThresholdModel& th) {
  os << "revert-thresholds 1\n";
  os << "skill " << th.skill_id << '\n';
  os << "rate " << textio::fmt(th.rate_hz) << '\n';
  os << "k " << textio::fmt(th.k) << '\n';
  os << "window " << th.window << '\n';
  os << "f2_threshold " << textio::fmt(th.f2_threshold) << '\n';
  os << "horizon " << th.mu.size() << '\n';
  os << "mu ";
  textio::write_row(os, th.mu.transpose());
  os << "sigma ";
  textio::write_row(os, th.sigma.transpose());
  os << "end\n";
}

ThresholdModel read_thresholds(std::istream& is) {
  textio::LineReader in(is);
  auto expect = [&](const std::string& key, std::size_t min_tokens) {
    auto tok = in.expect_tokens(key);
    if (tok.front() != key || tok.size() < min_tokens)
      throw ParseError("expected '" + key + "'", in.line_no());
    return tok;
  };
  auto header = in.expect_tokens("header");
  if (header.size() != 2 || header[0] != "revert-thresholds" || header[1] != "1")
    throw ParseError("not a threshold file", in.line_no());
  ThresholdModel th;
  th.skill_id = expect("skill", 2)[1];
  th.rate_hz = textio::parse_double(expect("rate", 2)[1], in.line_no());
  th.k = textio::parse_double(expect("k", 2)[1], in.line_no());
  th.window = static_cast<int>(textio::parse_long(expect("window", 2)[1], in.line_no()));
  th.f2_threshold = textio::parse_double(expect("f2_threshold", 2)[1], in.line_no());
  const long horizon = textio::parse_long(expect("horizon", 2)[1], in.line_no());
  auto read_vec = [&](const std::string& key) {
    auto tok = expect(key, 1);
    if (static_cast<long>(tok.size()) != horizon + 1)
      throw ParseError(key + " must hold " + std::to_string(horizon) + " values", in.line_no());
    Vec v(horizon);
    for (long i = 0; i < horizon; ++i)
      v[i] = textio::parse_double(tok[static_cast<std::size_t>(i + 1)], in.line_no());
    return v;
  };
  th.mu = read_vec("mu");
  th.sigma = read_vec("sigma");
  expect("end", 1);
  validate(th);
  return th;
}

void save_thresholds(const std::filesystem::path& path, const ThresholdModel& th) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  write_thresholds(os, th);
}

ThresholdModel load_thresholds(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path.string());
  return read_thresholds(is);
}

}  // namespace revert::introspect
