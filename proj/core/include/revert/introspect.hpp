#pragma once

#include "revert/common.hpp"
#include "revert/hmm.hpp"
#include "revert/obsdata.hpp"

#include <deque>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

/// Streaming skill identification and anomaly detection over cumulative
/// log-likelihood (L-) curves.
namespace revert::introspect {

struct LCurve {
  std::string skill_id;
  std::vector<double> values;
  double rate_hz = kDefaultRateHz;
};

LCurve lcurve(const hmm::SkillModel& model, const obs::Trial& trial);

/// Per-timestep expected L-curve statistics for one skill plus the F2 bound.
struct ThresholdModel {
  std::string skill_id;
  Vec mu;
  Vec sigma;
  double k = 5.0;
  double f2_threshold = 1.0;  ///< nats per second
  int window = 5;             ///< moving-average length applied to the gap
  double rate_hz = kDefaultRateHz;

  std::size_t horizon() const noexcept { return static_cast<std::size_t>(mu.size()); }
  /// F1 = mu - k sigma at step index t (0-based); held at the final value
  /// beyond the horizon.
  double f1(std::size_t t) const;
};

void validate(const ThresholdModel& th);

void write_thresholds(std::ostream& os, const ThresholdModel& th);
ThresholdModel read_thresholds(std::istream& is);
void save_thresholds(const std::filesystem::path& path, const ThresholdModel& th);
ThresholdModel load_thresholds(const std::filesystem::path& path);

enum class Status { nominal, anomaly };

std::string to_string(Status s);

/// F2 detector: gap_t = |L_t - F1_t|, smoothed by a centered moving average of
/// `window` samples, differentiated, scaled to per-second units. The
/// magnitude is compared against the threshold. Latches on the first
/// crossing until reset.
class F2Detector {
 public:
  explicit F2Detector(const ThresholdModel& thresholds);

  struct Result {
    Status status = Status::nominal;
    double statistic = 0.0;
    bool f1_crossed = false;  ///< logged only; does not gate
  };

  Result step(double loglik);
  void reset();

  Status status() const noexcept { return status_; }
  std::size_t steps() const noexcept { return t_; }
  const ThresholdModel& thresholds() const noexcept { return *th_; }

 private:
  const ThresholdModel* th_;
  std::deque<double> gaps_;
  std::size_t t_ = 0;
  Status status_ = Status::nominal;
};

/// Peak F2 statistic over a full L-curve (0 for curves shorter than the
/// smoothing span).
double peak_f2(const ThresholdModel& th, const std::vector<double>& curve);

/// Number of steps at which the detector would be in anomaly state.
std::size_t count_flags(const ThresholdModel& th, const std::vector<double>& curve);

struct CalibrationConfig {
  double k = 5.0;
  double safety = 1.2;
  int window = 5;
  double max_length_spread = 0.2;
};

struct CalibrationFold {
  ThresholdModel thresholds;  ///< mu/sigma without the held-out trial
  std::size_t held_out = 0;
  double peak = 0.0;          ///< peak F2 statistic of the held-out trial
};

struct CalibrationReport {
  ThresholdModel thresholds;  ///< mu/sigma over all trials, LOOCV threshold
  std::vector<CalibrationFold> folds;
  std::vector<LCurve> curves;
};

/// Per-timestep mean and (sample) standard deviation across curves truncated
/// to the shortest.
void curve_statistics(const std::vector<std::vector<double>>& curves, Vec& mu, Vec& sigma);

/// The model is held fixed; folds differ only in the mu/sigma estimate. The
/// F2 threshold is safety x the largest held-out peak. Every fold threshold
/// carries the final f2_threshold.
CalibrationReport calibrate_loocv(const obs::TrialSet& training, const hmm::SkillModel& model,
                                  const CalibrationConfig& config);
ThresholdModel calibrate(const obs::TrialSet& training, const hmm::SkillModel& model,
                         const CalibrationConfig& config);

struct Classification {
  bool correct = true;
  double margin = std::numeric_limits<double>::infinity();
};

/// Correct iff the indexed model's L strictly exceeds every other.
Classification classify_nominal(const std::vector<double>& lvalues, std::size_t active);

/// First step index after which classification stays correct to the end of
/// the curves; nullopt if the final step is incorrect.
std::optional<std::size_t> time_to_correct(const std::vector<LCurve>& curves,
                                           std::size_t active);

/// Scores every loaded model in lockstep and gates on the active skill's F2
/// detector. Models and thresholds are borrowed and must outlive the monitor.
class Monitor {
 public:
  Monitor(std::vector<const hmm::SkillModel*> models,
          std::vector<const ThresholdModel*> thresholds);

  std::size_t model_count() const noexcept { return models_.size(); }
  std::optional<std::size_t> index_of(const std::string& skill_id) const;
  const hmm::SkillModel& model(std::size_t i) const { return *models_.at(i); }

  /// Clears every forward state, L buffer, and F2 memory; status -> nominal.
  void reset(std::size_t active);
  void reset(const std::string& skill_id);

  /// One incremental forward step per model; returns the new L_t values.
  const std::vector<double>& score_step(const Eigen::Ref<const Vec>& y);
  /// Detection on the active model's most recent L_t.
  F2Detector::Result detect();

  std::size_t active() const noexcept { return active_; }
  Status status() const noexcept { return detector_ ? detector_->status() : Status::nominal; }
  const std::vector<double>& latest() const noexcept { return latest_; }
  const std::vector<LCurve>& curves() const noexcept { return curves_; }
  std::size_t steps() const noexcept { return steps_; }

  /// Monitor log: one line per step (t, per-model L, F2 statistic, status).
  void set_log(std::ostream* os) { log_ = os; }

 private:
  std::vector<const hmm::SkillModel*> models_;
  std::vector<const ThresholdModel*> thresholds_;
  std::vector<hmm::ForwardFilter> filters_;
  std::vector<LCurve> curves_;
  std::vector<double> latest_;
  std::optional<F2Detector> detector_;
  std::size_t active_ = 0;
  std::size_t steps_ = 0;
  std::ostream* log_ = nullptr;
};

}  // namespace revert::introspect
