#pragma once

#include "revert/common.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

/// Multimodal pose/wrench observations and skill-labelled trial containers.
namespace revert::obs {

/// End-effector pose. Orientation is a unit quaternion stored (w, x, y, z).
struct Pose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector4d orientation{1.0, 0.0, 0.0, 0.0};
};

struct Observation {
  double t = 0.0;  ///< seconds since trial start
  Eigen::Vector3d position = Eigen::Vector3d::Zero();     ///< m
  Eigen::Vector4d orientation{1.0, 0.0, 0.0, 0.0};        ///< (w, x, y, z)
  Eigen::Vector3d force = Eigen::Vector3d::Zero();        ///< N
  Eigen::Vector3d torque = Eigen::Vector3d::Zero();       ///< N m

  Pose pose() const { return {position, orientation}; }
};

enum class Outcome { nominal, anomalous };

std::string to_string(Outcome o);
Outcome outcome_from_string(const std::string& s);

struct Trial {
  std::string skill_id;
  double rate_hz = kDefaultRateHz;
  std::vector<Observation> samples;
  Outcome outcome = Outcome::nominal;
  std::vector<double> anomaly_times;  ///< ground truth, seconds

  /// samples / rate, e.g. 400 samples at 200 Hz -> 2.0 s.
  double duration() const { return static_cast<double>(samples.size()) / rate_hz; }
};

struct TrialSet {
  std::string skill_id;
  std::vector<Trial> trials;
};

/// Layout: [position(3), quaternion w,x,y,z (4), force(3), torque(3)].
Vec to_feature_vector(const Observation& obs);
Observation from_feature_vector(double t, const Eigen::Ref<const Vec>& y);

/// d x T matrix, one column per sample.
Mat feature_matrix(const Trial& trial);
std::vector<Mat> feature_matrices(const TrialSet& set);

/// Throw ValidationError naming the failing field (and trial index when given).
void validate(const Observation& obs, std::size_t trial_index, std::size_t sample_index);
void validate(const Trial& trial, std::size_t trial_index);
void validate(const TrialSet& set);

/// Reads the line-delimited trial format; the result is always fully valid.
TrialSet parse_trials(std::istream& is);
TrialSet load_trials(const std::filesystem::path& path);

void write_trials(std::ostream& os, const TrialSet& set);
void save_trials(const std::filesystem::path& path, const TrialSet& set);

}  // namespace revert::obs
