#pragma once

#include "revert/common.hpp"
#include "revert/obsdata.hpp"

#include <filesystem>
#include <iosfwd>
#include <vector>

/// Motion generation: discrete dynamic movement primitives and natural cubic
/// spline interpolation.
namespace revert::motion {

/// Uniform-rate setpoint sequence; column i is the sample at t0 + i / rate.
struct Trajectory {
  double rate_hz = kDefaultRateHz;
  Mat positions;   ///< dims x T
  Mat velocities;  ///< dims x T

  int dims() const noexcept { return static_cast<int>(positions.rows()); }
  Eigen::Index size() const noexcept { return positions.cols(); }
  double duration() const noexcept {
    return size() > 1 ? static_cast<double>(size() - 1) / rate_hz : 0.0;
  }
};

struct DmpGains {
  double alpha_z = 25.0;
  double beta_z = 6.25;
  /// Canonical decay; the phase obeys tau x' = -alpha_x x, so the decay rate
  /// in 1/s is alpha_x / tau.
  double alpha_x = 8.0;
};

/// Point-attractor DMP, one transformation system per dimension:
///   tau v' = alpha_z (beta_z (g - y) - v) + f(x) (g - y0),  tau y' = v
///   f(x) = x sum_i psi_i(x) w_i / sum_i psi_i(x),  psi_i = exp(-h_i (x - c_i)^2)
struct DmpParams {
  Mat weights;  ///< dims x N
  Vec centers;
  Vec widths;
  double alpha_z = 25.0;
  double beta_z = 6.25;
  double alpha_x = 8.0;
  double tau = 1.0;
  Vec y0;
  Vec g;

  int dims() const noexcept { return static_cast<int>(weights.rows()); }
  int basis() const noexcept { return static_cast<int>(weights.cols()); }
};

void validate(const DmpParams& p);

/// Basis placement equally spaced in time: c_i = exp(-alpha_x i / (N - 1)),
/// h_i = N^1.5 / c_i.
void place_basis(int n_basis, double alpha_x, Vec& centers, Vec& widths);

/// Locally weighted regression of the demo's forcing term. tau is the demo
/// duration; y0 and g are its endpoints. Dimensions without net displacement
/// get zero weights.
DmpParams dmp_fit(const Trajectory& demo, int n_basis, const DmpGains& gains = {});

/// Euler integration at 1/rate over [0, 1.5 tau].
Trajectory dmp_rollout(const DmpParams& p, const Vec& y0, const Vec& g, double tau,
                       double rate_hz);
Trajectory dmp_rollout(const DmpParams& p, double rate_hz);

/// Copy with only the goal replaced.
DmpParams retarget(const DmpParams& p, const Vec& new_g);

struct Waypoint {
  double t = 0.0;
  Vec position;
};

/// Natural cubic spline (zero end accelerations) through every waypoint.
class CubicSpline {
 public:
  explicit CubicSpline(std::vector<Waypoint> waypoints);

  Vec position(double t) const;
  Vec velocity(double t) const;
  double start() const noexcept { return pts_.front().t; }
  double end() const noexcept { return pts_.back().t; }

 private:
  std::size_t segment(double t) const;

  std::vector<Waypoint> pts_;
  std::vector<Vec> m_;  // second derivatives at the knots
};

/// Samples the spline at t0 + i / rate up to the last waypoint; the final
/// waypoint is always included as the last sample.
Trajectory spline_interp(const std::vector<Waypoint>& waypoints, double rate_hz);

/// Unit-normalizes the quaternion block [offset, offset + 4) of every sample,
/// keeping consecutive samples in the same hemisphere.
void normalize_quaternions(Trajectory& traj, int offset = 3);

/// Pose channels of a recorded trial as a 7 x T trajectory.
Trajectory pose_trajectory(const obs::Trial& trial);

void write_dmp(std::ostream& os, const DmpParams& p);
DmpParams read_dmp(std::istream& is);
void save_dmp(const std::filesystem::path& path, const DmpParams& p);
DmpParams load_dmp(const std::filesystem::path& path);

}  // namespace revert::motion
