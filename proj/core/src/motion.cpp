#include "revert/motion.hpp"

#include "revert/textio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

namespace revert::motion {

namespace {

constexpr double kNullDisplacement = 1e-9;

Vec basis_activations(const DmpParams& p, double x) {
  return (-(p.widths.array() * (x - p.centers.array()).square())).exp().matrix();
}

}  // namespace

void validate(const DmpParams& p) {
  const auto n = p.weights.cols();
  if (p.weights.rows() < 1 || n < 1) throw ValidationError("DMP has no weights");
  if (p.centers.size() != n || p.widths.size() != n)
    throw ValidationError("DMP basis placement does not match the weight count");
  if ((p.widths.array() <= 0.0).any()) throw ValidationError("DMP basis widths must be > 0");
  if (!(p.tau > 0.0)) throw ValidationError("DMP tau must be > 0");
  if (!(p.alpha_z > 0.0) || !(p.alpha_x > 0.0)) throw ValidationError("DMP gains must be > 0");
  if (std::abs(p.beta_z - p.alpha_z / 4.0) > 1e-12 * p.alpha_z)
    throw ValidationError("DMP must be critically damped (beta_z = alpha_z / 4)");
  if (p.y0.size() != p.weights.rows() || p.g.size() != p.weights.rows())
    throw ValidationError("DMP start/goal dimension mismatch");
  if (!p.weights.allFinite() || !p.y0.allFinite() || !p.g.allFinite())
    throw ValidationError("DMP parameters must be finite");
}

void place_basis(int n_basis, double alpha_x, Vec& centers, Vec& widths) {
  if (n_basis < 1) throw ValidationError("need at least one basis function");
  centers.resize(n_basis);
  widths.resize(n_basis);
  const double n15 = std::pow(static_cast<double>(n_basis), 1.5);
  for (int i = 0; i < n_basis; ++i) {
    const double frac = n_basis > 1 ? static_cast<double>(i) / (n_basis - 1) : 0.0;
    centers[i] = std::exp(-alpha_x * frac);
    widths[i] = n15 / centers[i];
  }
}

DmpParams dmp_fit(const Trajectory& demo, int n_basis, const DmpGains& gains) {
  const auto t_len = demo.size();
  if (t_len < 2 || !(demo.rate_hz > 0.0))
    throw ValidationError("degenerate demonstration (zero length or zero duration)");
  if (t_len < 3 * static_cast<Eigen::Index>(n_basis))
    throw ValidationError("demonstration needs at least 3 samples per basis function");
  if (!demo.positions.allFinite()) throw ValidationError("demonstration has non-finite samples");

  DmpParams p;
  p.alpha_z = gains.alpha_z;
  p.beta_z = gains.beta_z;
  p.alpha_x = gains.alpha_x;
  p.tau = demo.duration();
  p.y0 = demo.positions.col(0);
  p.g = demo.positions.col(t_len - 1);
  place_basis(n_basis, p.alpha_x, p.centers, p.widths);

  const double dt = 1.0 / demo.rate_hz;
  const auto& y = demo.positions;
  const int dims = static_cast<int>(y.rows());
  Mat yd(dims, t_len), ydd(dims, t_len);
  // Central differences inside, one-sided at the ends.
  for (Eigen::Index t = 0; t < t_len; ++t) {
    const auto lo = std::max<Eigen::Index>(t - 1, 0);
    const auto hi = std::min<Eigen::Index>(t + 1, t_len - 1);
    yd.col(t) = (y.col(hi) - y.col(lo)) / (static_cast<double>(hi - lo) * dt);
  }
  for (Eigen::Index t = 0; t < t_len; ++t) {
    const auto lo = std::max<Eigen::Index>(t - 1, 0);
    const auto hi = std::min<Eigen::Index>(t + 1, t_len - 1);
    ydd.col(t) = (yd.col(hi) - yd.col(lo)) / (static_cast<double>(hi - lo) * dt);
  }

  // The phase the Euler rollout will produce at the demo's rate, so that fit
  // and rollout index the basis identically.
  Vec x(t_len);
  x[0] = 1.0;
  for (Eigen::Index t = 1; t < t_len; ++t) x[t] = x[t - 1] * (1.0 - p.alpha_x * dt / p.tau);
  Mat psi(n_basis, t_len);
  for (Eigen::Index t = 0; t < t_len; ++t) psi.col(t) = basis_activations(p, x[t]);

  p.weights = Mat::Zero(dims, n_basis);
  const double tau2 = p.tau * p.tau;
  for (int d = 0; d < dims; ++d) {
    const double scale = p.g[d] - p.y0[d];
    if (std::abs(scale) < kNullDisplacement) continue;
    Vec f(t_len);
    for (Eigen::Index t = 0; t < t_len; ++t)
      f[t] = (tau2 * ydd(d, t) - p.alpha_z * (p.beta_z * (p.g[d] - y(d, t)) - p.tau * yd(d, t))) /
             scale;
    for (int i = 0; i < n_basis; ++i) {
      const Vec s = psi.row(i).transpose().cwiseProduct(x);
      const double den = s.dot(x);
      if (den > 0.0) p.weights(d, i) = s.dot(f) / den;
    }
  }
  return p;
}

Trajectory dmp_rollout(const DmpParams& p, const Vec& y0, const Vec& g, double tau,
                       double rate_hz) {
  validate(p);
  if (!(tau > 0.0) || !(rate_hz > 0.0)) throw ValidationError("tau and rate must be > 0");
  if (rate_hz * tau < 10.0) throw ValidationError("rollout needs at least 10 steps per tau");
  if (y0.size() != p.dims() || g.size() != p.dims())
    throw ValidationError("rollout start/goal dimension mismatch");

  const double dt = 1.0 / rate_hz;
  const auto steps = static_cast<Eigen::Index>(std::llround(1.5 * tau * rate_hz));
  Trajectory out;
  out.rate_hz = rate_hz;
  out.positions.resize(p.dims(), steps + 1);
  out.velocities.resize(p.dims(), steps + 1);

  Vec y = y0;
  Vec v = Vec::Zero(p.dims());
  double x = 1.0;
  const Vec scale = g - y0;
  out.positions.col(0) = y;
  out.velocities.col(0).setZero();
  for (Eigen::Index s = 1; s <= steps; ++s) {
    const Vec psi = basis_activations(p, x);
    const double psum = psi.sum();
    const Vec f = psum > 0.0 ? Vec(p.weights * psi * (x / psum)) : Vec(Vec::Zero(p.dims()));
    const Vec vdot =
        (p.alpha_z * (p.beta_z * (g - y) - v) + f.cwiseProduct(scale)) / tau;
    y += v / tau * dt;
    v += vdot * dt;
    x += -p.alpha_x * x / tau * dt;
    out.positions.col(s) = y;
    out.velocities.col(s) = v / tau;
  }
  return out;
}

Trajectory dmp_rollout(const DmpParams& p, double rate_hz) {
  return dmp_rollout(p, p.y0, p.g, p.tau, rate_hz);
}

DmpParams retarget(const DmpParams& p, const Vec& new_g) {
  if (new_g.size() != p.g.size()) throw ValidationError("retarget goal dimension mismatch");
  DmpParams out = p;
  out.g = new_g;
  return out;
}

// --- splines ----------------------------------------------------------------

CubicSpline::CubicSpline(std::vector<Waypoint> waypoints) : pts_(std::move(waypoints)) {
  if (pts_.size() < 2) throw ValidationError("spline needs at least 2 waypoints");
  const auto dims = pts_.front().position.size();
  for (std::size_t i = 0; i < pts_.size(); ++i) {
    if (pts_[i].position.size() != dims)
      throw ValidationError("waypoints differ in dimension");
    if (!std::isfinite(pts_[i].t) || !pts_[i].position.allFinite())
      throw ValidationError("waypoints must be finite");
    if (i > 0 && !(pts_[i].t > pts_[i - 1].t))
      throw ValidationError("waypoint timestamps must be strictly increasing (duplicate at index " +
                            std::to_string(i) + ")");
  }
  // Tridiagonal system for the knot second derivatives, natural ends.
  const std::size_t n = pts_.size();
  m_.assign(n, Vec::Zero(dims));
  if (n == 2) return;
  std::vector<double> diag(n, 0.0), upper(n, 0.0);
  std::vector<Vec> rhs(n, Vec::Zero(dims));
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double h0 = pts_[i].t - pts_[i - 1].t;
    const double h1 = pts_[i + 1].t - pts_[i].t;
    diag[i] = (h0 + h1) / 3.0;
    upper[i] = h1 / 6.0;
    rhs[i] = (pts_[i + 1].position - pts_[i].position) / h1 -
             (pts_[i].position - pts_[i - 1].position) / h0;
  }
  // Thomas algorithm on rows 1..n-2 (lower entry of row i is h_{i-1} / 6).
  for (std::size_t i = 2; i + 1 < n; ++i) {
    const double lower = (pts_[i].t - pts_[i - 1].t) / 6.0;
    const double w = lower / diag[i - 1];
    diag[i] -= w * upper[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  for (std::size_t i = n - 2; i >= 1; --i) {
    Vec r = rhs[i];
    if (i + 2 < n) r -= upper[i] * m_[i + 1];
    m_[i] = r / diag[i];
  }
}

std::size_t CubicSpline::segment(double t) const {
  const auto it = std::upper_bound(pts_.begin(), pts_.end(), t,
                                   [](double v, const Waypoint& w) { return v < w.t; });
  const auto idx = static_cast<std::size_t>(std::distance(pts_.begin(), it));
  return std::clamp<std::size_t>(idx == 0 ? 0 : idx - 1, 0, pts_.size() - 2);
}

Vec CubicSpline::position(double t) const {
  const std::size_t i = segment(t);
  const double h = pts_[i + 1].t - pts_[i].t;
  const double a = (pts_[i + 1].t - t) / h;
  const double b = (t - pts_[i].t) / h;
  return a * pts_[i].position + b * pts_[i + 1].position +
         ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * (h * h / 6.0);
}

Vec CubicSpline::velocity(double t) const {
  const std::size_t i = segment(t);
  const double h = pts_[i + 1].t - pts_[i].t;
  const double a = (pts_[i + 1].t - t) / h;
  const double b = (t - pts_[i].t) / h;
  return (pts_[i + 1].position - pts_[i].position) / h +
         ((1.0 - 3.0 * a * a) * m_[i] + (3.0 * b * b - 1.0) * m_[i + 1]) * (h / 6.0);
}

Trajectory spline_interp(const std::vector<Waypoint>& waypoints, double rate_hz) {
  if (!(rate_hz > 0.0)) throw ValidationError("rate must be > 0");
  CubicSpline s(waypoints);
  const double t0 = s.start();
  const double span = s.end() - t0;
  auto n = static_cast<Eigen::Index>(std::floor(span * rate_hz + 1e-9));
  // The last waypoint closes the trajectory even when span * rate is not integral.
  const bool exact = std::abs(static_cast<double>(n) / rate_hz - span) <= 1e-12 * std::max(1.0, span);
  const Eigen::Index count = exact ? n + 1 : n + 2;
  Trajectory out;
  out.rate_hz = rate_hz;
  const auto dims = waypoints.front().position.size();
  out.positions.resize(dims, count);
  out.velocities.resize(dims, count);
  for (Eigen::Index i = 0; i + 1 < count; ++i) {
    const double t = t0 + static_cast<double>(i) / rate_hz;
    out.positions.col(i) = s.position(t);
    out.velocities.col(i) = s.velocity(t);
  }
  out.positions.col(count - 1) = waypoints.back().position;
  out.velocities.col(count - 1) = s.velocity(s.end());
  return out;
}

void normalize_quaternions(Trajectory& traj, int offset) {
  if (traj.dims() < offset + 4) throw ValidationError("trajectory has no quaternion block");
  for (Eigen::Index i = 0; i < traj.size(); ++i) {
    auto q = traj.positions.col(i).segment(offset, 4);
    if (i > 0 && q.dot(traj.positions.col(i - 1).segment(offset, 4)) < 0.0) q = -q;
    const double n = q.norm();
    if (n > 0.0) q /= n;
  }
}

Trajectory pose_trajectory(const obs::Trial& trial) {
  Trajectory out;
  out.rate_hz = trial.rate_hz;
  const auto t_len = static_cast<Eigen::Index>(trial.samples.size());
  out.positions.resize(7, t_len);
  out.velocities = Mat::Zero(7, t_len);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    const auto& s = trial.samples[static_cast<std::size_t>(t)];
    out.positions.col(t) << s.position, s.orientation;
  }
  return out;
}

// --- files ------------------------------------------------------------------

void write_dmp(std::ostream& os, const DmpParams& p) {
  os << "revert-dmp 1\n";
  os << "dims " << p.dims() << '\n';
  os << "basis " << p.basis() << '\n';
  os << "alpha_z " << textio::fmt(p.alpha_z) << '\n';
  os << "beta_z " << textio::fmt(p.beta_z) << '\n';
  os << "alpha_x " << textio::fmt(p.alpha_x) << '\n';
  os << "tau " << textio::fmt(p.tau) << '\n';
  os << "y0 ";
  textio::write_row(os, p.y0.transpose());
  os << "g ";
  textio::write_row(os, p.g.transpose());
  os << "centers ";
  textio::write_row(os, p.centers.transpose());
  os << "widths ";
  textio::write_row(os, p.widths.transpose());
  os << "weights\n";
  textio::write_matrix(os, p.weights);
  os << "end\n";
}

DmpParams read_dmp(std::istream& is) {
  textio::LineReader in(is);
  auto expect = [&](const std::string& key) {
    auto tok = in.expect_tokens(key);
    if (tok.front() != key) throw ParseError("expected '" + key + "'", in.line_no());
    return tok;
  };
  auto scalar = [&](const std::string& key) {
    auto tok = expect(key);
    if (tok.size() != 2) throw ParseError("'" + key + "' takes one value", in.line_no());
    return textio::parse_double(tok[1], in.line_no());
  };
  auto vec = [&](const std::string& key, long n) {
    auto tok = expect(key);
    if (static_cast<long>(tok.size()) != n + 1)
      throw ParseError("'" + key + "' needs " + std::to_string(n) + " values", in.line_no());
    Vec v(n);
    for (long i = 0; i < n; ++i)
      v[i] = textio::parse_double(tok[static_cast<std::size_t>(i + 1)], in.line_no());
    return v;
  };
  auto header = in.expect_tokens("header");
  if (header.size() != 2 || header[0] != "revert-dmp" || header[1] != "1")
    throw ParseError("not a DMP file", in.line_no());
  const long dims = textio::parse_long(expect("dims").at(1), in.line_no());
  const long basis = textio::parse_long(expect("basis").at(1), in.line_no());
  if (dims < 1 || basis < 1) throw ParseError("dims and basis must be >= 1", in.line_no());
  DmpParams p;
  p.alpha_z = scalar("alpha_z");
  p.beta_z = scalar("beta_z");
  p.alpha_x = scalar("alpha_x");
  p.tau = scalar("tau");
  p.y0 = vec("y0", dims);
  p.g = vec("g", dims);
  p.centers = vec("centers", basis);
  p.widths = vec("widths", basis);
  expect("weights");
  p.weights = in.read_matrix(dims, basis);
  expect("end");
  validate(p);
  return p;
}

void save_dmp(const std::filesystem::path& path, const DmpParams& p) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  write_dmp(os, p);
}

DmpParams load_dmp(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path.string());
  return read_dmp(is);
}

}  // namespace revert::motion
