#include "revert/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace revert::hmm {

namespace {

constexpr double kSimplexTol = 1e-10;
constexpr double kEmptyModeMass = 1e-8;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

void check_simplex(const Eigen::Ref<const Vec>& p, const std::string& what) {
  if (!p.allFinite() || (p.array() < 0.0).any())
    throw ValidationError(what + " has negative or non-finite entries");
  if (std::abs(p.sum() - 1.0) > kSimplexTol)
    throw ValidationError(what + " does not sum to 1 (sum " + std::to_string(p.sum()) + ")");
}

Mat clamp_eigenvalues(const Mat& s, double floor) {
  Mat sym = 0.5 * (s + s.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(sym);
  if (es.eigenvalues().minCoeff() >= floor) return sym;
  const Vec vals = es.eigenvalues().cwiseMax(floor);
  Mat out = es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

}  // namespace

std::string to_string(EmissionKind k) {
  switch (k) {
    case EmissionKind::gaussian_full: return "gaussian_full";
    case EmissionKind::gaussian_diag: return "gaussian_diag";
    case EmissionKind::gaussian_spherical: return "gaussian_spherical";
    case EmissionKind::var: return "var";
  }
  return "unknown";
}

EmissionKind emission_kind_from_string(const std::string& s) {
  if (s == "gaussian_full" || s == "full") return EmissionKind::gaussian_full;
  if (s == "gaussian_diag" || s == "diag") return EmissionKind::gaussian_diag;
  if (s == "gaussian_spherical" || s == "spherical") return EmissionKind::gaussian_spherical;
  if (s == "var") return EmissionKind::var;
  throw ParseError("unknown emission kind '" + s + "'", 0);
}

// --- EmissionModel ----------------------------------------------------------

EmissionModel EmissionModel::gaussian(EmissionKind kind, std::vector<Vec> means,
                                      std::vector<Mat> covs) {
  if (kind == EmissionKind::var) throw ValidationError("gaussian() called with var kind");
  EmissionModel m;
  m.kind_ = kind;
  m.means_ = std::move(means);
  m.covs_ = std::move(covs);
  if (m.means_.size() != m.covs_.size() || m.means_.empty())
    throw ValidationError("emission model needs one mean and covariance per mode");
  m.dim_ = static_cast<int>(m.means_.front().size());
  for (const auto& mu : m.means_)
    if (mu.size() != m.dim_ || !mu.allFinite())
      throw ValidationError("mode mean has inconsistent dimension or non-finite entries");
  m.finalize();
  return m;
}

EmissionModel EmissionModel::var(int order, std::vector<Mat> coefs, std::vector<Mat> covs) {
  if (order < 1) throw ValidationError("VAR order must be >= 1");
  EmissionModel m;
  m.kind_ = EmissionKind::var;
  m.order_ = order;
  m.coefs_ = std::move(coefs);
  m.covs_ = std::move(covs);
  if (m.coefs_.size() != m.covs_.size() || m.coefs_.empty())
    throw ValidationError("emission model needs one coefficient matrix and covariance per mode");
  m.dim_ = static_cast<int>(m.coefs_.front().rows());
  for (const auto& a : m.coefs_)
    if (a.rows() != m.dim_ || a.cols() != static_cast<Eigen::Index>(m.dim_) * order ||
        !a.allFinite())
      throw ValidationError("VAR coefficient matrix must be d x (d*r) with d=" +
                            std::to_string(m.dim_) + ", r=" + std::to_string(order));
  m.finalize();
  return m;
}

void EmissionModel::finalize() {
  chol_.clear();
  lognorm_.clear();
  for (std::size_t k = 0; k < covs_.size(); ++k) {
    const Mat& s = covs_[k];
    if (s.rows() != dim_ || s.cols() != dim_ || !s.allFinite())
      throw ValidationError("covariance of mode " + std::to_string(k) + " has wrong shape");
    const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
    if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale)
      throw ValidationError("covariance of mode " + std::to_string(k) + " is not symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> es(s, Eigen::EigenvaluesOnly);
    if (!(es.eigenvalues().minCoeff() > 0.0))
      throw ValidationError("covariance of mode " + std::to_string(k) +
                            " is not positive-definite");
    Eigen::LLT<Mat> llt(s);
    if (llt.info() != Eigen::Success)
      throw ValidationError("covariance of mode " + std::to_string(k) +
                            " failed Cholesky factorization");
    Mat l = llt.matrixL();
    lognorm_.push_back(-0.5 * dim_ * kLog2Pi - l.diagonal().array().log().sum());
    chol_.push_back(std::move(l));
  }
}

double EmissionModel::log_density(int k, const Eigen::Ref<const Vec>& y,
                                  const Eigen::Ref<const Vec>& lagged) const {
  const auto ku = static_cast<std::size_t>(k);
  Vec r = is_var() ? Vec(y - coefs_[ku] * lagged) : Vec(y - means_[ku]);
  chol_[ku].triangularView<Eigen::Lower>().solveInPlace(r);
  return lognorm_[ku] - 0.5 * r.squaredNorm();
}

Mat EmissionModel::log_densities(const Mat& y, const Mat& x) const {
  Mat out(modes(), y.cols());
  for (int k = 0; k < modes(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    Mat r = is_var() ? Mat(y - coefs_[ku] * x) : Mat(y.colwise() - means_[ku]);
    chol_[ku].triangularView<Eigen::Lower>().solveInPlace(r);
    out.row(k) = (lognorm_[ku] - 0.5 * r.colwise().squaredNorm().array()).matrix();
  }
  return out;
}

// --- SkillModel -------------------------------------------------------------

SkillModel::SkillModel(std::string skill_id, Vec pi0, Mat trans, EmissionModel emission)
    : skill_id_(std::move(skill_id)),
      pi0_(std::move(pi0)),
      trans_(std::move(trans)),
      emission_(std::move(emission)) {
  const auto k = pi0_.size();
  if (k < 1) throw ValidationError("model needs at least one mode");
  if (trans_.rows() != k || trans_.cols() != k)
    throw ValidationError("transition matrix must be K x K");
  if (emission_.modes() != k) throw ValidationError("emission mode count differs from K");
  check_simplex(pi0_, "initial distribution");
  for (Eigen::Index j = 0; j < k; ++j)
    check_simplex(trans_.row(j).transpose(), "transition row " + std::to_string(j));
}

// --- forward recursion ------------------------------------------------------

Mat lag_stack(const Mat& seq, int order) {
  const auto d = seq.rows();
  const auto t_len = seq.cols();
  Mat x(d * order, t_len);
  for (Eigen::Index t = 0; t < t_len; ++t)
    for (int i = 1; i <= order; ++i)
      x.block(d * (i - 1), t, d, 1) = seq.col(std::max<Eigen::Index>(t - i, 0));
  return x;
}

double emission_logdensity(const SkillModel& model, std::span<const Vec> history, const Vec& y,
                           int k) {
  const auto& em = model.emission();
  if (y.size() != em.dim()) throw ValidationError("observation dimension differs from model");
  if (k < 0 || k >= em.modes()) throw ValidationError("mode index out of range");
  if (!em.is_var()) return em.log_density(k, y, y);
  const auto r = static_cast<std::size_t>(em.order());
  if (history.size() < r) throw ValidationError("history shorter than VAR order");
  Vec x(em.dim() * em.order());
  for (std::size_t i = 0; i < r; ++i) {
    if (history[i].size() != em.dim()) throw ValidationError("history vector dimension");
    x.segment(static_cast<Eigen::Index>(i) * em.dim(), em.dim()) = history[i];
  }
  return em.log_density(k, y, x);
}

namespace {

// One scaled forward update: alpha <- normalize(pred .* exp(logb - m)).
// The shift m is taken over modes reachable under `pred` so the normalizer
// cannot underflow when unreachable modes dominate the emission term.
double scaled_update(const Vec& pred, const Vec& logb, Vec& alpha) {
  double m = kNegInf;
  for (Eigen::Index k = 0; k < pred.size(); ++k)
    if (pred[k] > 0.0) m = std::max(m, logb[k]);
  if (!std::isfinite(m)) {
    alpha.setConstant(pred.size(), 1.0 / static_cast<double>(pred.size()));
    return kNegInf;
  }
  alpha = pred.array() * (logb.array() - m).exp();
  const double c = alpha.sum();
  alpha /= c;
  return std::log(c) + m;
}

}  // namespace

ForwardFilter::ForwardFilter(const SkillModel& model) : model_(&model) { reset(); }

void ForwardFilter::reset() {
  const int k = model_->modes();
  alpha_ = Vec::Zero(k);
  pred_ = Vec::Zero(k);
  logb_ = Vec::Zero(k);
  const auto& em = model_->emission();
  lagged_ = Vec::Zero(em.is_var() ? em.dim() * em.order() : 0);
  loglik_ = 0.0;
  steps_ = 0;
}

double ForwardFilter::step(const Eigen::Ref<const Vec>& y) {
  const auto& em = model_->emission();
  if (y.size() != em.dim())
    throw ValidationError("observation dimension " + std::to_string(y.size()) +
                          " differs from model dimension " + std::to_string(em.dim()));
  const int d = em.dim();
  if (em.is_var() && steps_ == 0)
    for (int i = 0; i < em.order(); ++i) lagged_.segment(i * d, d) = y;
  for (int k = 0; k < em.modes(); ++k) logb_[k] = em.log_density(k, y, lagged_);
  if (steps_ == 0)
    pred_ = model_->pi0();
  else
    pred_.noalias() = model_->trans().transpose() * alpha_;
  loglik_ += scaled_update(pred_, logb_, alpha_);
  if (em.is_var()) {
    const int n = d * em.order();
    if (em.order() > 1) {
      Vec shifted = lagged_.head(n - d);
      lagged_.tail(n - d) = shifted;
    }
    lagged_.head(d) = y;
  }
  ++steps_;
  return loglik_;
}

std::vector<double> forward_curve(const SkillModel& model, const Mat& seq) {
  if (seq.cols() > 0 && seq.rows() != model.dim())
    throw ValidationError("trial dimension " + std::to_string(seq.rows()) +
                          " differs from model dimension " + std::to_string(model.dim()));
  std::vector<double> curve;
  curve.reserve(static_cast<std::size_t>(seq.cols()));
  if (seq.cols() == 0) return curve;
  const auto& em = model.emission();
  const Mat logb = em.log_densities(seq, em.is_var() ? lag_stack(seq, em.order()) : Mat());
  Vec alpha(model.modes());
  Vec pred = model.pi0();
  double total = 0.0;
  for (Eigen::Index t = 0; t < seq.cols(); ++t) {
    if (t > 0) pred.noalias() = model.trans().transpose() * alpha;
    total += scaled_update(pred, logb.col(t), alpha);
    curve.push_back(total);
  }
  return curve;
}

double forward_loglik(const SkillModel& model, const Mat& seq) {
  const auto curve = forward_curve(model, seq);
  return curve.empty() ? 0.0 : curve.back();
}

// --- Viterbi ----------------------------------------------------------------

std::vector<int> viterbi_modes(const SkillModel& model, const Mat& seq) {
  if (seq.cols() == 0) throw ValidationError("viterbi_modes needs a non-empty trial");
  if (seq.rows() != model.dim()) throw ValidationError("trial dimension differs from model");
  const auto& em = model.emission();
  const Mat logb = em.log_densities(seq, em.is_var() ? lag_stack(seq, em.order()) : Mat());
  const int k = model.modes();
  const auto t_len = seq.cols();
  const Mat log_a = model.trans().array().log().matrix();
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> back(k, t_len);
  Vec delta = model.pi0().array().log().matrix() + logb.col(0);
  Vec next(k);
  for (Eigen::Index t = 1; t < t_len; ++t) {
    for (int j = 0; j < k; ++j) {
      int best = 0;
      double best_v = delta[0] + log_a(0, j);
      for (int i = 1; i < k; ++i) {
        const double v = delta[i] + log_a(i, j);
        if (v > best_v) {
          best_v = v;
          best = i;
        }
      }
      back(j, t) = best;
      next[j] = best_v + logb(j, t);
    }
    delta.swap(next);
  }
  int last = 0;
  for (int j = 1; j < k; ++j)
    if (delta[j] > delta[last]) last = j;
  std::vector<int> path(static_cast<std::size_t>(t_len));
  path.back() = last;
  for (Eigen::Index t = t_len - 1; t > 0; --t)
    path[static_cast<std::size_t>(t - 1)] = back(path[static_cast<std::size_t>(t)], t);
  return path;
}

double path_logprob(const SkillModel& model, const Mat& seq, std::span<const int> path) {
  if (static_cast<Eigen::Index>(path.size()) != seq.cols())
    throw ValidationError("path length differs from trial length");
  if (path.empty()) return 0.0;
  const auto& em = model.emission();
  const Mat logb = em.log_densities(seq, em.is_var() ? lag_stack(seq, em.order()) : Mat());
  double lp = std::log(model.pi0()[path[0]]) + logb(path[0], 0);
  for (std::size_t t = 1; t < path.size(); ++t)
    lp += std::log(model.trans()(path[t - 1], path[t])) +
          logb(path[t], static_cast<Eigen::Index>(t));
  return lp;
}

// --- Baum-Welch -------------------------------------------------------------

namespace {

struct Sufficient {
  Vec gamma0;
  Mat xi;
  Vec weight;
  std::vector<Vec> sy;
  std::vector<Mat> syy, sxx, syx;

  Sufficient(int k, int d, int p, bool var) : gamma0(Vec::Zero(k)), xi(Mat::Zero(k, k)),
                                              weight(Vec::Zero(k)) {
    sy.assign(static_cast<std::size_t>(k), Vec::Zero(d));
    syy.assign(static_cast<std::size_t>(k), Mat::Zero(d, d));
    if (var) {
      sxx.assign(static_cast<std::size_t>(k), Mat::Zero(p, p));
      syx.assign(static_cast<std::size_t>(k), Mat::Zero(d, p));
    }
  }
};

// Responsibility-weighted statistics for one trial.
void accumulate(Sufficient& s, const Mat& y, const Mat& x, const Mat& gamma, bool var) {
  for (Eigen::Index k = 0; k < gamma.rows(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const auto g = gamma.row(k).array();
    const Mat yw = (y.array().rowwise() * g).matrix();
    s.weight[k] += gamma.row(k).sum();
    s.sy[ku] += yw.rowwise().sum();
    s.syy[ku].noalias() += yw * y.transpose();
    if (var) {
      const Mat xw = (x.array().rowwise() * g).matrix();
      s.sxx[ku].noalias() += xw * x.transpose();
      s.syx[ku].noalias() += yw * x.transpose();
    }
  }
}

// Scaled forward-backward for one trial; returns log p(y) and fills gamma
// and accumulates expected transition counts.
double forward_backward(const SkillModel& model, const Mat& logb, Mat& gamma, Mat& xi_acc) {
  const int k = model.modes();
  const auto t_len = logb.cols();
  const Mat& a = model.trans();
  Mat alpha(k, t_len), b(k, t_len);
  Vec c(t_len);
  double ll = 0.0;
  Vec pred = model.pi0();
  Vec col(k);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    if (t > 0) pred.noalias() = a.transpose() * alpha.col(t - 1);
    double m = kNegInf;
    for (int j = 0; j < k; ++j)
      if (pred[j] > 0.0) m = std::max(m, logb(j, t));
    b.col(t) = (logb.col(t).array() - m).exp();
    col = pred.array() * b.col(t).array();
    c[t] = col.sum();
    alpha.col(t) = col / c[t];
    ll += std::log(c[t]) + m;
  }
  Mat beta(k, t_len);
  beta.col(t_len - 1).setOnes();
  for (Eigen::Index t = t_len - 2; t >= 0; --t)
    beta.col(t) = a * (b.col(t + 1).cwiseProduct(beta.col(t + 1))) / c[t + 1];
  gamma = alpha.cwiseProduct(beta);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    const double s = gamma.col(t).sum();
    if (s > 0.0) gamma.col(t) /= s;
  }
  if (t_len > 1) {
    Mat w = b.rightCols(t_len - 1).cwiseProduct(beta.rightCols(t_len - 1));
    w.array().rowwise() /= c.tail(t_len - 1).transpose().array();
    xi_acc += a.cwiseProduct(alpha.leftCols(t_len - 1) * w.transpose());
  }
  return ll;
}

Mat solve_coefficients(const Mat& sxx, const Mat& syx) {
  Eigen::CompleteOrthogonalDecomposition<Mat> cod(sxx);
  return cod.solve(syx.transpose()).transpose();
}

Mat residual_cov(const Mat& a, const Mat& sxx, const Mat& syx, const Mat& syy, double w) {
  const Mat ayx = a * syx.transpose();
  return (syy - ayx - ayx.transpose() + a * sxx * a.transpose()) / w;
}

struct Pool {
  std::vector<const Mat*> y;
  std::vector<Mat> x;
  Eigen::Index total = 0;
  // pooled sample index -> (trial, column)
  std::pair<std::size_t, Eigen::Index> locate(Eigen::Index i) const {
    for (std::size_t n = 0; n < y.size(); ++n) {
      if (i < y[n]->cols()) return {n, i};
      i -= y[n]->cols();
    }
    return {y.size() - 1, y.back()->cols() - 1};
  }
};

class EmissionFitter {
 public:
  EmissionFitter(const Pool& pool, EmissionKind kind, int order, double floor, Rng& rng)
      : pool_(pool), kind_(kind), order_(order), floor_(floor), rng_(rng) {}

  EmissionModel fit(const Sufficient& s, int& reseeded) {
    const int k = static_cast<int>(s.weight.size());
    std::vector<Vec> means;
    std::vector<Mat> coefs, covs;
    for (int j = 0; j < k; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      const double w = s.weight[j];
      if (!(w >= kEmptyModeMass)) {
        ++reseeded;
        reseed(means, coefs, covs);
        continue;
      }
      if (kind_ == EmissionKind::var) {
        Mat a = solve_coefficients(s.sxx[ju], s.syx[ju]);
        covs.push_back(clamp_eigenvalues(residual_cov(a, s.sxx[ju], s.syx[ju], s.syy[ju], w),
                                         floor_));
        coefs.push_back(std::move(a));
        continue;
      }
      Vec mu = s.sy[ju] / w;
      Mat cov = s.syy[ju] / w - mu * mu.transpose();
      means.push_back(std::move(mu));
      covs.push_back(shape_cov(cov));
    }
    if (kind_ == EmissionKind::var) return EmissionModel::var(order_, coefs, covs);
    return EmissionModel::gaussian(kind_, means, covs);
  }

 private:
  Mat shape_cov(const Mat& cov) const {
    const auto d = cov.rows();
    switch (kind_) {
      case EmissionKind::gaussian_diag:
        return cov.diagonal().cwiseMax(floor_).asDiagonal();
      case EmissionKind::gaussian_spherical:
        return Mat::Identity(d, d) * std::max(cov.diagonal().mean(), floor_);
      default:
        return clamp_eigenvalues(cov, floor_);
    }
  }

  // Empty mode: restart it at a uniformly drawn training sample.
  void reseed(std::vector<Vec>& means, std::vector<Mat>& coefs, std::vector<Mat>& covs) {
    std::uniform_int_distribution<Eigen::Index> pick(0, pool_.total - 1);
    const auto [n, col] = pool_.locate(pick(rng_));
    const Mat& y = *pool_.y[n];
    const auto d = y.rows();
    // local window around the sample supplies a covariance (and VAR fit)
    const Eigen::Index half = std::max<Eigen::Index>(10, 2 * d * std::max(order_, 1));
    const Eigen::Index lo = std::max<Eigen::Index>(0, col - half);
    const Eigen::Index hi = std::min<Eigen::Index>(y.cols(), col + half + 1);
    const Mat yw = y.middleCols(lo, hi - lo);
    if (kind_ == EmissionKind::var) {
      const Mat xw = pool_.x[n].middleCols(lo, hi - lo);
      const Mat sxx = xw * xw.transpose() + 1e-6 * Mat::Identity(xw.rows(), xw.rows());
      const Mat syx = yw * xw.transpose();
      Mat a = solve_coefficients(sxx, syx);
      const Mat r = yw - a * xw;
      covs.push_back(clamp_eigenvalues(r * r.transpose() / static_cast<double>(r.cols()), floor_));
      coefs.push_back(std::move(a));
      return;
    }
    const Vec mu = y.col(col);
    const Mat centered = yw.colwise() - yw.rowwise().mean();
    means.push_back(mu);
    covs.push_back(shape_cov(centered * centered.transpose() / static_cast<double>(yw.cols())));
  }

  const Pool& pool_;
  EmissionKind kind_;
  int order_;
  double floor_;
  Rng& rng_;
};

// k-means++ seeding followed by Lloyd iterations; returns a label per column.
std::vector<int> kmeans_labels(const Mat& pts, int k, int iterations, Rng& rng) {
  const auto n = pts.cols();
  Mat centers(pts.rows(), k);
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centers.col(0) = pts.col(first(rng));
  Vec d2 = (pts.colwise() - centers.col(0)).colwise().squaredNorm().transpose();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index chosen = first(rng);
    if (total > 0.0) {
      double u = unif(rng) * total;
      for (Eigen::Index i = 0; i < n; ++i) {
        u -= d2[i];
        if (u <= 0.0) {
          chosen = i;
          break;
        }
      }
    }
    centers.col(c) = pts.col(chosen);
    d2 = d2.cwiseMin((pts.colwise() - centers.col(c)).colwise().squaredNorm().transpose());
  }
  std::vector<int> labels(static_cast<std::size_t>(n), 0);
  for (int it = 0; it <= iterations; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      (centers.colwise() - pts.col(i)).colwise().squaredNorm().minCoeff(&best);
      if (labels[static_cast<std::size_t>(i)] != static_cast<int>(best)) changed = true;
      labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    if (it == iterations || (!changed && it > 0)) break;
    Mat sums = Mat::Zero(pts.rows(), k);
    Vec counts = Vec::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.col(labels[static_cast<std::size_t>(i)]) += pts.col(i);
      counts[labels[static_cast<std::size_t>(i)]] += 1.0;
    }
    for (int c = 0; c < k; ++c)
      if (counts[c] > 0.0) centers.col(c) = sums.col(c) / counts[c];
  }
  return labels;
}

Mat normalize_rows(Mat m) {
  for (Eigen::Index j = 0; j < m.rows(); ++j) {
    const double s = m.row(j).sum();
    if (s > 0.0)
      m.row(j) /= s;
    else
      m.row(j).setConstant(1.0 / static_cast<double>(m.cols()));
  }
  return m;
}

}  // namespace

FitResult baum_welch_fit(const std::vector<Mat>& data, int modes, EmissionKind kind,
                         const FitConfig& config, const std::string& skill_id) {
  if (modes < 1) throw ValidationError("mode count must be >= 1");
  if (data.empty()) throw ValidationError("no training trials");
  const bool var = kind == EmissionKind::var;
  const int order = var ? config.order : 0;
  if (var && order < 1) throw ValidationError("VAR order must be >= 1");
  const auto d = data.front().rows();
  Pool pool;
  for (const auto& y : data) {
    if (y.rows() != d) throw ValidationError("training trials differ in dimension");
    if (var && y.cols() <= order)
      throw ValidationError("every trial must be longer than the VAR order");
    pool.y.push_back(&y);
    pool.x.push_back(var ? lag_stack(y, order) : Mat());
    pool.total += y.cols();
  }
  if (pool.total < modes) throw ValidationError("fewer samples than modes");

  Rng rng(config.seed);
  const auto p = var ? d * order : 0;
  EmissionFitter fitter(pool, kind, order, config.cov_floor, rng);
  int reseeded = 0;

  // Initial parameters from hard k-means labels.
  Mat pts(var ? d + p : d, pool.total);
  {
    Eigen::Index off = 0;
    for (std::size_t n = 0; n < data.size(); ++n) {
      const auto t_len = data[n].cols();
      pts.block(0, off, d, t_len) = data[n];
      if (var) pts.block(d, off, p, t_len) = pool.x[n];
      off += t_len;
    }
  }
  const auto labels = kmeans_labels(pts, modes, config.kmeans_iterations, rng);
  Sufficient init(modes, static_cast<int>(d), static_cast<int>(p), var);
  Mat trans_counts = Mat::Ones(modes, modes);
  Vec pi_counts = Vec::Ones(modes);
  {
    Eigen::Index off = 0;
    for (std::size_t n = 0; n < data.size(); ++n) {
      const auto t_len = data[n].cols();
      Mat gamma = Mat::Zero(modes, t_len);
      for (Eigen::Index t = 0; t < t_len; ++t) {
        const int z = labels[static_cast<std::size_t>(off + t)];
        gamma(z, t) = 1.0;
        if (t == 0)
          pi_counts[z] += 1.0;
        else
          trans_counts(labels[static_cast<std::size_t>(off + t - 1)], z) += 1.0;
      }
      accumulate(init, data[n], pool.x[n], gamma, var);
      off += t_len;
    }
  }
  SkillModel model(skill_id, pi_counts / pi_counts.sum(), normalize_rows(trans_counts),
                   fitter.fit(init, reseeded));

  FitResult result{model, {}, false, 0};
  double prev = kNegInf;
  for (int iter = 0; iter < std::max(1, config.max_iterations); ++iter) {
    Sufficient s(modes, static_cast<int>(d), static_cast<int>(p), var);
    double ll = 0.0;
    Mat gamma;
    for (std::size_t n = 0; n < data.size(); ++n) {
      const Mat logb = model.emission().log_densities(data[n], pool.x[n]);
      ll += forward_backward(model, logb, gamma, s.xi);
      s.gamma0 += gamma.col(0);
      accumulate(s, data[n], pool.x[n], gamma, var);
    }
    result.loglik_history.push_back(ll);
    result.model = model;
    if (config.tolerance > 0.0 && std::isfinite(prev) &&
        std::abs(ll - prev) <= config.tolerance * (1.0 + std::abs(prev))) {
      result.converged = true;
      break;
    }
    if (iter + 1 >= config.max_iterations) break;
    prev = ll;
    Vec pi0 = s.gamma0 / s.gamma0.sum();
    model = SkillModel(skill_id, pi0 / pi0.sum(), normalize_rows(s.xi), fitter.fit(s, reseeded));
  }
  result.reseeded_modes = reseeded;
  return result;
}

FitResult baum_welch_fit(const obs::TrialSet& data, int modes, EmissionKind kind,
                         const FitConfig& config) {
  obs::validate(data);
  return baum_welch_fit(obs::feature_matrices(data), modes, kind, config, data.skill_id);
}

}  // namespace revert::hmm
