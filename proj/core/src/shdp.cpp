#include "revert/shdp.hpp"

#include "revert/textio.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace revert::bnp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool is_spd(const Mat& m) {
  if (m.rows() != m.cols() || !m.allFinite()) return false;
  if (!m.isApprox(m.transpose(), 1e-9)) return false;
  Eigen::LLT<Mat> llt(m);
  return llt.info() == Eigen::Success;
}

Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

// --- MNIW -------------------------------------------------------------------

MniwParams default_mniw_prior(int dim, int order) {
  const int p = dim * order;
  return {Mat::Zero(dim, p), Mat::Identity(p, p), 0.1 * Mat::Identity(dim, dim),
          static_cast<double>(dim) + 2.0};
}

void validate(const MniwParams& p) {
  const auto d = p.scale.rows();
  if (p.mean.rows() != d || p.mean.cols() != p.col_cov.rows())
    throw ValidationError("MNIW mean must be d x p");
  if (!is_spd(p.col_cov)) throw ValidationError("MNIW column covariance must be SPD");
  if (!is_spd(p.scale)) throw ValidationError("MNIW scale matrix must be SPD");
  if (!(p.dof > static_cast<double>(d) - 1.0))
    throw ValidationError("MNIW degrees of freedom must exceed d - 1");
}

MniwStats MniwStats::zeros(int dim, int regressors) {
  return {0.0, Mat::Zero(regressors, regressors), Mat::Zero(dim, regressors),
          Mat::Zero(dim, dim)};
}

void MniwStats::add(const Eigen::Ref<const Vec>& y, const Eigen::Ref<const Vec>& x) {
  count += 1.0;
  xx.noalias() += x * x.transpose();
  yx.noalias() += y * x.transpose();
  yy.noalias() += y * y.transpose();
}

void MniwStats::add_batch(const Mat& y, const Mat& x) {
  count += static_cast<double>(y.cols());
  xx.noalias() += x * x.transpose();
  yx.noalias() += y * x.transpose();
  yy.noalias() += y * y.transpose();
}

MniwStats& MniwStats::operator+=(const MniwStats& o) {
  count += o.count;
  xx += o.xx;
  yx += o.yx;
  yy += o.yy;
  return *this;
}

MniwParams mniw_posterior(const MniwParams& prior, const MniwStats& stats) {
  if (stats.count == 0.0) return prior;
  // Column precision K = V^-1. Posterior:
  //   Sxx = XX' + K,  Syx = YX' + M K,  Syy = YY' + M K M'
  //   M_n = Syx Sxx^-1,  V_n = Sxx^-1,
  //   S_n = S + Syy - Syx Sxx^-1 Syx',  n_n = n + N
  const auto p = prior.col_cov.rows();
  Eigen::LLT<Mat> v_llt(prior.col_cov);
  const Mat k0 = v_llt.solve(Mat::Identity(p, p));
  const Mat sxx = symmetrize(stats.xx + k0);
  const Mat syx = stats.yx + prior.mean * k0;
  const Mat syy = stats.yy + prior.mean * k0 * prior.mean.transpose();
  Eigen::LLT<Mat> llt(sxx);
  const Mat mean_t = llt.solve(syx.transpose());  // (Syx Sxx^-1)'
  MniwParams post;
  post.mean = mean_t.transpose();
  post.col_cov = symmetrize(llt.solve(Mat::Identity(p, p)));
  post.scale = symmetrize(prior.scale + syy - syx * mean_t);
  post.dof = prior.dof + stats.count;
  return post;
}

Mat sample_inverse_wishart(const Mat& scale, double dof, Rng& rng) {
  // Bartlett: with S = U U' and lower A (A_ii^2 ~ chi2(dof - i), A_ij ~ N(0,1)),
  // Sigma = U A^-T A^-1 U' ~ IW(S, dof).
  const auto d = scale.rows();
  Eigen::LLT<Mat> llt(scale);
  const Mat u = llt.matrixL();
  Mat a = Mat::Zero(d, d);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < d; ++i) {
    std::chi_squared_distribution<double> chi(dof - static_cast<double>(i));
    a(i, i) = std::sqrt(chi(rng));
    for (Eigen::Index j = 0; j < i; ++j) a(i, j) = normal(rng);
  }
  const Mat a_inv = a.triangularView<Eigen::Lower>().solve(Mat::Identity(d, d));
  const Mat b = u * a_inv.transpose();
  return symmetrize(b * b.transpose());
}

VarParams sample_mniw(const MniwParams& p, Rng& rng) {
  VarParams out;
  out.cov = sample_inverse_wishart(p.scale, p.dof, rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat z(p.mean.rows(), p.mean.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j)
    for (Eigen::Index i = 0; i < z.rows(); ++i) z(i, j) = normal(rng);
  const Mat lr = Eigen::LLT<Mat>(out.cov).matrixL();
  const Mat lc = Eigen::LLT<Mat>(p.col_cov).matrixL();
  out.coef = p.mean + lr * z * lc.transpose();
  return out;
}

// --- stick breaking and Dirichlet draws -------------------------------------

namespace {

// log of a Gamma(shape, 1) variate; shapes below 1 use the boost
// G(a) = G(a + 1) U^(1/a) in log space so tiny shapes do not underflow.
double log_gamma_variate(double shape, Rng& rng) {
  if (!(shape > 0.0)) return kNegInf;
  if (shape >= 1.0) {
    std::gamma_distribution<double> g(shape, 1.0);
    return std::log(g(rng));
  }
  std::gamma_distribution<double> g(shape + 1.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u = unif(rng);
  while (u <= 0.0) u = unif(rng);
  return std::log(g(rng)) + std::log(u) / shape;
}

}  // namespace

double sample_beta(double a, double b, Rng& rng) {
  const double la = log_gamma_variate(a, rng);
  const double lb = log_gamma_variate(b, rng);
  const double m = std::max(la, lb);
  return std::exp(la - m) / (std::exp(la - m) + std::exp(lb - m));
}

Vec sample_dirichlet(const Vec& concentration, Rng& rng) {
  Vec lg(concentration.size());
  for (Eigen::Index k = 0; k < lg.size(); ++k) lg[k] = log_gamma_variate(concentration[k], rng);
  const double m = lg.maxCoeff();
  if (!std::isfinite(m)) throw ValidationError("Dirichlet concentration has no positive entry");
  Vec w = (lg.array() - m).exp();
  return w / w.sum();
}

Vec gem_stick_break(double gamma, int k_max, Rng& rng) {
  if (!(gamma > 0.0)) throw ValidationError("GEM concentration must be positive");
  if (k_max < 1) throw ValidationError("truncation level must be >= 1");
  Vec beta(k_max);
  double remaining = 1.0;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int k = 0; k + 1 < k_max; ++k) {
    // Beta(1, gamma) by inversion: 1 - U^(1/gamma)
    const double v = 1.0 - std::pow(unif(rng), 1.0 / gamma);
    beta[k] = v * remaining;
    remaining *= 1.0 - v;
  }
  beta[k_max - 1] = remaining;
  return beta;
}

Vec sticky_row_draw(const Vec& beta, double alpha, double kappa, int j, Rng& rng) {
  Vec conc = alpha * beta;
  conc[j] += kappa;
  return sample_dirichlet(conc, rng);
}

void validate(const ShdpConfig& c, int dim) {
  if (!(c.gamma > 0.0) || !(c.alpha > 0.0)) throw ValidationError("gamma and alpha must be > 0");
  if (!(c.kappa >= 0.0)) throw ValidationError("kappa must be >= 0");
  if (c.k_max < 2) throw ValidationError("K_max must be >= 2");
  if (c.order < 1) throw ValidationError("VAR order must be >= 1");
  if (c.iterations < 1 || c.burn_in < 0 || c.burn_in >= c.iterations)
    throw ValidationError("need 0 <= burn_in < iterations");
  if (c.chains < 1) throw ValidationError("need at least one chain");
  const MniwParams p = c.mniw.value_or(default_mniw_prior(dim, c.order));
  validate(p);
  if (p.scale.rows() != dim || p.mean.cols() != dim * c.order)
    throw ValidationError("MNIW hyperparameters do not match data dimension and order");
}

// --- blocked Gibbs sampler --------------------------------------------------

namespace {

struct Trial {
  const Mat* y;
  Mat x;
};

class GibbsChain {
 public:
  GibbsChain(const std::vector<Mat>& data, const ShdpConfig& cfg)
      : cfg_(cfg), k_(cfg.k_max), rng_(cfg.seed) {
    dim_ = static_cast<int>(data.front().rows());
    p_ = dim_ * cfg.order;
    prior_ = cfg.mniw.value_or(default_mniw_prior(dim_, cfg.order));
    for (const auto& y : data) {
      trials_.push_back({&y, hmm::lag_stack(y, cfg.order)});
      total_ += y.cols();
    }
    init();
  }

  void iterate() {
    sample_modes();
    count();
    sample_beta();
    sample_transitions();
    sample_emissions();
    joint_ = complete_loglik();
  }

  double joint() const { return joint_; }
  const PosteriorSample& state() const { return s_; }
  const Vec& occupancy() const { return occupancy_; }
  Eigen::Index total() const { return total_; }

 private:
  void init() {
    s_.beta = Vec::Constant(k_, 1.0 / k_);
    s_.pi.resize(k_, k_);
    for (int j = 0; j < k_; ++j)
      s_.pi.row(j) = sticky_row_draw(s_.beta, cfg_.alpha, cfg_.kappa, j, rng_).transpose();
    s_.pi0 = s_.beta;
    // Each mode starts from the posterior given a random contiguous chunk.
    s_.emissions.clear();
    std::uniform_int_distribution<std::size_t> pick_trial(0, trials_.size() - 1);
    for (int k = 0; k < k_; ++k) {
      const Trial& tr = trials_[pick_trial(rng_)];
      const auto t_len = tr.y->cols();
      const Eigen::Index len =
          std::min<Eigen::Index>(t_len, std::max<Eigen::Index>(2 * p_, t_len / k_));
      std::uniform_int_distribution<Eigen::Index> pick_start(0, t_len - len);
      const auto start = pick_start(rng_);
      MniwStats st = MniwStats::zeros(dim_, p_);
      st.add_batch(tr.y->middleCols(start, len), tr.x.middleCols(start, len));
      s_.emissions.push_back(sample_mniw(mniw_posterior(prior_, st), rng_));
    }
    s_.z.assign(trials_.size(), {});
  }

  hmm::EmissionModel emission_model() const {
    std::vector<Mat> coefs, covs;
    for (const auto& e : s_.emissions) {
      coefs.push_back(e.coef);
      covs.push_back(e.cov);
    }
    return hmm::EmissionModel::var(cfg_.order, std::move(coefs), std::move(covs));
  }

  // Backward messages, then forward sampling of the whole mode sequence.
  void sample_modes() {
    const auto em = emission_model();
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Vec w(k_);
    for (std::size_t n = 0; n < trials_.size(); ++n) {
      const Trial& tr = trials_[n];
      const auto t_len = tr.y->cols();
      Mat b = em.log_densities(*tr.y, tr.x);
      for (Eigen::Index t = 0; t < t_len; ++t) {
        const double m = b.col(t).maxCoeff();
        b.col(t) = (b.col(t).array() - m).exp();
      }
      Mat msg(k_, t_len);
      msg.col(t_len - 1).setOnes();
      for (Eigen::Index t = t_len - 2; t >= 0; --t) {
        msg.col(t) = s_.pi * b.col(t + 1).cwiseProduct(msg.col(t + 1));
        msg.col(t) /= msg.col(t).sum();
      }
      auto& z = s_.z[n];
      z.assign(static_cast<std::size_t>(t_len), 0);
      for (Eigen::Index t = 0; t < t_len; ++t) {
        const Vec prior = t == 0 ? Vec(s_.pi0) : Vec(s_.pi.row(z[t - 1]).transpose());
        w = prior.cwiseProduct(b.col(t)).cwiseProduct(msg.col(t));
        z[static_cast<std::size_t>(t)] = draw(w, unif(rng_));
      }
    }
  }

  static int draw(const Vec& w, double u) {
    double target = u * w.sum();
    for (Eigen::Index k = 0; k < w.size(); ++k) {
      target -= w[k];
      if (target <= 0.0 && w[k] > 0.0) return static_cast<int>(k);
    }
    Eigen::Index last = w.size() - 1;
    while (last > 0 && !(w[last] > 0.0)) --last;
    return static_cast<int>(last);
  }

  void count() {
    trans_counts_ = Mat::Zero(k_, k_);
    init_counts_ = Vec::Zero(k_);
    occupancy_ = Vec::Zero(k_);
    for (const auto& z : s_.z) {
      init_counts_[z.front()] += 1.0;
      for (std::size_t t = 0; t < z.size(); ++t) {
        occupancy_[z[t]] += 1.0;
        if (t > 0) trans_counts_(z[t - 1], z[t]) += 1.0;
      }
    }
  }

  // Number of occupied tables in a CRP with n customers and concentration c.
  int crt(int n, double c) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    int m = 0;
    for (int i = 0; i < n; ++i)
      if (unif(rng_) < c / (static_cast<double>(i) + c)) ++m;
    return m;
  }

  // Auxiliary-variable update for the global weights.
  //  m_jk: tables in restaurant j serving dish k, m_jk ~ CRT(n_jk, alpha beta_k + kappa [j=k]).
  //  Sticky override: of the m_jj tables, w_j ~ Binomial(m_jj, rho / (rho + beta_j (1 - rho))),
  //  rho = kappa / (alpha + kappa), were created by the self-transition bonus and do
  //  not inform beta; mbar_jj = m_jj - w_j.
  //  beta | mbar ~ Dirichlet(gamma / K + sum_j mbar_jk): K free weights, one
  //  simplex constraint, so K - 1 degrees of freedom.
  // The initial-state counts form one more restaurant with concentration alpha.
  void sample_beta() {
    const double rho = cfg_.kappa / (cfg_.alpha + cfg_.kappa);
    Vec mbar = Vec::Zero(k_);
    for (int j = 0; j < k_; ++j) {
      for (int k = 0; k < k_; ++k) {
        const int n = static_cast<int>(trans_counts_(j, k));
        if (n == 0) continue;
        const double c = cfg_.alpha * s_.beta[k] + (j == k ? cfg_.kappa : 0.0);
        int m = crt(n, c);
        if (j == k && m > 0 && cfg_.kappa > 0.0) {
          std::binomial_distribution<int> override_draw(
              m, rho / (rho + s_.beta[j] * (1.0 - rho)));
          m -= override_draw(rng_);
        }
        mbar[k] += m;
      }
    }
    for (int k = 0; k < k_; ++k) {
      const int n = static_cast<int>(init_counts_[k]);
      if (n > 0) mbar[k] += crt(n, cfg_.alpha * s_.beta[k]);
    }
    s_.beta = sample_dirichlet(Vec::Constant(k_, cfg_.gamma / k_) + mbar, rng_);
  }

  void sample_transitions() {
    for (int j = 0; j < k_; ++j) {
      Vec conc = cfg_.alpha * s_.beta + trans_counts_.row(j).transpose();
      conc[j] += cfg_.kappa;
      s_.pi.row(j) = sample_dirichlet(conc, rng_).transpose();
    }
    s_.pi0 = sample_dirichlet(cfg_.alpha * s_.beta + init_counts_, rng_);
  }

  void sample_emissions() {
    std::vector<MniwStats> stats(static_cast<std::size_t>(k_), MniwStats::zeros(dim_, p_));
    for (std::size_t n = 0; n < trials_.size(); ++n) {
      const Trial& tr = trials_[n];
      const auto& z = s_.z[n];
      for (int k = 0; k < k_; ++k) {
        std::vector<Eigen::Index> cols;
        for (std::size_t t = 0; t < z.size(); ++t)
          if (z[t] == k) cols.push_back(static_cast<Eigen::Index>(t));
        if (cols.empty()) continue;
        stats[static_cast<std::size_t>(k)].add_batch((*tr.y)(Eigen::all, cols),
                                                     tr.x(Eigen::all, cols));
      }
    }
    for (int k = 0; k < k_; ++k)
      s_.emissions[static_cast<std::size_t>(k)] =
          sample_mniw(mniw_posterior(prior_, stats[static_cast<std::size_t>(k)]), rng_);
  }

  // log p(Y, z | pi0, pi, theta) for the current state.
  double complete_loglik() const {
    const auto em = emission_model();
    double lp = 0.0;
    for (std::size_t n = 0; n < trials_.size(); ++n) {
      const Trial& tr = trials_[n];
      const auto& z = s_.z[n];
      lp += std::log(s_.pi0[z.front()]);
      for (std::size_t t = 0; t < z.size(); ++t) {
        const auto ti = static_cast<Eigen::Index>(t);
        if (t > 0) lp += std::log(s_.pi(z[t - 1], z[t]));
        lp += em.log_density(z[t], tr.y->col(ti), tr.x.col(ti));
      }
    }
    return lp;
  }

  ShdpConfig cfg_;
  int k_;
  int dim_ = 0;
  int p_ = 0;
  Rng rng_;
  MniwParams prior_;
  std::vector<Trial> trials_;
  Eigen::Index total_ = 0;
  PosteriorSample s_;
  Mat trans_counts_;
  Vec init_counts_;
  Vec occupancy_;
  double joint_ = kNegInf;
};

Vec restrict_renormalize(const Vec& v, const std::vector<int>& keep) {
  Vec out(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[keep[i]];
  const double s = out.sum();
  if (s > 0.0)
    out /= s;
  else
    out.setConstant(1.0 / static_cast<double>(out.size()));
  return out;
}

}  // namespace

ShdpResult fit_shdp_ar_hmm(const std::vector<Mat>& data, const ShdpConfig& config,
                           const std::string& skill_id) {
  if (data.empty()) throw ValidationError("no training trials");
  const auto d = data.front().rows();
  for (const auto& y : data) {
    if (y.rows() != d) throw ValidationError("training trials differ in dimension");
    if (y.cols() <= config.order)
      throw ValidationError("every trial must be longer than the VAR order");
  }
  validate(config, static_cast<int>(d));

  // Chains started from different random chunks settle in different local
  // optima; the highest joint probability over all of them wins.
  ShdpDiagnostics diag;
  PosteriorSample best;
  Vec best_occupancy;
  double best_joint = kNegInf;
  Eigen::Index total = 0;
  for (int c = 0; c < config.chains; ++c) {
    ShdpConfig cc = config;
    cc.seed = config.seed + static_cast<std::uint64_t>(c) * 0x9e3779b97f4a7c15ULL;
    GibbsChain chain(data, cc);
    total = chain.total();
    const double min_count = config.prune_fraction * static_cast<double>(total);
    std::vector<double> joints;
    std::vector<int> modes;
    double chain_best = kNegInf;
    for (int it = 0; it < config.iterations; ++it) {
      chain.iterate();
      joints.push_back(chain.joint());
      modes.push_back(static_cast<int>((chain.occupancy().array() >= min_count).count()));
      if (it < config.burn_in) continue;
      chain_best = std::max(chain_best, chain.joint());
      if (diag.selected_iteration < 0 || chain.joint() > best_joint) {
        best_joint = chain.joint();
        best = chain.state();
        best_occupancy = chain.occupancy();
        diag.selected_chain = c;
        diag.selected_iteration = it;
      }
    }
    diag.chain_best.push_back(chain_best);
    if (diag.selected_chain == c) {
      diag.joint_logprob = std::move(joints);
      diag.effective_modes = std::move(modes);
    }
  }
  const double min_count = config.prune_fraction * static_cast<double>(total);

  std::vector<int> keep;
  for (int k = 0; k < config.k_max; ++k)
    if (best_occupancy[k] >= min_count && best_occupancy[k] > 0.0) keep.push_back(k);
  if (keep.empty()) {
    Eigen::Index top = 0;
    best_occupancy.maxCoeff(&top);
    keep.push_back(static_cast<int>(top));
  }
  if ((best_occupancy.array() > 0.0).all())
    diag.warnings.push_back("K_max saturated: all " + std::to_string(config.k_max) +
                            " modes occupied; consider a larger truncation");
  diag.effective_mode_count = static_cast<int>(keep.size());

  const auto kk = static_cast<Eigen::Index>(keep.size());
  Mat trans(kk, kk);
  for (Eigen::Index i = 0; i < kk; ++i)
    trans.row(i) = restrict_renormalize(best.pi.row(keep[i]).transpose(), keep).transpose();
  std::vector<Mat> coefs, covs;
  for (int k : keep) {
    coefs.push_back(best.emissions[static_cast<std::size_t>(k)].coef);
    covs.push_back(best.emissions[static_cast<std::size_t>(k)].cov);
  }
  hmm::SkillModel model(skill_id, restrict_renormalize(best.pi0, keep), std::move(trans),
                        hmm::EmissionModel::var(config.order, std::move(coefs), std::move(covs)));
  return {std::move(model), std::move(diag), std::move(best), std::move(keep)};
}

ShdpResult fit_shdp_ar_hmm(const obs::TrialSet& data, const ShdpConfig& config) {
  obs::validate(data);
  return fit_shdp_ar_hmm(obs::feature_matrices(data), config, data.skill_id);
}

void write_diagnostics(std::ostream& os, const ShdpDiagnostics& diag) {
  os << "selected_chain " << diag.selected_chain << '\n';
  os << "selected_iteration " << diag.selected_iteration << '\n';
  os << "chain_best";
  for (double j : diag.chain_best) os << ' ' << textio::fmt(j);
  os << '\n';
  os << "effective_modes " << diag.effective_mode_count << '\n';
  for (const auto& w : diag.warnings) os << "warning " << w << '\n';
  os << "iteration joint_logprob effective_k\n";
  for (std::size_t i = 0; i < diag.joint_logprob.size(); ++i)
    os << i << ' ' << textio::fmt(diag.joint_logprob[i]) << ' ' << diag.effective_modes[i]
       << '\n';
}

}  // namespace revert::bnp
