#pragma once

#include "revert/common.hpp"
#include "revert/hmm.hpp"
#include "revert/obsdata.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

/// Sticky HDP prior over HMM transitions with matrix-normal inverse-Wishart
/// VAR emissions, fitted by weak-limit blocked Gibbs sampling.
namespace revert::bnp {

/// Matrix-normal inverse-Wishart over (A, Sigma) with A d x p:
///   Sigma ~ IW(scale, dof),  A | Sigma ~ MN(mean, Sigma, col_cov).
struct MniwParams {
  Mat mean;     ///< M, d x p
  Mat col_cov;  ///< V, p x p (inverse of the column precision)
  Mat scale;    ///< S, d x d
  double dof = 0.0;
};

/// M = 0, V = I, S = 0.1 I, dof = d + 2.
MniwParams default_mniw_prior(int dim, int order);
void validate(const MniwParams& p);

/// Regression sufficient statistics for the samples assigned to one mode.
struct MniwStats {
  double count = 0.0;
  Mat xx;  ///< sum x x^T, p x p
  Mat yx;  ///< sum y x^T, d x p
  Mat yy;  ///< sum y y^T, d x d

  static MniwStats zeros(int dim, int regressors);
  void add(const Eigen::Ref<const Vec>& y, const Eigen::Ref<const Vec>& x);
  /// Columns of y (d x n) against regressors x (p x n).
  void add_batch(const Mat& y, const Mat& x);
  MniwStats& operator+=(const MniwStats& o);
};

/// Conjugate update. Zero-count statistics return the prior unchanged.
MniwParams mniw_posterior(const MniwParams& prior, const MniwStats& stats);

struct VarParams {
  Mat coef;
  Mat cov;
};

Mat sample_inverse_wishart(const Mat& scale, double dof, Rng& rng);
VarParams sample_mniw(const MniwParams& p, Rng& rng);

double sample_beta(double a, double b, Rng& rng);
/// Robust to tiny concentrations (draws gamma variates in log space).
Vec sample_dirichlet(const Vec& concentration, Rng& rng);

/// Truncated GEM(gamma): beta_k = v_k prod_{i<k}(1 - v_i), v_k ~ Beta(1, gamma);
/// the last weight takes the remaining mass.
Vec gem_stick_break(double gamma, int k_max, Rng& rng);

/// Weak-limit sticky row: Dirichlet(alpha * beta + kappa * e_j).
Vec sticky_row_draw(const Vec& beta, double alpha, double kappa, int j, Rng& rng);

struct ShdpConfig {
  double gamma = 5.0;
  double alpha = 5.0;
  double kappa = 50.0;
  int k_max = 10;
  int order = 1;
  std::optional<MniwParams> mniw;  ///< default_mniw_prior when unset
  int iterations = 150;
  int burn_in = 75;
  int chains = 1;  ///< independent restarts; the best sample over all of them is kept
  std::uint64_t seed = 0;
  double prune_fraction = 0.01;  ///< modes below this share of samples are dropped
};

void validate(const ShdpConfig& c, int dim);

struct PosteriorSample {
  Vec beta;
  Mat pi;   ///< k_max x k_max
  Vec pi0;
  std::vector<VarParams> emissions;
  std::vector<std::vector<int>> z;  ///< per-trial mode assignments
};

struct ShdpDiagnostics {
  std::vector<double> joint_logprob;  ///< one per iteration of the selected chain
  std::vector<int> effective_modes;   ///< one per iteration of the selected chain
  std::vector<double> chain_best;     ///< best post-burn-in joint of every chain
  int selected_chain = -1;
  int selected_iteration = -1;
  int effective_mode_count = 0;
  std::vector<std::string> warnings;
};

struct ShdpResult {
  hmm::SkillModel model;
  ShdpDiagnostics diagnostics;
  PosteriorSample sample;        ///< the selected (max joint probability) sample
  std::vector<int> kept_modes;   ///< sample mode index for each model mode
};

ShdpResult fit_shdp_ar_hmm(const std::vector<Mat>& data, const ShdpConfig& config,
                           const std::string& skill_id = "skill");
ShdpResult fit_shdp_ar_hmm(const obs::TrialSet& data, const ShdpConfig& config);

void write_diagnostics(std::ostream& os, const ShdpDiagnostics& diag);

}  // namespace revert::bnp
