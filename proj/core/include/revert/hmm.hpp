#pragma once

#include "revert/common.hpp"
#include "revert/obsdata.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

/// Finite HMMs with Gaussian or vector-autoregressive emissions.
namespace revert::hmm {

enum class EmissionKind { gaussian_full, gaussian_diag, gaussian_spherical, var };

std::string to_string(EmissionKind k);
EmissionKind emission_kind_from_string(const std::string& s);

/// Per-mode emission densities. Gaussian modes carry a mean; VAR modes carry
/// a d x (d*r) coefficient matrix [A_1 ... A_r] acting on the stacked lags
/// [y_{t-1}; ...; y_{t-r}]. Every mode has an SPD covariance; its Cholesky
/// factor and normalizer are cached at construction.
class EmissionModel {
 public:
  static EmissionModel gaussian(EmissionKind kind, std::vector<Vec> means, std::vector<Mat> covs);
  static EmissionModel var(int order, std::vector<Mat> coefs, std::vector<Mat> covs);

  EmissionKind kind() const noexcept { return kind_; }
  bool is_var() const noexcept { return kind_ == EmissionKind::var; }
  /// 0 for Gaussian kinds.
  int order() const noexcept { return order_; }
  int dim() const noexcept { return dim_; }
  int modes() const noexcept { return static_cast<int>(covs_.size()); }

  const Vec& mean(int k) const { return means_.at(static_cast<std::size_t>(k)); }
  const Mat& coef(int k) const { return coefs_.at(static_cast<std::size_t>(k)); }
  const Mat& cov(int k) const { return covs_.at(static_cast<std::size_t>(k)); }

  /// log N(y; mu_k, S_k) or log N(y - A_k x; 0, S_k). `lagged` is ignored for
  /// Gaussian kinds.
  double log_density(int k, const Eigen::Ref<const Vec>& y,
                     const Eigen::Ref<const Vec>& lagged) const;

  /// K x T matrix of log densities for the columns of `y` (regressors in the
  /// matching columns of `x`, see lag_stack).
  Mat log_densities(const Mat& y, const Mat& x) const;

 private:
  EmissionModel() = default;
  void finalize();

  EmissionKind kind_ = EmissionKind::gaussian_full;
  int order_ = 0;
  int dim_ = 0;
  std::vector<Vec> means_;
  std::vector<Mat> coefs_;
  std::vector<Mat> covs_;
  std::vector<Mat> chol_;     // lower factors
  std::vector<double> lognorm_;
};

/// Per-skill HMM: initial distribution, row-stochastic transitions, emissions.
class SkillModel {
 public:
  /// Validates every invariant (simplex rows, SPD covariances, shapes).
  SkillModel(std::string skill_id, Vec pi0, Mat trans, EmissionModel emission);

  const std::string& skill_id() const noexcept { return skill_id_; }
  int modes() const noexcept { return static_cast<int>(pi0_.size()); }
  int dim() const noexcept { return emission_.dim(); }
  const Vec& pi0() const noexcept { return pi0_; }
  const Mat& trans() const noexcept { return trans_; }
  const EmissionModel& emission() const noexcept { return emission_; }

 private:
  std::string skill_id_;
  Vec pi0_;
  Mat trans_;
  EmissionModel emission_;
};

/// (d*r) x T regressor matrix; column t stacks y_{t-1}, ..., y_{t-r}. Lags
/// before the first sample repeat the first sample.
Mat lag_stack(const Mat& seq, int order);

/// `history[0]` is y_{t-1}, `history[i]` is y_{t-1-i}; must hold at least r
/// vectors for VAR models (callers apply the warm-up rule).
double emission_logdensity(const SkillModel& model, std::span<const Vec> history, const Vec& y,
                           int k);

/// Scaled forward recursion over a stream, one observation at a time. Holds a
/// non-owning pointer: the model must outlive the filter. Copyable, so a
/// saved filter can be resumed.
class ForwardFilter {
 public:
  explicit ForwardFilter(const SkillModel& model);

  /// Consumes y_t and returns L_t = log p(y_1..y_t).
  double step(const Eigen::Ref<const Vec>& y);
  void reset();

  double loglik() const noexcept { return loglik_; }
  std::size_t steps() const noexcept { return steps_; }
  /// Filtered mode posterior p(z_t | y_1..y_t).
  const Vec& posterior() const noexcept { return alpha_; }
  const SkillModel& model() const noexcept { return *model_; }

 private:
  const SkillModel* model_;
  Vec alpha_;
  Vec pred_;
  Vec logb_;
  Vec lagged_;
  double loglik_ = 0.0;
  std::size_t steps_ = 0;
};

/// L_1..L_T for the columns of `seq`.
std::vector<double> forward_curve(const SkillModel& model, const Mat& seq);
/// L_T; 0 for an empty sequence.
double forward_loglik(const SkillModel& model, const Mat& seq);

struct FitConfig {
  int max_iterations = 100;
  double tolerance = 1e-6;   ///< relative improvement; 0 runs max_iterations
  std::uint64_t seed = 0;
  int order = 1;             ///< VAR order
  double cov_floor = 1e-6;   ///< eigenvalue clamp applied in every M-step
  int kmeans_iterations = 10;
};

struct FitResult {
  SkillModel model;
  /// Total log-likelihood of the parameters entering each E-step; the last
  /// entry belongs to `model`.
  std::vector<double> loglik_history;
  bool converged = false;
  int reseeded_modes = 0;
};

FitResult baum_welch_fit(const std::vector<Mat>& data, int modes, EmissionKind kind,
                         const FitConfig& config, const std::string& skill_id = "skill");
FitResult baum_welch_fit(const obs::TrialSet& data, int modes, EmissionKind kind,
                         const FitConfig& config);

/// Most probable mode path; ties go to the lower mode index.
std::vector<int> viterbi_modes(const SkillModel& model, const Mat& seq);

/// log p(y, z) for a given mode path.
double path_logprob(const SkillModel& model, const Mat& seq, std::span<const int> path);

// Text serialization; values written with round-trip precision.
void write_model(std::ostream& os, const SkillModel& model);
SkillModel read_model(std::istream& is);
void save_model(const std::filesystem::path& path, const SkillModel& model);
SkillModel load_model(const std::filesystem::path& path);

}  // namespace revert::hmm
