#include "revert/hmm.hpp"

#include "synthetic.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <sstream>

using namespace revert;
namespace rt = revert::testing;

namespace {

hmm::SkillModel single_gaussian(int d, double mean = 0.0, double var = 1.0) {
  return {"g", Vec::Ones(1), Mat::Ones(1, 1),
          hmm::EmissionModel::gaussian(hmm::EmissionKind::gaussian_full, {Vec::Constant(d, mean)},
                                       {var * Mat::Identity(d, d)})};
}

hmm::SkillModel two_well_separated(double stay = 0.9) {
  Mat a(2, 2);
  a << stay, 1 - stay, 1 - stay, stay;
  return {"sep", Vec::Constant(2, 0.5), a,
          hmm::EmissionModel::gaussian(hmm::EmissionKind::gaussian_full,
                                       {Vec::Constant(1, -5.0), Vec::Constant(1, 5.0)},
                                       {Mat::Identity(1, 1), Mat::Identity(1, 1)})};
}

}  // namespace

TEST(Emission, StandardNormalPeak) {
  const auto m = single_gaussian(1);
  EXPECT_NEAR(m.emission().log_density(0, Vec::Zero(1), Vec::Zero(1)),
              -0.5 * std::log(2 * std::numbers::pi), 1e-12);
}

TEST(Emission, VarWithZeroCoefficientIsZeroMeanGaussian) {
  Rng rng(1);
  const Mat cov = rt::random_spd(3, rng);
  const auto var = hmm::EmissionModel::var(1, {Mat::Zero(3, 3)}, {cov});
  const Vec y = Vec::LinSpaced(3, -1, 1);
  EXPECT_NEAR(var.log_density(0, y, Vec::Ones(3)), rt::gaussian_logpdf(y, cov), 1e-12);
}

TEST(Emission, VarZeroResidualPeakIn13D) {
  const auto var = hmm::EmissionModel::var(1, {Mat::Identity(13, 13)}, {Mat::Identity(13, 13)});
  const Vec y = Vec::LinSpaced(13, -2, 2);
  EXPECT_NEAR(var.log_density(0, y, y), -6.5 * std::log(2 * std::numbers::pi), 1e-12);
}

TEST(Emission, DiagonalAndSphericalKindsMatchOracle) {
  Rng rng(2);
  for (auto kind : {hmm::EmissionKind::gaussian_diag, hmm::EmissionKind::gaussian_spherical}) {
    const auto m = rt::random_model(2, 3, kind, rng);
    const Vec y = Vec::LinSpaced(3, -0.5, 0.5);
    for (int k = 0; k < 2; ++k)
      EXPECT_NEAR(m.emission().log_density(k, y, y),
                  rt::gaussian_logpdf(y - m.emission().mean(k), m.emission().cov(k)), 1e-10);
  }
}

TEST(Emission, RejectsNonSpdCovariance) {
  Mat bad = Mat::Identity(2, 2);
  bad(1, 1) = -1.0;
  EXPECT_THROW(hmm::EmissionModel::gaussian(hmm::EmissionKind::gaussian_full, {Vec::Zero(2)}, {bad}),
               ValidationError);
}

TEST(SkillModel, RejectsRowsThatAreNotDistributions) {
  Mat a(2, 2);
  a << 0.5, 0.6, 0.5, 0.5;
  EXPECT_THROW(hmm::SkillModel("x", Vec::Constant(2, 0.5), a,
                               two_well_separated().emission()),
               ValidationError);
}

TEST(LagStack, WarmUpRepeatsFirstSample) {
  Mat y(1, 4);
  y << 1, 2, 3, 4;
  const Mat x = hmm::lag_stack(y, 2);
  Mat want(2, 4);
  want << 1, 1, 2, 3, 1, 1, 1, 2;
  EXPECT_EQ(x, want);
}

TEST(Forward, EmptySequenceIsZero) {
  EXPECT_EQ(hmm::forward_loglik(two_well_separated(), Mat(1, 0)), 0.0);
}

TEST(Forward, SingleModeIsSumOfEmissions) {
  const auto m = single_gaussian(2, 0.5, 2.0);
  Rng rng(3);
  const Mat y = rt::sample_sequence(m, 30, rng).y;
  double sum = 0.0;
  for (int t = 0; t < 30; ++t) sum += rt::oracle_emission(m, y, t, 0);
  EXPECT_NEAR(hmm::forward_loglik(m, y), sum, 1e-9 * std::abs(sum));
}

TEST(Forward, MatchesBruteForceEnumeration) {
  Rng rng(4);
  for (auto kind : {hmm::EmissionKind::gaussian_full, hmm::EmissionKind::var}) {
    for (int rep = 0; rep < 10; ++rep) {
      const auto m = rt::random_model(2, 2, kind, rng);
      const Mat y = rt::sample_sequence(m, 4, rng).y;
      const double want = rt::brute_force_loglik(m, y);
      EXPECT_NEAR(hmm::forward_loglik(m, y), want, 1e-9 * std::max(1.0, std::abs(want)));
    }
  }
}

TEST(Forward, CurveEndsAtTotalAndStreamsIdentically) {
  Rng rng(5);
  const auto m = rt::random_model(3, 4, hmm::EmissionKind::var, rng);
  const Mat y = rt::sample_sequence(m, 50, rng).y;
  const auto curve = hmm::forward_curve(m, y);
  ASSERT_EQ(curve.size(), 50u);
  EXPECT_DOUBLE_EQ(curve.back(), hmm::forward_loglik(m, y));
  hmm::ForwardFilter f(m);
  for (int t = 0; t < 50; ++t) EXPECT_NEAR(f.step(y.col(t)), curve[static_cast<std::size_t>(t)], 1e-9);
  f.reset();
  EXPECT_EQ(f.steps(), 0u);
  EXPECT_NEAR(f.step(y.col(0)), curve.front(), 1e-12);
}

TEST(Forward, PosteriorIsADistribution) {
  Rng rng(6);
  const auto m = rt::random_model(3, 2, hmm::EmissionKind::gaussian_full, rng);
  const Mat y = rt::sample_sequence(m, 20, rng).y;
  hmm::ForwardFilter f(m);
  for (int t = 0; t < 20; ++t) {
    f.step(y.col(t));
    EXPECT_NEAR(f.posterior().sum(), 1.0, 1e-12);
    EXPECT_GE(f.posterior().minCoeff(), 0.0);
  }
}

TEST(BaumWelch, SingleModeMeanIsPooledMean) {
  Rng rng(7);
  std::vector<Mat> data = {Mat::Random(3, 40), Mat::Random(3, 25)};
  hmm::FitConfig c;
  c.max_iterations = 1;
  const auto fit = hmm::baum_welch_fit(data, 1, hmm::EmissionKind::gaussian_full, c);
  const Vec pooled = (data[0].rowwise().sum() + data[1].rowwise().sum()) / 65.0;
  EXPECT_TRUE(fit.model.emission().mean(0).isApprox(pooled, 1e-12));
}

TEST(BaumWelch, RecoversSelfTransitionsOfSeparatedModes) {
  const auto truth = two_well_separated(0.9);
  Rng rng(8);
  std::vector<Mat> data;
  for (int n = 0; n < 10; ++n) data.push_back(rt::sample_sequence(truth, 300, rng).y);
  hmm::FitConfig c;
  c.seed = 1;
  const auto fit = hmm::baum_welch_fit(data, 2, hmm::EmissionKind::gaussian_full, c);
  // Label matching: mode with the negative mean is "mode 0".
  const int lo = fit.model.emission().mean(0)[0] < 0 ? 0 : 1;
  EXPECT_NEAR(fit.model.trans()(lo, lo), 0.9, 0.05);
  EXPECT_NEAR(fit.model.trans()(1 - lo, 1 - lo), 0.9, 0.05);
}

TEST(BaumWelch, LogLikelihoodNeverDecreases) {
  Rng rng(9);
  for (auto kind : {hmm::EmissionKind::gaussian_full, hmm::EmissionKind::gaussian_diag,
                    hmm::EmissionKind::var}) {
    const auto truth = rt::random_model(3, 3, kind == hmm::EmissionKind::var ? kind
                                                                             : hmm::EmissionKind::gaussian_full,
                                        rng);
    std::vector<Mat> data;
    for (int n = 0; n < 3; ++n) data.push_back(rt::sample_sequence(truth, 100, rng).y);
    hmm::FitConfig c;
    c.max_iterations = 30;
    c.tolerance = 0.0;
    const auto fit = hmm::baum_welch_fit(data, 3, kind, c);
    for (std::size_t i = 1; i < fit.loglik_history.size(); ++i)
      EXPECT_GE(fit.loglik_history[i] - fit.loglik_history[i - 1], -1e-8) << hmm::to_string(kind);
  }
}

TEST(BaumWelch, RejectsTooFewSamples) {
  EXPECT_THROW(hmm::baum_welch_fit({Mat::Zero(2, 2)}, 5, hmm::EmissionKind::gaussian_full, {}),
               ValidationError);
}

TEST(Viterbi, SingleModeIsAllZeros) {
  const auto path = hmm::viterbi_modes(single_gaussian(1), Mat::Random(1, 17));
  EXPECT_EQ(path, std::vector<int>(17, 0));
}

TEST(Viterbi, SwitchesWithinTwoSamplesOfTruth) {
  const auto m = two_well_separated(0.98);
  Rng rng(10);
  std::normal_distribution<double> n(0.0, 1.0);
  Mat y(1, 200);
  std::vector<int> truth;
  for (int t = 0; t < 200; ++t) {
    const int z = (t / 50) % 2;
    truth.push_back(z);
    y(0, t) = (z ? 5.0 : -5.0) + n(rng);
  }
  const auto path = hmm::viterbi_modes(m, y);
  for (int sw : {50, 100, 150}) {
    int found = -1;
    for (int t = sw - 2; t <= sw + 2; ++t)
      if (path[static_cast<std::size_t>(t)] != path[static_cast<std::size_t>(t - 1)]) found = t;
    EXPECT_NE(found, -1) << "switch near " << sw;
  }
}

TEST(Viterbi, DominatesRandomPaths) {
  Rng rng(11);
  const auto m = rt::random_model(3, 2, hmm::EmissionKind::var, rng);
  const Mat y = rt::sample_sequence(m, 40, rng).y;
  const auto best = hmm::viterbi_modes(m, y);
  const double top = hmm::path_logprob(m, y, best);
  std::uniform_int_distribution<int> u(0, 2);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<int> p(40);
    for (auto& z : p) z = u(rng);
    EXPECT_GE(top, hmm::path_logprob(m, y, p));
  }
}

TEST(ModelIo, RoundTripIsExact) {
  Rng rng(12);
  for (auto kind : {hmm::EmissionKind::gaussian_full, hmm::EmissionKind::var}) {
    const auto m = rt::random_model(3, 4, kind, rng);
    std::stringstream ss;
    hmm::write_model(ss, m);
    const auto back = hmm::read_model(ss);
    EXPECT_EQ(back.pi0(), m.pi0());
    EXPECT_EQ(back.trans(), m.trans());
    for (int k = 0; k < 3; ++k) {
      EXPECT_EQ(back.emission().cov(k), m.emission().cov(k));
      if (kind == hmm::EmissionKind::var) EXPECT_EQ(back.emission().coef(k), m.emission().coef(k));
      else EXPECT_EQ(back.emission().mean(k), m.emission().mean(k));
    }
  }
}

TEST(ModelIo, TruncatedInputIsAParseError) {
  Rng rng(13);
  std::stringstream ss;
  hmm::write_model(ss, rt::random_model(2, 2, hmm::EmissionKind::gaussian_full, rng));
  std::string text = ss.str();
  std::stringstream cut(text.substr(0, text.size() / 2));
  EXPECT_THROW(hmm::read_model(cut), Error);
}
