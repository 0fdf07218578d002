#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "epi/channel.hpp"
#include "epi/verify.hpp"
#include "oracles.hpp"

using namespace epi;

namespace {

const GaussMix kStd = GaussMix::gaussian(0.0, 1.0);
const GaussMix kPair({0.5, 0.5}, {-1.0, 1.0}, {1.0, 1.0});
const GaussMix kNarrowPair({0.5, 0.5}, {-1.0, 1.0}, {0.5, 0.5});

std::vector<GaussMix> test_mixtures() {
  std::mt19937_64 rng(31);
  std::vector<GaussMix> out{kStd, kPair, kNarrowPair,
                            GaussMix({0.2, 0.5, 0.3}, {-1.5, 0.0, 2.0}, {0.4, 1.0, 0.6})};
  for (int i = 0; i < 12; ++i) out.push_back(random_mixture(rng));
  return out;
}

TEST(OutputDist, ComponentwiseMap) {
  const GaussMix a = output_dist(ChannelView(kStd, 1.0));
  EXPECT_DOUBLE_EQ(a.variances()[0], 2.0);
  const GaussMix b = output_dist(ChannelView(kPair, 0.0));
  for (std::size_t i = 0; i < b.size(); ++i) {
    EXPECT_DOUBLE_EQ(b.means()[i], 0.0);
    EXPECT_DOUBLE_EQ(b.variances()[i], 1.0);
  }
  const GaussMix c = output_dist(ChannelView(kPair, 4.0));
  EXPECT_DOUBLE_EQ(c.means()[0], -2.0);
  EXPECT_DOUBLE_EQ(c.means()[1], 2.0);
  EXPECT_DOUBLE_EQ(c.variances()[0], 5.0);
}

TEST(ChannelView, RejectsNegativeSnr) {
  EXPECT_THROW(ChannelView(kStd, -1.0), std::invalid_argument);
  EXPECT_THROW(ChannelView(kStd, NAN), std::invalid_argument);
}

TEST(PosteriorMean, GaussianIsLinear) {
  for (double g : {0.3, 1.0, 4.0})
    for (double y : {-2.0, 0.5, 3.0}) {
      const double v = 2.5;
      EXPECT_NEAR(posterior_mean(ChannelView(GaussMix::gaussian(0.0, v), g), y),
                  std::sqrt(g) * v * y / (1 + g * v), 1e-14);
    }
}

TEST(PosteriorMean, ZeroSnrGivesPriorMean) {
  const GaussMix gm({0.2, 0.5, 0.3}, {-1.5, 0.0, 2.0}, {0.4, 1.0, 0.6});
  for (double y : {-3.0, 0.0, 5.0})
    EXPECT_NEAR(posterior_mean(ChannelView(gm, 0.0), y), moments(gm).mean, 1e-15);
}

TEST(PosteriorMean, MatchesBruteForceIntegral) {
  const double pm = posterior_mean(ChannelView(kNarrowPair, 2.0), 0.7);
  EXPECT_NEAR(pm, oracle::posterior_mean(kNarrowPair, 2.0, 0.7), 1e-8);
  EXPECT_NEAR(pm, 0.476565319701581393132531, 1e-12);  // 30-digit quadrature
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> ys(-5.0, 5.0);
  for (const GaussMix& gm : test_mixtures())
    for (double g : {0.5, 3.0}) {
      const double y = ys(rng);
      EXPECT_NEAR(posterior_mean(ChannelView(gm, g), y), oracle::posterior_mean(gm, g, y), 1e-8);
      EXPECT_NEAR(posterior_mean(ChannelView(gm, g), y), oracle::posterior_mean_closed(gm, g, y), 1e-12);
    }
}

TEST(PosteriorMean, StableFarFromAllComponents) {
  const ChannelView ch(GaussMix({0.5, 0.5}, {-1.0, 1.0}, {1e-4, 1e-4}), 1e4);
  const double pm = posterior_mean(ch, 500.0);
  EXPECT_TRUE(std::isfinite(pm));
  // Entirely the +1 component: 1 + sqrt(g) v / (1 + g v) (y - sqrt(g)) = 3.
  EXPECT_NEAR(pm, 3.0, 1e-9);
}

TEST(Mmse, ClosedForms) {
  EXPECT_DOUBLE_EQ(mmse(ChannelView(kStd, 1.0)).value, 0.5);
  EXPECT_DOUBLE_EQ(mmse(ChannelView(GaussMix::gaussian(0.0, 4.0), 0.0)).value, 4.0);
  EXPECT_NEAR(mmse(ChannelView(kPair, 0.0)).value, 2.0, 1e-12);
}

TEST(Mmse, PairMatchesSimulationAndQuadrature) {
  const double m = mmse(ChannelView(kPair, 1.0)).value;
  EXPECT_NEAR(m, 0.662471648831217296418799, 1e-9);  // 30-digit quadrature

  std::mt19937_64 rng(2024);
  std::normal_distribution<double> z;
  std::vector<double> err(1000000);
  for (double& e : err) {
    const double x = oracle::draw(kPair, rng);
    const double y = x + z(rng);
    e = (x - oracle::posterior_mean_closed(kPair, 1.0, y)) * (x - oracle::posterior_mean_closed(kPair, 1.0, y));
  }
  const oracle::Mc mc = oracle::summarize(err);
  EXPECT_LE(std::abs(m - mc.mean), 4 * mc.std_error);
}

TEST(Mmse, NonIncreasingAndBounded) {
  const std::vector<double> grid{0.0, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 20.0, 100.0, 1e4};
  for (const GaussMix& gm : test_mixtures()) {
    const MmseCurve c = mmse_curve(gm, grid);
    const double var = moments(gm).variance;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      EXPECT_GE(c.values[i], -1e-12);
      const double cap = grid[i] > 0 ? std::min(var, 1.0 / grid[i]) : var;
      EXPECT_LE(c.values[i], cap + 1e-9);
      if (i) {
        EXPECT_GE(c.values[i - 1], c.values[i] - 1e-9);
      }
    }
  }
}

TEST(MmseCurve, RejectsBadGrids) {
  EXPECT_THROW(mmse_curve(kStd, {1.0, 0.5}), std::invalid_argument);
  EXPECT_THROW(mmse_curve(kStd, {-1.0}), std::invalid_argument);
}

TEST(OutputScore, SpotValues) {
  EXPECT_DOUBLE_EQ(output_score(ChannelView(kStd, 1.0), 1.0, ScorePath::posterior), -0.5);
  EXPECT_DOUBLE_EQ(output_score(ChannelView(kStd, 1.0), 1.0, ScorePath::analytic), -0.5);
  EXPECT_NEAR(output_score(ChannelView(kPair, 0.0), 1.3, ScorePath::analytic), -1.3, 1e-15);
  const ChannelView ch(kPair, 3.0);
  EXPECT_NEAR(output_score(ch, -0.4, ScorePath::analytic), output_score(ch, -0.4, ScorePath::posterior),
              1e-8);
}

TEST(OutputScore, PathsAgreeOnRandomMixtures) {
  std::mt19937_64 rng(64);
  std::uniform_real_distribution<double> ys(-8.0, 8.0);
  std::vector<GaussMix> mixes;
  for (int i = 0; i < 16; ++i) mixes.push_back(random_mixture(rng));
  for (const GaussMix& gm : mixes)
    for (double g : {0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0}) {
      const ChannelView ch(gm, g);
      double worst = 0.0;
      for (int i = 0; i < 64; ++i) {
        const double y = ys(rng);
        worst = std::max(worst, std::abs(output_score(ch, y, ScorePath::analytic) -
                                         output_score(ch, y, ScorePath::posterior)));
      }
      EXPECT_LE(worst, 1e-8);
    }
}

TEST(OutputScore, MatchesDifferenceOfBruteForceDensity) {
  const ChannelView ch(kNarrowPair, 2.0);
  for (double y : {-2.0, -0.3, 1.1}) {
    const double fd =
        oracle::derivative([&](double t) { return std::log(oracle::output_pdf(kNarrowPair, 2.0, t)); }, y);
    EXPECT_NEAR(output_score(ch, y, ScorePath::analytic), fd, 1e-7);
  }
}

TEST(FisherOutput, ClosedFormsAndIdentity) {
  EXPECT_NEAR(fisher_output(ChannelView(kStd, 1.0)).value, 0.5, 1e-12);
  EXPECT_NEAR(fisher_output(ChannelView(kPair, 0.0)).value, 1.0, 1e-12);
  for (const GaussMix& gm : test_mixtures())
    for (double g : {0.25, 1.0, 2.0, 8.0}) {
      const ChannelView ch(gm, g);
      EXPECT_NEAR(fisher_output(ch).value, 1.0 - g * mmse(ch).value, 1e-7);
    }
}

TEST(SuboptimalPenalty, OptimalAndZeroEstimators) {
  const ChannelView ch(kPair, 1.0);
  const PenaltyReport opt = suboptimal_penalty(ch, [&](double y) { return posterior_mean(ch, y); });
  EXPECT_NEAR(opt.penalty.value, 0.0, 1e-15);
  EXPECT_NEAR(opt.mse.value, opt.mmse.value, 1e-8);

  const PenaltyReport zero = suboptimal_penalty(ch, [](double) { return 0.0; });
  EXPECT_NEAR(zero.mse.value, 2.0, 1e-8);  // E[X^2]
  EXPECT_NEAR(zero.penalty.value, 2.0 - zero.mmse.value, 1e-8);
}

TEST(SuboptimalPenalty, DecompositionForSeveralEstimators) {
  const std::vector<std::function<double(double)>> fs{
      [](double y) { return 0.5 * y; },
      [](double y) { return std::tanh(2.0 * y); },
      [](double) { return 0.0; },
  };
  for (const GaussMix& gm : {kPair, GaussMix({0.2, 0.5, 0.3}, {-1.5, 0.0, 2.0}, {0.4, 1.0, 0.6})})
    for (const auto& f : fs) {
      const PenaltyReport r = suboptimal_penalty(ChannelView(gm, 1.5), f);
      EXPECT_NEAR(r.mmse.value, r.mse.value - r.penalty.value, 1e-7);
      EXPECT_GE(r.penalty.value, 0.0);
    }
}

TEST(SuboptimalPenalty, JumpEstimatorReportsNonConvergence) {
  // A jump along a diagonal of the (x, z) grid defeats the tensor rule.
  EXPECT_THROW(suboptimal_penalty(ChannelView(kPair, 1.5), [](double y) { return y > 0 ? 1.0 : -1.0; }),
               ConvergenceError);
}

TEST(SuboptimalPenalty, LinearEstimatorAgainstSimulation) {
  const double g = 1.0;
  const double var = moments(kPair).variance;
  const double a = std::sqrt(g) * var / (1 + g * var);
  const PenaltyReport r = suboptimal_penalty(ChannelView(kPair, g), [&](double y) { return a * y; });

  std::mt19937_64 rng(77);
  std::normal_distribution<double> z;
  std::vector<double> mse(1000000), pen(mse.size()), opt(mse.size());
  for (std::size_t i = 0; i < mse.size(); ++i) {
    const double x = oracle::draw(kPair, rng);
    const double y = std::sqrt(g) * x + z(rng);
    const double pm = oracle::posterior_mean_closed(kPair, g, y);
    mse[i] = (x - a * y) * (x - a * y);
    pen[i] = (a * y - pm) * (a * y - pm);
    opt[i] = (x - pm) * (x - pm);
  }
  const oracle::Mc m1 = oracle::summarize(mse), m2 = oracle::summarize(pen), m3 = oracle::summarize(opt);
  EXPECT_LE(std::abs(r.mse.value - m1.mean), 4 * m1.std_error);
  EXPECT_LE(std::abs(r.penalty.value - m2.mean), 4 * m2.std_error);
  EXPECT_LE(std::abs(r.mmse.value - m3.mean), 4 * m3.std_error);
}

TEST(SuboptimalPenalty, RejectsDivergentEstimator) {
  const ChannelView ch(kStd, 1.0);
  EXPECT_THROW(suboptimal_penalty(ch, [](double y) { return std::exp(y * y); }), std::domain_error);
}

TEST(EntropyImmse, MatchesClosedFormAndDirect) {
  EXPECT_NEAR(entropy_immse(kStd).value, 1.4189385332, 1e-6);
  EXPECT_NEAR(entropy_immse(GaussMix::gaussian(0.0, 4.0)).value, 2.1120857137, 1e-5);
  EXPECT_NEAR(entropy_immse(kNarrowPair).value, 1.57243707899154502425, 1e-6);
  std::mt19937_64 rng(41);
  for (int i = 0; i < 4; ++i) {
    const GaussMix gm = random_mixture(rng);
    EXPECT_NEAR(entropy_immse(gm).value, entropy_direct(gm).value, 1e-4);
  }
}

TEST(EntropyImmse, ThreadInvariant) {
  Settings one, four;
  four.threads = 4;
  const GaussMix gm({0.2, 0.5, 0.3}, {-1.5, 0.0, 2.0}, {0.4, 1.0, 0.6});
  EXPECT_EQ(entropy_immse(gm, one).value, entropy_immse(gm, four).value);
}

}  // namespace
