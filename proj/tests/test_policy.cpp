#include <gtest/gtest.h>

#include <cmath>

#include "nacb/policy.hpp"
#include "test_util.hpp"

using namespace nacb;
using nacb::testing::near;
using nacb::testing::vec;

TEST(ActionProbs, ZeroThetaIsUniform) {
  auto pol = SoftmaxPolicy::tabular(3, 4);
  for (int s = 0; s < 3; ++s) EXPECT_TRUE(near(pol.action_probs(s), VectorXd::Constant(4, 0.25), 1e-15));
}

TEST(ActionProbs, BanditLogistic) {
  auto pol = SoftmaxPolicy::tabular(1, 2, vec({0.0, 3.0}));
  const double sigma3 = 1.0 / (1.0 + std::exp(-3.0));
  EXPECT_NEAR(pol.prob(0, 1), sigma3, 1e-15);
  EXPECT_NEAR(pol.prob(0, 1), 0.95257, 1e-5);
}

TEST(ActionProbs, ShiftInvariantPerState) {
  Rng rng(5);
  const VectorXd theta = nacb::testing::gaussian_vector(12, rng);
  auto pol = SoftmaxPolicy::tabular(3, 4, theta);
  VectorXd shifted = theta;
  shifted.segment(4, 4).array() += 7.5;  // state 1
  auto moved = pol.with_theta(shifted);
  EXPECT_TRUE(near(pol.table(), moved.table(), 1e-12));
}

TEST(ActionProbs, LargeLogitsStayFinite) {
  auto pol = SoftmaxPolicy::tabular(1, 3, vec({1000.0, 999.0, -1000.0}));
  EXPECT_TRUE(pol.table().allFinite());
  EXPECT_NEAR(pol.action_probs(0).sum(), 1.0, 1e-12);
  EXPECT_TRUE(std::isfinite(pol.log_prob(0, 2)));
}

TEST(Score, BanditAtZero) {
  auto pol = SoftmaxPolicy::tabular(1, 2);
  EXPECT_TRUE(near(pol.score(0, 1), vec({-0.5, 0.5}), 1e-15));
}

TEST(Score, SingleActionStateIsZero) {
  auto pol = SoftmaxPolicy::tabular(2, 1, vec({1.0, -2.0}));
  EXPECT_TRUE(near(pol.score(1, 0), VectorXd::Zero(2), 0.0));
}

TEST(Score, MatchesFiniteDifferenceOfLogProb) {
  Rng rng(8);
  constexpr double h = 1e-5;
  // Non-tabular features exercise the general formula.
  MatrixXd feats(3 * 3, 5);
  std::normal_distribution<double> g(0, 1);
  for (Eigen::Index i = 0; i < feats.size(); ++i) feats.data()[i] = g(rng);
  auto f = std::make_shared<const PolicyFeatures>(3, 3, feats);
  SoftmaxPolicy pol(f, nacb::testing::gaussian_vector(5, rng));
  for (int s = 0; s < 3; ++s)
    for (int a = 0; a < 3; ++a) {
      const VectorXd sc = pol.score(s, a);
      for (int i = 0; i < 5; ++i) {
        VectorXd e = VectorXd::Zero(5);
        e(i) = h;
        const double fd =
            (pol.with_theta(pol.theta() + e).log_prob(s, a) -
             pol.with_theta(pol.theta() - e).log_prob(s, a)) / (2 * h);
        EXPECT_LE(std::abs(fd - sc(i)), 1e-6 * std::max(1.0, std::abs(sc(i))));
      }
    }
}

TEST(Score, ZeroMeanPerState) {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    auto pol = SoftmaxPolicy::tabular(4, 3, nacb::testing::gaussian_vector(12, rng, 2.0));
    for (int s = 0; s < 4; ++s) {
      VectorXd acc = VectorXd::Zero(12);
      for (int a = 0; a < 3; ++a) acc += pol.prob(s, a) * pol.score(s, a);
      EXPECT_LE(acc.norm(), 1e-10);
    }
  }
}

TEST(Score, TabularNormBoundedBySqrt2) {
  Rng rng(10);
  std::uniform_int_distribution<int> pick_s(0, 4), pick_a(0, 3);
  double worst = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    auto pol = SoftmaxPolicy::tabular(5, 4, nacb::testing::gaussian_vector(20, rng, 4.0));
    worst = std::max(worst, pol.score(pick_s(rng), pick_a(rng)).norm());
  }
  EXPECT_LE(worst, std::sqrt(2.0) + 1e-12);
}

TEST(Update, ZeroStepOrDirectionKeepsPolicy) {
  Rng rng(11);
  auto pol = SoftmaxPolicy::tabular(2, 3, nacb::testing::gaussian_vector(6, rng));
  const VectorXd omega = nacb::testing::gaussian_vector(6, rng);
  EXPECT_TRUE(near(pol.update(VectorXd::Zero(6), 0.7).table(), pol.table(), 0.0));
  EXPECT_TRUE(near(pol.update(omega, 0.0).theta(), pol.theta(), 0.0));
}

TEST(Update, BanditNaturalStep) {
  auto pol = SoftmaxPolicy::tabular(1, 2).update(vec({-0.5, 0.5}), 1.0);
  EXPECT_TRUE(near(pol.theta(), vec({-0.5, 0.5}), 0.0));
  EXPECT_NEAR(pol.prob(0, 1), 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(pol.prob(0, 1), 0.73106, 1e-5);
}

TEST(Update, DimensionMismatch) {
  auto pol = SoftmaxPolicy::tabular(1, 2);
  EXPECT_THROW(pol.update(VectorXd::Zero(3), 1.0), DimensionMismatch);
  EXPECT_THROW(SoftmaxPolicy::tabular(1, 2, VectorXd::Zero(3)), DimensionMismatch);
}

TEST(Sampling, FollowsProbabilities) {
  auto pol = SoftmaxPolicy::tabular(1, 3, vec({0.0, 1.0, -1.0}));
  Rng rng(12);
  VectorXd counts = VectorXd::Zero(3);
  constexpr int n = 60000;
  for (int i = 0; i < n; ++i) counts(pol.sample_action(0, rng)) += 1;
  for (int a = 0; a < 3; ++a) {
    const double p = pol.prob(0, a);
    EXPECT_LE(std::abs(counts(a) / n - p), 4 * std::sqrt(p * (1 - p) / n));
  }
}
