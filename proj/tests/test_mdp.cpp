#include <gtest/gtest.h>

#include <cmath>

#include "nacb/envs.hpp"
#include "nacb/mdp.hpp"
#include "nacb/policy.hpp"
#include "test_util.hpp"

using namespace nacb;
using nacb::testing::near;

TEST(Validate, FixturesAreValid) {
  EXPECT_TRUE(validate(envs::cycle2()).empty());
  EXPECT_TRUE(validate(envs::tcycle()).empty());
  EXPECT_TRUE(validate(envs::bandit()).empty());
  EXPECT_TRUE(validate(envs::random_unichain(8, 3, 2, 7)).empty());
}

TEST(Validate, ReportsShortRow) {
  MatrixXd p(2, 2);
  p << 0.1, 0.8,
       1.0, 0.0;
  TabularMdp mdp(2, 1, p, MatrixXd::Zero(2, 1), VectorXd::Constant(2, 0.5));
  const auto v = validate(mdp);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0], "row (0,0) sums to 0.9");
}

TEST(Validate, ReportsRewardOutOfRange) {
  MatrixXd r(2, 1);
  r << 1.5, 0.0;
  TabularMdp mdp(2, 1, envs::cycle2().transitions(), r, VectorXd::Constant(2, 0.5));
  const auto v = validate(mdp);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_NE(v[0].find("reward out of [0,1]"), std::string::npos);
}

TEST(Validate, ReportsBadInitialDistribution) {
  TabularMdp mdp(2, 1, envs::cycle2().transitions(), MatrixXd::Zero(2, 1),
                 VectorXd::Constant(2, 0.4));
  const auto v = validate(mdp);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0], "initial_dist sums to 0.8");
}

TEST(Validate, RenormalizesRoundOffOnly) {
  MatrixXd p(2, 2);
  p << 0.5, 0.5 + 5e-10,
       1.0, 0.0;
  TabularMdp mdp(2, 1, p, MatrixXd::Zero(2, 1), VectorXd::Constant(2, 0.5));
  EXPECT_EQ(validate(mdp).size(), 1u);
  auto [fixed, warnings] = renormalized(mdp);
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_TRUE(validate(fixed).empty());

  p(0, 1) = 0.6;
  auto [still_bad, none] = renormalized(TabularMdp(2, 1, p, MatrixXd::Zero(2, 1),
                                                   VectorXd::Constant(2, 0.5)));
  EXPECT_TRUE(none.empty());
  EXPECT_FALSE(validate(still_bad).empty());
}

TEST(Mdp, ConstructorRejectsBadShapes) {
  EXPECT_THROW(TabularMdp(2, 1, MatrixXd::Zero(3, 2), MatrixXd::Zero(2, 1), VectorXd::Zero(2)),
               DimensionMismatch);
  EXPECT_THROW(TabularMdp(0, 1, MatrixXd::Zero(0, 0), MatrixXd::Zero(0, 1), VectorXd::Zero(0)),
               InvalidModel);
}

TEST(InducedKernel, Cycle2AnyTheta) {
  auto mdp = envs::cycle2();
  auto pol = SoftmaxPolicy::tabular(2, 1, nacb::testing::vec({3.0, -1.0}));
  MatrixXd want(2, 2);
  want << 0, 1,
          1, 0;
  EXPECT_TRUE(near(induced_kernel(mdp, pol).matrix(), want, 0.0));
}

TEST(InducedKernel, BanditIsIdentity) {
  auto pol = SoftmaxPolicy::tabular(1, 2);
  EXPECT_TRUE(near(induced_kernel(envs::bandit(), pol).matrix(), MatrixXd::Ones(1, 1), 0.0));
}

TEST(InducedKernel, TCycleRows) {
  auto pol = SoftmaxPolicy::tabular(3, 1, nacb::testing::vec({0.3, 0.1, -2.0}));
  MatrixXd want(3, 3);
  want << 0, 1, 0,
          0, 0, 1,
          0, 1, 0;
  EXPECT_TRUE(near(induced_kernel(envs::tcycle(), pol).matrix(), want, 0.0));
}

TEST(InducedKernel, RowStochasticForRandomPolicies) {
  Rng rng(3);
  auto mdp = envs::random_unichain(10, 4, 3, 11);
  for (int trial = 0; trial < 50; ++trial) {
    auto pol = SoftmaxPolicy::tabular(10, 4, nacb::testing::gaussian_vector(40, rng, 3.0));
    const MatrixXd k = induced_kernel(mdp, pol).matrix();
    for (int s = 0; s < 10; ++s) EXPECT_NEAR(k.row(s).sum(), 1.0, 1e-12);
    EXPECT_GE(k.minCoeff(), 0.0);
  }
}

TEST(InducedKernel, DimensionMismatch) {
  auto pol = SoftmaxPolicy::tabular(3, 2);
  EXPECT_THROW(induced_kernel(envs::cycle2(), pol), DimensionMismatch);
}

TEST(Step, DeterministicKernels) {
  Rng rng(1);
  EXPECT_EQ(step(envs::cycle2(), 0, 0, rng), (Transition{0, 0, 1.0, 1}));
  EXPECT_EQ(step(envs::bandit(), 0, 1, rng), (Transition{0, 1, 1.0, 0}));
}

TEST(Step, InvalidIndex) {
  Rng rng(1);
  EXPECT_THROW(step(envs::cycle2(), 2, 0, rng), InvalidIndex);
  EXPECT_THROW(step(envs::cycle2(), 0, 1, rng), InvalidIndex);
}

TEST(Step, SameSeedSameTransitions) {
  auto mdp = envs::random_unichain(8, 3, 2, 7);
  Rng a(99), b(99);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(step(mdp, 0, 0, a), step(mdp, 0, 0, b));
}

TEST(Step, EmpiricalFrequenciesMatchKernel) {
  auto mdp = envs::random_unichain(8, 3, 2, 7);
  Rng rng(2024);
  constexpr int n = 100000;
  for (int s : {0, 3, 7}) {
    VectorXd counts = VectorXd::Zero(8);
    for (int i = 0; i < n; ++i) counts(step(mdp, s, 1, rng).s_next) += 1.0;
    for (int t = 0; t < 8; ++t) {
      const double p = mdp.transition(s, 1, t);
      const double sigma = std::sqrt(p * (1 - p) / n);
      EXPECT_LE(std::abs(counts(t) / n - p), 3 * sigma + 1e-12) << "s=" << s << " t=" << t;
    }
  }
}
