#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "nacb/chain.hpp"
#include "nacb/envs.hpp"
#include "nacb/policy.hpp"
#include "test_util.hpp"

using namespace nacb;
using nacb::testing::near;
using nacb::testing::vec;

namespace {

// Steps along a deterministic successor map until `target` is reached.
int deterministic_steps(const std::vector<int>& next, int start, int target) {
  int s = start;
  for (int t = 0; t <= static_cast<int>(next.size()); ++t) {
    if (s == target) return t;
    s = next[s];
  }
  return -1;
}

// E[T] = sum_{t>=0} P(T > t), accumulated from powers of the kernel with
// `absorbing` states removed.
double series_hitting_time(const MatrixXd& p, int start, const std::vector<bool>& absorbing) {
  const int n = static_cast<int>(p.rows());
  Eigen::RowVectorXd mass = Eigen::RowVectorXd::Zero(n);
  mass(start) = 1.0;
  double total = 0.0;
  for (int t = 0; t < 200000; ++t) {
    for (int s = 0; s < n; ++s)
      if (absorbing[s]) mass(s) = 0.0;
    const double alive = mass.sum();
    if (alive < 1e-15) break;
    total += alive;
    mass = mass * p;
  }
  return total;
}

int brute_period(const MatrixXd& p, int s) {
  const int n = static_cast<int>(p.rows());
  MatrixXd power = MatrixXd::Identity(n, n);
  int g = 0;
  for (int k = 1; k <= 2 * n * n; ++k) {
    power = power * p;
    power = (power.array() > 0.0).cast<double>();  // keep support only
    if (power(s, s) > 0.0) g = std::gcd(g, k);
  }
  return g;
}

}  // namespace

TEST(AnalyzeChain, Cycle2) {
  auto pol = SoftmaxPolicy::tabular(2, 1);
  const auto a = analyze_chain(induced_kernel(envs::cycle2(), pol));
  EXPECT_EQ(a.recurrent_class, (std::vector<int>{0, 1}));
  EXPECT_TRUE(a.transient_states.empty());
  EXPECT_EQ(a.period, 2);
  EXPECT_TRUE(near(a.stationary_dist, vec({0.5, 0.5}), 1e-12));
  EXPECT_EQ(a.c_hit, 0.0);

  // Oracle: walk the deterministic trajectory.
  const std::vector<int> next{1, 0};
  double c_tar = 0.0;
  for (int t = 0; t < 2; ++t) c_tar += 0.5 * deterministic_steps(next, 0, t);
  EXPECT_NEAR(c_tar, 0.5, 0.0);
  EXPECT_NEAR(a.c_tar, c_tar, 1e-12);
  EXPECT_NEAR(a.c_tar_check, c_tar, 1e-12);
}

TEST(AnalyzeChain, TCycle) {
  auto pol = SoftmaxPolicy::tabular(3, 1);
  const auto a = analyze_chain(induced_kernel(envs::tcycle(), pol));
  EXPECT_EQ(a.recurrent_class, (std::vector<int>{1, 2}));
  EXPECT_EQ(a.transient_states, (std::vector<int>{0}));
  EXPECT_EQ(a.period, 2);
  EXPECT_TRUE(near(a.stationary_dist, vec({0.0, 0.5, 0.5}), 1e-12));

  const std::vector<int> next{1, 2, 1};
  const int hit = std::min(deterministic_steps(next, 0, 1), deterministic_steps(next, 0, 2));
  EXPECT_EQ(hit, 1);
  EXPECT_NEAR(a.c_hit, hit, 1e-12);
  const double c_tar = 0.5 * deterministic_steps(next, 1, 1) + 0.5 * deterministic_steps(next, 1, 2);
  EXPECT_NEAR(a.c_tar, c_tar, 1e-12);
  EXPECT_NEAR(a.c_tar, 0.5, 1e-12);
}

TEST(AnalyzeChain, Bandit) {
  const auto a = analyze_chain(induced_kernel(envs::bandit(), SoftmaxPolicy::tabular(1, 2)));
  EXPECT_EQ(a.recurrent_class, (std::vector<int>{0}));
  EXPECT_EQ(a.period, 1);
  EXPECT_TRUE(near(a.stationary_dist, vec({1.0}), 0.0));
  EXPECT_EQ(a.c_hit, 0.0);
  EXPECT_EQ(a.c_tar, 0.0);
}

TEST(AnalyzeChain, RejectsTwoClosedClasses) {
  EXPECT_THROW(analyze_chain(StochasticMatrix(MatrixXd::Identity(2, 2))), NotUnichain);
  MatrixXd p(3, 3);
  p << 0.5, 0.25, 0.25,
       0, 1, 0,
       0, 0, 1;
  EXPECT_THROW(analyze_chain(StochasticMatrix(p)), NotUnichain);
}

TEST(StochasticMatrix, RejectsNonStochastic) {
  MatrixXd p(2, 2);
  p << 0.5, 0.4,
       1, 0;
  EXPECT_THROW(StochasticMatrix{p}, InvalidModel);
  p << 1.5, -0.5,
       1, 0;
  EXPECT_THROW(StochasticMatrix{p}, InvalidModel);
}

TEST(AnalyzeChain, RandomChainsAgreeWithSeriesOracle) {
  Rng rng(21);
  for (int seed = 0; seed < 10; ++seed) {
    auto mdp = envs::random_unichain(9, 3, 3, 100 + seed);
    auto pol = SoftmaxPolicy::tabular(9, 3, nacb::testing::gaussian_vector(27, rng));
    const auto kernel = induced_kernel(mdp, pol);
    const MatrixXd& p = kernel.matrix();
    const auto a = analyze_chain(kernel);

    EXPECT_EQ(a.recurrent_class.size() + a.transient_states.size(), 9u);
    EXPECT_NEAR(a.stationary_dist.sum(), 1.0, 1e-12);
    EXPECT_LE((p.transpose() * a.stationary_dist - a.stationary_dist).norm(), 1e-10);
    for (int t : a.transient_states) EXPECT_EQ(a.stationary_dist(t), 0.0);
    EXPECT_EQ(a.c_hit == 0.0, a.transient_states.empty());
    EXPECT_EQ(a.period, brute_period(p, a.recurrent_class.front()));

    std::vector<bool> recurrent(9, false);
    for (int s : a.recurrent_class) recurrent[s] = true;
    double c_hit = 0.0;
    for (int s = 0; s < 9; ++s) c_hit = std::max(c_hit, series_hitting_time(p, s, recurrent));
    EXPECT_NEAR(a.c_hit, c_hit, 1e-8 * std::max(1.0, c_hit));

    // Random-target time from every recurrent start agrees.
    for (int start : a.recurrent_class) {
      double c_tar = 0.0;
      for (int target : a.recurrent_class) {
        std::vector<bool> only(9, false);
        only[target] = true;
        c_tar += a.stationary_dist(target) * series_hitting_time(p, start, only);
      }
      EXPECT_NEAR(a.c_tar, c_tar, 1e-7 * std::max(1.0, c_tar)) << "start " << start;
    }
  }
}

TEST(CesaroTv, Cycle2OddEven) {
  const auto curve =
      cesaro_tv_curve(induced_kernel(envs::cycle2(), SoftmaxPolicy::tabular(2, 1)), 0, 10000);
  ASSERT_EQ(curve.size(), 10000u);
  for (int t = 1; t <= 10000; ++t) {
    if (t % 2 == 1)
      EXPECT_NEAR(curve[t - 1], 1.0 / (2.0 * t), 1e-12);
    else
      EXPECT_NEAR(curve[t - 1], 0.0, 1e-12);
  }
}

TEST(CesaroTv, BanditMixedImmediately) {
  const auto curve =
      cesaro_tv_curve(induced_kernel(envs::bandit(), SoftmaxPolicy::tabular(1, 2)), 0, 50);
  for (double v : curve) EXPECT_EQ(v, 0.0);
}

TEST(CesaroTv, TCycleFromTransientState) {
  auto kernel = induced_kernel(envs::tcycle(), SoftmaxPolicy::tabular(3, 1));
  const auto a = analyze_chain(kernel);
  const auto curve = cesaro_tv_curve(kernel, 0, 10000, a.stationary_dist);
  for (int t = 1; t <= 10000; ++t) EXPECT_LE(curve[t - 1], 1.5 / t + 1e-12) << t;
  EXPECT_DOUBLE_EQ(a.c_hit + a.c_tar, 1.5);
}

TEST(CesaroTv, RecurrentStartsObeyTighterBound) {
  Rng rng(31);
  for (int seed = 0; seed < 5; ++seed) {
    auto mdp = envs::random_unichain(7, 2, 2, 300 + seed);
    auto kernel = induced_kernel(mdp, SoftmaxPolicy::tabular(7, 2, nacb::testing::gaussian_vector(14, rng)));
    const auto a = analyze_chain(kernel);
    for (int s0 = 0; s0 < 7; ++s0) {
      const double c = a.is_recurrent(s0) ? a.c_tar : a.c_hit + a.c_tar;
      const auto curve = cesaro_tv_curve(kernel, s0, 2000, a.stationary_dist);
      for (int t = 1; t <= 2000; ++t) ASSERT_LE(curve[t - 1], c / t + 1e-9);
    }
  }
}

TEST(CesaroTv, InvalidStart) {
  auto kernel = induced_kernel(envs::cycle2(), SoftmaxPolicy::tabular(2, 1));
  EXPECT_THROW(cesaro_tv_curve(kernel, 5, 10), InvalidIndex);
}
