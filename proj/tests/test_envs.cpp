#include <gtest/gtest.h>

#include "nacb/chain.hpp"
#include "nacb/envs.hpp"
#include "test_util.hpp"

using namespace nacb;

TEST(Envs, Cycle2Tensor) {
  auto mdp = envs::cycle2();
  EXPECT_EQ(mdp.n_states(), 2);
  EXPECT_EQ(mdp.n_actions(), 1);
  EXPECT_EQ(mdp.transition(0, 0, 1), 1.0);
  EXPECT_EQ(mdp.transition(1, 0, 0), 1.0);
  EXPECT_EQ(mdp.reward(0, 0), 1.0);
  EXPECT_EQ(mdp.reward(1, 0), 0.0);
}

TEST(Envs, TCycleHasPeriodTwoAndOneTransientState) {
  const auto a = analyze_chain(induced_kernel(envs::tcycle(), SoftmaxPolicy::tabular(3, 1)));
  EXPECT_EQ(a.period, 2);
  EXPECT_EQ(a.transient_states.size(), 1u);
}

TEST(Envs, RandomIsUnichainUnderRandomPolicies) {
  auto mdp = envs::random_unichain(8, 3, 2, 7);
  EXPECT_TRUE(validate(mdp).empty());
  Rng rng(70);
  for (int i = 0; i < 20; ++i) {
    auto pol = SoftmaxPolicy::tabular(8, 3, nacb::testing::gaussian_vector(24, rng, 3.0));
    const auto a = analyze_chain(induced_kernel(mdp, pol));
    EXPECT_EQ(a.transient_states, (std::vector<int>{6, 7}));
  }
}

TEST(Envs, RandomIsReproducible) {
  auto a = envs::random_unichain(8, 3, 2, 7);
  auto b = envs::random_unichain(8, 3, 2, 7);
  EXPECT_EQ(a.transitions(), b.transitions());
  EXPECT_EQ(a.rewards(), b.rewards());
  auto c = envs::random_unichain(8, 3, 2, 8);
  EXPECT_NE(a.transitions(), c.transitions());
}

TEST(Envs, PartitionIsPolicyInvariant) {
  Rng rng(71);
  for (const char* name : {"cycle2", "tcycle", "bandit", "pcyc:4,3", "rand:9,2,3,5"}) {
    auto mdp = envs::build(name);
    const int S = mdp.n_states(), A = mdp.n_actions();
    const auto base = analyze_chain(induced_kernel(mdp, SoftmaxPolicy::tabular(S, A)));
    for (int i = 0; i < 20; ++i) {
      auto pol = SoftmaxPolicy::tabular(S, A, nacb::testing::gaussian_vector(S * A, rng, 3.0));
      const auto a = analyze_chain(induced_kernel(mdp, pol));
      EXPECT_EQ(a.recurrent_class, base.recurrent_class) << name;
      EXPECT_EQ(a.transient_states, base.transient_states) << name;
    }
  }
}

TEST(Envs, PeriodicCycleKeepsItsPeriod) {
  Rng rng(72);
  for (int p : {1, 2, 3, 5}) {
    auto mdp = envs::periodic_cycle(p, 3);
    EXPECT_TRUE(validate(mdp).empty());
    for (int i = 0; i < 20; ++i) {
      auto pol = SoftmaxPolicy::tabular(p, 3, nacb::testing::gaussian_vector(3 * p, rng, 3.0));
      EXPECT_EQ(analyze_chain(induced_kernel(mdp, pol)).period, p);
    }
  }
}

TEST(Envs, SpecParsingRoundTrip) {
  for (const char* name : {"cycle2", "tcycle", "bandit", "pcyc:3,2", "rand:8,3,2,7"})
    EXPECT_EQ(envs::EnvSpec::parse(name).name(), name);
  EXPECT_THROW(envs::EnvSpec::parse("nope"), FormatError);
  EXPECT_THROW(envs::EnvSpec::parse("pcyc:3"), FormatError);
  EXPECT_THROW(envs::EnvSpec::parse("rand:8,x,2,7"), FormatError);
}

TEST(Envs, BadParameters) {
  EXPECT_THROW(envs::random_unichain(3, 2, 3, 1), InvalidModel);
  EXPECT_THROW(envs::periodic_cycle(0, 2), InvalidModel);
}
