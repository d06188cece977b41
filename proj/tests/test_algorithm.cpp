#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nacb/algorithm.hpp"
#include "nacb/envs.hpp"
#include "test_util.hpp"

using namespace nacb;

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST(TheoryRates, Example) {
  const Rates r = theory_rates(0.5, 0.1, std::sqrt(2.0), 1.0);
  EXPECT_NEAR(r.alpha, 0.00125, 1e-15);
  EXPECT_NEAR(r.beta, 0.125, 1e-15);
  EXPECT_NEAR(r.c_beta, 0.5 + std::sqrt(3.0), 1e-15);
  EXPECT_NEAR(r.c_beta, 2.23205, 1e-5);
  EXPECT_NEAR(r.gamma, 0.05, 1e-15);
  EXPECT_EQ(theory_rates(1.0, 0.1, 1.0, 1.0).c_beta, 1.0);
}

TEST(TheoryRates, DomainErrors) {
  EXPECT_THROW(theory_rates(0.5, 0.0, 1.0, 1.0), DomainError);
  EXPECT_THROW(theory_rates(1.5, 0.1, 1.0, 1.0), DomainError);
  EXPECT_THROW(theory_rates(0.0, 0.1, 1.0, 1.0), DomainError);
  EXPECT_THROW(theory_rates(0.5, 0.1, 1.0, 0.0), DomainError);
}

TEST(Schedule, Examples) {
  const auto s = schedule_for_horizon(1u << 18);
  EXPECT_EQ(s.batch, 362);
  EXPECT_EQ(s.horizon, 18);
  EXPECT_EQ(s.epochs, 20);
  EXPECT_EQ(s.effective_steps, 260640u);
  const auto small = schedule_for_horizon(64);
  EXPECT_EQ(small.batch, 6);
  EXPECT_EQ(small.horizon, 6);
  EXPECT_EQ(small.epochs, 1);
  // The K >= 1 floor makes one epoch (72 steps) longer than T = 64.
  EXPECT_EQ(small.effective_steps, 72u);
  EXPECT_THROW(schedule_for_horizon(63), DomainError);
}

TEST(Schedule, EffectiveHorizonNeverExceedsTarget) {
  for (std::uint64_t t = 128; t < 5000000; t = t * 11 / 10 + 1) {
    const auto s = schedule_for_horizon(t);
    EXPECT_LE(s.effective_steps, t) << t;
    EXPECT_EQ(s.effective_steps, 2ull * s.epochs * s.horizon * s.batch);
  }
}

TEST(Run, ZeroEpochs) {
  NacbConfig cfg;
  cfg.epochs = 0;
  const auto trace = run(envs::bandit(), cfg);
  EXPECT_TRUE(trace.rewards.empty());
  EXPECT_EQ(trace.final_regret(), 0.0);
  EXPECT_TRUE(trace.epochs.empty());
}

TEST(Run, SampleAccountingAndContinuity) {
  const auto mdp = envs::random_unichain(8, 3, 2, 7);
  NacbConfig cfg;
  cfg.epochs = 5;
  cfg.horizon = 3;
  cfg.batch = 7;
  cfg.seed = 4;
  Rng rng(cfg.seed);
  std::vector<Transition> log;
  const auto trace = run(mdp, SoftmaxPolicy::tabular(8, 3), CriticFeatures::one_hot(8), cfg, rng, &log);
  ASSERT_EQ(trace.rewards.size(), cfg.total_steps());
  ASSERT_EQ(log.size(), 2u * 5 * 3 * 7);
  for (std::size_t i = 0; i + 1 < log.size(); ++i) EXPECT_EQ(log[i].s_next, log[i + 1].s);
  for (std::size_t i = 0; i < log.size(); ++i) EXPECT_EQ(trace.rewards[i], log[i].r);
  ASSERT_EQ(trace.epochs.size(), 5u);
  for (int k = 0; k < 5; ++k) EXPECT_EQ(trace.epochs[k].start_state, log[2 * k * 21].s);
}

TEST(Run, Determinism) {
  const auto mdp = envs::random_unichain(8, 3, 2, 7);
  NacbConfig cfg;
  cfg.epochs = 10;
  cfg.horizon = 5;
  cfg.batch = 20;
  cfg.seed = 99;
  cfg.oracle_diagnostics = true;
  const auto a = run(mdp, cfg);
  const auto b = run(mdp, cfg);
  EXPECT_EQ(a.rewards, b.rewards);
  EXPECT_EQ(a.diagnostics_json().dump(), b.diagnostics_json().dump());
  cfg.seed = 100;
  EXPECT_NE(run(mdp, cfg).rewards, a.rewards);
}

TEST(Run, Cycle2RegretBounded) {
  NacbConfig cfg;
  cfg.epochs = 7;
  cfg.horizon = 3;
  cfg.batch = 5;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    cfg.seed = seed;
    const auto trace = run(envs::cycle2(), cfg);
    EXPECT_NEAR(trace.j_star, 0.5, 1e-15);
    for (double reg : trace.cumulative_regret()) EXPECT_LE(std::abs(reg), 0.5 + 1e-12);
  }
}

TEST(Run, BanditLearnsBestArm) {
  NacbConfig cfg;
  cfg.epochs = 200;
  cfg.horizon = 20;
  cfg.batch = 32;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    cfg.seed = seed;
    const auto trace = run(envs::bandit(), cfg);
    const auto pol = SoftmaxPolicy::tabular(1, 2, trace.final_theta);
    EXPECT_GE(pol.prob(0, 1), 0.95) << seed;
  }
}

TEST(Run, CriticErrorShrinksWithBatch) {
  for (const char* name : {"bandit", "rand:8,3,2,7"}) {
    const auto mdp = envs::build(name);
    std::vector<double> ratios;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      NacbConfig cfg;
      cfg.epochs = 10;
      cfg.horizon = 40;
      cfg.seed = seed;
      cfg.oracle_diagnostics = true;
      auto sq_median = [&](int batch) {
        cfg.batch = batch;
        std::vector<double> errs;
        for (const auto& e : run(mdp, cfg).epochs) errs.push_back(e.critic_error * e.critic_error);
        return median(errs);
      };
      ratios.push_back(sq_median(200) / sq_median(50));
    }
    EXPECT_LE(median(ratios), 0.6) << name;
  }
}

TEST(Run, OracleDiagnosticsTrackGain) {
  NacbConfig cfg;
  cfg.epochs = 30;
  cfg.horizon = 10;
  cfg.batch = 50;
  cfg.alpha = 1.0;
  cfg.gamma = 1.0;
  cfg.oracle_diagnostics = true;
  const auto trace = run(envs::random_unichain(8, 3, 2, 7), cfg);
  ASSERT_EQ(trace.epochs.size(), 30u);
  EXPECT_GT(trace.epochs.back().gain, trace.epochs.front().gain);
  for (const auto& e : trace.epochs) {
    EXPECT_TRUE(std::isfinite(e.critic_error));
    EXPECT_TRUE(std::isfinite(e.npg_error));
    EXPECT_LE(e.gain, trace.j_star + 1e-12);
  }
}

TEST(Run, TheoryRateMode) {
  NacbConfig cfg;
  cfg.epochs = 3;
  cfg.horizon = 5;
  cfg.batch = 10;
  cfg.rate_mode = RateMode::theory;
  const auto trace = run(envs::bandit(), cfg);
  // lambda is capped at 1 (M vanishes for one state), mu = 0.5, G1 = sqrt(0.5).
  EXPECT_NEAR(trace.rates.beta, 0.5, 1e-12);
  EXPECT_NEAR(trace.rates.c_beta, 1.0, 1e-12);
  EXPECT_NEAR(trace.rates.gamma, 1.0, 1e-12);
  EXPECT_NEAR(trace.rates.alpha, 0.125, 1e-12);
  EXPECT_THROW(run(envs::cycle2(), cfg), DomainError);
}

TEST(Run, WarmStartModesDiffer) {
  NacbConfig cfg;
  cfg.epochs = 4;
  cfg.horizon = 3;
  cfg.batch = 10;
  cfg.seed = 3;
  const auto reuse = run(envs::bandit(), cfg);
  cfg.warm_start = WarmStart::reset;
  const auto reset = run(envs::bandit(), cfg);
  EXPECT_NE(reuse.final_theta, reset.final_theta);
}

TEST(Run, LiteralSignRuns) {
  NacbConfig cfg;
  cfg.epochs = 3;
  cfg.horizon = 5;
  cfg.batch = 10;
  cfg.npg_sign = NpgSign::literal;
  EXPECT_NO_THROW(run(envs::bandit(), cfg));
}

TEST(Run, InvalidConfig) {
  NacbConfig cfg;
  cfg.epochs = 1;
  cfg.batch = 0;
  EXPECT_THROW(run(envs::bandit(), cfg), DomainError);
}

TEST(RegretTrace, CsvAndJson) {
  RegretTrace t;
  t.j_star = 1.0;
  t.rewards = {1.0, 0.0, 0.5};
  t.final_theta = Eigen::VectorXd::Zero(2);
  std::ostringstream os;
  t.write_csv(os);
  EXPECT_EQ(os.str(), "step,reward,cumulative_regret\n1,1,0\n2,0,1\n3,0.5,1.5\n");
  EXPECT_EQ(t.regret(2), 1.0);
  const auto j = t.diagnostics_json();
  EXPECT_EQ(j["final_regret"], 1.5);
  EXPECT_EQ(j["steps"], 3);
}

TEST(ThetaHash, SensitiveToBits) {
  Eigen::VectorXd a = Eigen::VectorXd::Zero(3), b = a;
  b(1) = std::nextafter(0.0, 1.0);
  EXPECT_NE(theta_hash(a), theta_hash(b));
  EXPECT_EQ(theta_hash(a), theta_hash(Eigen::VectorXd::Zero(3)));
}
