// Train on a random unichain MDP and compare the learned policy with the optimum.

#include <cstdio>

#include "nacb/algorithm.hpp"
#include "nacb/envs.hpp"

int main() {
  const auto mdp = nacb::envs::random_unichain(8, 3, 2, 7);
  const auto schedule = nacb::schedule_for_horizon(1 << 16);

  nacb::NacbConfig cfg;
  cfg.epochs = schedule.epochs;
  cfg.horizon = schedule.horizon;
  cfg.batch = schedule.batch;
  cfg.alpha = 1.0;
  cfg.gamma = 1.0;
  cfg.seed = 42;
  const auto trace = nacb::run(mdp, cfg);

  const auto final_policy = nacb::SoftmaxPolicy::tabular(mdp.n_states(), mdp.n_actions(), trace.final_theta);
  const auto analysis = nacb::analyze_chain(nacb::induced_kernel(mdp, final_policy));
  std::printf("K=%d H=%d B=%d, %zu steps\n", cfg.epochs, cfg.horizon, cfg.batch, trace.rewards.size());
  std::printf("J* = %.4f, final policy gain = %.4f\n", trace.j_star,
              nacb::gain(mdp, final_policy.table(), analysis));
  for (std::size_t t = trace.rewards.size() / 8; t <= trace.rewards.size(); t *= 2)
    std::printf("Reg_%zu = %.2f\n", t, trace.regret(t));
}
