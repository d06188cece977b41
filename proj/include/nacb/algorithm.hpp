#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "nacb/chain.hpp"
#include "nacb/critic_features.hpp"
#include "nacb/error.hpp"
#include "nacb/estimators.hpp"
#include "nacb/mdp.hpp"
#include "nacb/oracle.hpp"
#include "nacb/policy.hpp"

namespace nacb {

enum class WarmStart { reuse, reset };
enum class RateMode { explicit_rates, theory };

struct Rates {
  double alpha = 0.0;
  double beta = 0.0;
  double c_beta = 0.0;
  double gamma = 0.0;
};

/// alpha = mu^2 / (4 G1^2 L), beta = lambda^2 / 2, c_beta = lambda + sqrt(1/lambda^2 - 1),
/// gamma = mu / G1^2.
inline Rates theory_rates(double lambda, double mu, double g1, double smoothness) {
  if (!(lambda > 0.0))
    throw DomainError("theory rates need lambda > 0; supply explicit rates instead");
  if (lambda > 1.0)
    throw DomainError("theory rates need lambda <= 1 (c_beta would be imaginary); "
                      "supply explicit rates instead");
  if (!(mu > 0.0)) throw DomainError("theory rates need mu > 0; supply explicit rates instead");
  if (!(g1 > 0.0)) throw DomainError("theory rates need G1 > 0");
  if (!(smoothness > 0.0)) throw DomainError("theory rates need L > 0");
  Rates r;
  r.alpha = mu * mu / (4.0 * g1 * g1 * smoothness);
  r.beta = lambda * lambda / 2.0;
  r.c_beta = lambda + std::sqrt(1.0 / (lambda * lambda) - 1.0);
  r.gamma = mu / (g1 * g1);
  return r;
}

struct Schedule {
  int epochs = 0;
  int horizon = 0;
  int batch = 0;
  std::uint64_t effective_steps = 0;  // 2 K H B
};

/// B = round(sqrt(T/2)), H = max(1, round(log2 T)), K = max(1, floor(T / 2HB)).
inline Schedule schedule_for_horizon(std::uint64_t target) {
  if (target < 64) throw DomainError("schedule_for_horizon needs T >= 64");
  const double t = static_cast<double>(target);
  Schedule s;
  s.batch = static_cast<int>(std::lround(std::sqrt(t / 2.0)));
  s.horizon = std::max(1, static_cast<int>(std::lround(std::log2(t))));
  const std::uint64_t per_epoch = 2ull * s.horizon * s.batch;
  s.epochs = static_cast<int>(std::max<std::uint64_t>(1, target / per_epoch));
  s.effective_steps = per_epoch * s.epochs;
  return s;
}

struct NacbConfig {
  int epochs = 0;
  int horizon = 1;
  int batch = 1;
  double alpha = 0.1;
  double beta = 0.5;
  double c_beta = 1.0;
  double gamma = 0.5;
  NpgSign npg_sign = NpgSign::descent;
  std::uint64_t seed = 0;
  WarmStart warm_start = WarmStart::reuse;
  RateMode rate_mode = RateMode::explicit_rates;
  double smoothness = 1.0;       // L, used by theory rates only
  bool oracle_diagnostics = false;
  std::optional<double> j_star;  // computed by enumeration when absent

  void check() const {
    if (epochs < 0) throw DomainError("K must be nonnegative");
    if (horizon <= 0 || batch <= 0) throw DomainError("H and B must be positive");
    if (rate_mode == RateMode::explicit_rates) {
      if (!(beta > 0.0) || !(gamma >= 0.0) || !(c_beta > 0.0))
        throw DomainError("need beta > 0, c_beta > 0 and gamma >= 0");
      if (!std::isfinite(alpha)) throw DomainError("alpha must be finite");
    }
  }
  std::uint64_t total_steps() const {
    return 2ull * static_cast<std::uint64_t>(epochs) * horizon * batch;
  }
};

struct EpochDiagnostics {
  int epoch = 0;
  std::uint64_t theta_hash = 0;  // of the policy used during the epoch
  int start_state = 0;
  VectorXd xi;
  VectorXd omega;
  double gain = std::numeric_limits<double>::quiet_NaN();
  double critic_error = std::numeric_limits<double>::quiet_NaN();  // ||Pi(xi_k - xi*_k)||
  double npg_error = std::numeric_limits<double>::quiet_NaN();     // ||omega_k - omega*_k|| on range(F)
};

struct RegretTrace {
  std::vector<double> rewards;
  double j_star = 0.0;
  Rates rates;
  std::vector<EpochDiagnostics> epochs;
  VectorXd final_theta;

  /// Reg_T = sum_{t < T} (J* - r_t).
  double regret(std::size_t t) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < std::min(t, rewards.size()); ++i) acc += j_star - rewards[i];
    return acc;
  }
  double final_regret() const { return regret(rewards.size()); }

  std::vector<double> cumulative_regret() const {
    std::vector<double> out(rewards.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = acc += j_star - rewards[i];
    return out;
  }

  /// Columns: step, reward, cumulative_regret.
  void write_csv(std::ostream& os) const {
    os << "step,reward,cumulative_regret\n";
    double acc = 0.0;
    char buf[96];
    for (std::size_t i = 0; i < rewards.size(); ++i) {
      acc += j_star - rewards[i];
      std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", i + 1, rewards[i], acc);
      os << buf;
    }
  }

  nlohmann::json diagnostics_json() const {
    auto num = [](double x) -> nlohmann::json {
      return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
    };
    auto arr = [](const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    nlohmann::json j;
    j["j_star"] = j_star;
    j["steps"] = rewards.size();
    j["final_regret"] = final_regret();
    j["rates"] = {{"alpha", rates.alpha}, {"beta", rates.beta}, {"c_beta", rates.c_beta},
                  {"gamma", rates.gamma}};
    j["final_theta"] = arr(final_theta);
    j["epochs"] = nlohmann::json::array();
    for (const auto& e : epochs) {
      char hash[24];
      std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(e.theta_hash));
      j["epochs"].push_back({{"epoch", e.epoch},
                             {"theta_hash", hash},
                             {"start_state", e.start_state},
                             {"xi", arr(e.xi)},
                             {"omega", arr(e.omega)},
                             {"gain", num(e.gain)},
                             {"critic_error", num(e.critic_error)},
                             {"npg_error", num(e.npg_error)}});
    }
    return j;
  }
};

/// FNV-1a over the bytes of theta.
inline std::uint64_t theta_hash(const VectorXd& theta) {
  std::uint64_t h = 1469598103934665603ull;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    unsigned char bytes[sizeof(double)];
    const double x = theta(i);
    std::memcpy(bytes, &x, sizeof x);
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ull;
    }
  }
  return h;
}

/// Rates from the oracle constants at the initial policy, with lambda capped at 1.
inline Rates resolve_rates(const TabularMdp& mdp, const SoftmaxPolicy& policy0,
                           const CriticFeatures& phi, const NacbConfig& cfg) {
  if (cfg.rate_mode == RateMode::explicit_rates)
    return {cfg.alpha, cfg.beta, cfg.c_beta, cfg.gamma};
  const auto c = assumption_constants(mdp, {policy0}, phi);
  return theory_rates(std::min(1.0, c.lambda), c.mu, c.g1, cfg.smoothness);
}

namespace detail {

inline void fill_oracle_diagnostics(EpochDiagnostics& diag, const TabularMdp& mdp,
                                    const SoftmaxPolicy& policy, const CriticFeatures& phi,
                                    double c_beta) {
  const auto analysis = analyze_chain(induced_kernel(mdp, policy));
  const auto bundle = value_bundle(mdp, policy, analysis);
  diag.gain = bundle.gain;
  const auto sys = critic_system(mdp, policy, analysis, phi, c_beta);
  diag.critic_error = (sys.projector * (diag.xi - sys.xi_star)).norm();
  const MatrixXd f = fisher_matrix(policy, analysis);
  const VectorXd w_star = exact_npg(exact_policy_gradient(mdp, policy, bundle, analysis), f);
  const MatrixXd range = linalg::range_space(f);
  diag.npg_error = (range.transpose() * (diag.omega - w_star)).norm();
}

}  // namespace detail

/// One single-trajectory run: per epoch, HB critic transitions, HB NPG transitions,
/// then theta <- theta + alpha omega. The carried state is the last generated s'.
/// An optional log receives every transition in interaction order.
inline RegretTrace run(const TabularMdp& mdp, const SoftmaxPolicy& policy0,
                       const CriticFeatures& phi, const NacbConfig& cfg, Rng& rng,
                       std::vector<Transition>* log = nullptr) {
  cfg.check();
  if (policy0.n_states() != mdp.n_states() || policy0.n_actions() != mdp.n_actions())
    throw DimensionMismatch("policy dimensions do not match the MDP");
  if (phi.n_states() != mdp.n_states())
    throw DimensionMismatch("critic features do not cover the state space");

  RegretTrace trace;
  trace.j_star = cfg.j_star ? *cfg.j_star : optimal_gain(mdp).j_star;
  trace.rates = resolve_rates(mdp, policy0, phi, cfg);
  const Rates& r = trace.rates;
  trace.rewards.reserve(cfg.total_steps());

  SoftmaxPolicy policy = policy0;
  auto sampler = TrajectorySampler::from_initial(mdp, rng);
  sampler.set_reward_sink(&trace.rewards);
  sampler.set_log(log);

  CriticState xi = CriticState::zero(phi.dim());
  NpgState omega{VectorXd::Zero(policy.dim())};
  for (int k = 0; k < cfg.epochs; ++k) {
    if (cfg.warm_start == WarmStart::reset) {
      xi = CriticState::zero(phi.dim());
      omega.omega.setZero();
    }
    EpochDiagnostics diag;
    diag.epoch = k;
    diag.theta_hash = theta_hash(policy.theta());
    diag.start_state = sampler.state();

    xi = critic_inner_loop(policy, phi, sampler, xi, cfg.horizon, cfg.batch, r.beta, r.c_beta)
             .state;
    omega = npg_inner_loop(policy, phi, sampler, xi, omega, cfg.horizon, cfg.batch, r.gamma,
                           cfg.npg_sign)
                .state;

    diag.xi = xi.xi();
    diag.omega = omega.omega;
    if (cfg.oracle_diagnostics) detail::fill_oracle_diagnostics(diag, mdp, policy, phi, r.c_beta);
    trace.epochs.push_back(std::move(diag));

    policy = policy.update(omega.omega, r.alpha);
    if (!policy.theta().allFinite()) throw NonFiniteIterate("theta became non-finite");
  }
  trace.final_theta = policy.theta();
  return trace;
}

inline RegretTrace run(const TabularMdp& mdp, const SoftmaxPolicy& policy0, const NacbConfig& cfg,
                       Rng& rng) {
  return run(mdp, policy0, CriticFeatures::one_hot(mdp.n_states()), cfg, rng);
}

/// Tabular policy at theta = 0, one-hot critic, rng seeded from the config.
inline RegretTrace run(const TabularMdp& mdp, const NacbConfig& cfg) {
  Rng rng(cfg.seed);
  return run(mdp, SoftmaxPolicy::tabular(mdp.n_states(), mdp.n_actions()), cfg, rng);
}

}  // namespace nacb
