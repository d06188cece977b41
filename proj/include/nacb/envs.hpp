#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nacb/chain.hpp"
#include "nacb/error.hpp"
#include "nacb/mdp.hpp"
#include "nacb/policy.hpp"

namespace nacb::envs {

/// Two-state deterministic cycle, one action, r = [1, 0].
inline TabularMdp cycle2() {
  MatrixXd p(2, 2);
  p << 0, 1,
       1, 0;
  MatrixXd r(2, 1);
  r << 1, 0;
  VectorXd rho(2);
  rho << 1, 0;
  return TabularMdp(2, 1, p, r, rho);
}

/// cycle2 with a transient entry state. State 0 is the transient state t
/// (t -> 1, r = 0); states 1 and 2 are the cycle with rewards 1 and 0.
inline TabularMdp tcycle() {
  MatrixXd p(3, 3);
  p << 0, 1, 0,
       0, 0, 1,
       0, 1, 0;
  MatrixXd r(3, 1);
  r << 0, 1, 0;
  VectorXd rho(3);
  rho << 1, 0, 0;
  return TabularMdp(3, 1, p, r, rho);
}

/// One state, two actions with rewards 0 and 1.
inline TabularMdp bandit() {
  MatrixXd p(2, 1);
  p << 1, 1;
  MatrixXd r(1, 2);
  r << 0, 1;
  VectorXd rho(1);
  rho << 1;
  return TabularMdp(1, 2, p, r, rho);
}

/// p-state cycle s -> s+1 (mod p) under every action; actions only choose
/// the reward, r(s,a) = ((s + a) mod n_act) / (n_act - 1). Period p for every policy.
inline TabularMdp periodic_cycle(int period, int n_actions) {
  if (period < 1 || n_actions < 1) throw InvalidModel("pcyc needs period >= 1 and actions >= 1");
  MatrixXd p = MatrixXd::Zero(static_cast<Eigen::Index>(period) * n_actions, period);
  MatrixXd r(period, n_actions);
  for (int s = 0; s < period; ++s)
    for (int a = 0; a < n_actions; ++a) {
      p(static_cast<Eigen::Index>(s) * n_actions + a, (s + 1) % period) = 1.0;
      r(s, a) = n_actions == 1 ? (s == 0 ? 1.0 : 0.0)
                               : static_cast<double>((s + a) % n_actions) / (n_actions - 1);
    }
  VectorXd rho = VectorXd::Zero(period);
  rho(0) = 1.0;
  return TabularMdp(period, n_actions, p, r, rho);
}

namespace detail {

inline bool unichain_under_sample(const TabularMdp& mdp, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 2.0);
  auto policy = SoftmaxPolicy::tabular(mdp.n_states(), mdp.n_actions());
  try {
    analyze_chain(induced_kernel(mdp, policy));
    for (int i = 0; i < 20; ++i) {
      VectorXd theta(policy.dim());
      for (auto& x : theta) x = gauss(rng);
      analyze_chain(induced_kernel(mdp, policy.with_theta(theta)));
    }
  } catch (const NotUnichain&) {
    return false;
  }
  return true;
}

inline TabularMdp draw_random_unichain(int n, int m, int n_transient, Rng& rng) {
  const int core = n - n_transient;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::gamma_distribution<double> gamma1(1.0, 1.0);

  // Support is fixed per state; actions only redistribute mass on it.
  std::vector<std::vector<int>> support(n);
  std::vector<int> perm(core);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (int i = 0; i < core; ++i) support[perm[i]].push_back(perm[(i + 1) % core]);
  for (int s = 0; s < core; ++s)
    for (int t = 0; t < core; ++t)
      if (unif(rng) < 0.3 &&
          std::find(support[s].begin(), support[s].end(), t) == support[s].end())
        support[s].push_back(t);
  for (int j = 0; j < n_transient; ++j) {
    const int s = core + j;
    std::uniform_int_distribution<int> pick(0, s - 1);
    support[s] = {s, pick(rng)};
  }

  MatrixXd p = MatrixXd::Zero(static_cast<Eigen::Index>(n) * m, n);
  MatrixXd r(n, m);
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < m; ++a) {
      double total = 0.0;
      std::vector<double> w(support[s].size());
      for (auto& x : w) {
        x = gamma1(rng) + 1e-3;
        total += x;
      }
      for (std::size_t k = 0; k < w.size(); ++k)
        p(static_cast<Eigen::Index>(s) * m + a, support[s][k]) = w[k] / total;
      r(s, a) = unif(rng);
    }
  VectorXd rho = VectorXd::Constant(n, 1.0 / n);
  return TabularMdp(n, m, p, r, rho);
}

}  // namespace detail

/// Random unichain MDP: n states, m actions, the last n_transient states
/// transient. The recurrent core is a random strongly connected digraph with
/// Dirichlet rows; each transient state keeps a self-loop and one edge toward
/// the core or an earlier transient state.
inline TabularMdp random_unichain(int n, int m, int n_transient, std::uint64_t seed) {
  if (n < 1 || m < 1 || n_transient < 0 || n_transient >= n)
    throw InvalidModel("random unichain needs n >= 1, m >= 1, 0 <= n_transient < n");
  Rng rng(seed);
  constexpr int kRetryBudget = 10;
  for (int attempt = 0; attempt < kRetryBudget; ++attempt) {
    TabularMdp mdp = detail::draw_random_unichain(n, m, n_transient, rng);
    if (validate(mdp).empty() && detail::unichain_under_sample(mdp, rng)) return mdp;
  }
  throw GenerationFailed("could not draw a unichain MDP within the retry budget");
}

/// Named fixture description, e.g. "cycle2", "pcyc:3,2", "rand:8,3,2,7".
struct EnvSpec {
  enum class Kind { Cycle2, TCycle, Bandit, PCyc, Rand };
  Kind kind = Kind::Cycle2;
  int period = 0;
  int n_actions = 0;
  int n_states = 0;
  int n_transient = 0;
  std::uint64_t seed = 0;

  std::string name() const {
    std::ostringstream os;
    switch (kind) {
      case Kind::Cycle2: return "cycle2";
      case Kind::TCycle: return "tcycle";
      case Kind::Bandit: return "bandit";
      case Kind::PCyc: os << "pcyc:" << period << "," << n_actions; return os.str();
      case Kind::Rand:
        os << "rand:" << n_states << "," << n_actions << "," << n_transient << "," << seed;
        return os.str();
    }
    return "?";
  }

  static EnvSpec parse(const std::string& text) {
    const auto colon = text.find(':');
    const std::string head = text.substr(0, colon);
    std::vector<long long> args;
    if (colon != std::string::npos) {
      std::stringstream ss(text.substr(colon + 1));
      std::string item;
      while (std::getline(ss, item, ',')) {
        try {
          args.push_back(std::stoll(item));
        } catch (const std::exception&) {
          throw FormatError("bad environment parameter '" + item + "' in " + text);
        }
      }
    }
    EnvSpec e;
    auto need = [&](std::size_t k) {
      if (args.size() != k)
        throw FormatError(head + " expects " + std::to_string(k) + " parameters");
    };
    if (head == "cycle2") {
      need(0);
      e.kind = Kind::Cycle2;
    } else if (head == "tcycle") {
      need(0);
      e.kind = Kind::TCycle;
    } else if (head == "bandit") {
      need(0);
      e.kind = Kind::Bandit;
    } else if (head == "pcyc") {
      need(2);
      e.kind = Kind::PCyc;
      e.period = static_cast<int>(args[0]);
      e.n_actions = static_cast<int>(args[1]);
    } else if (head == "rand") {
      need(4);
      e.kind = Kind::Rand;
      e.n_states = static_cast<int>(args[0]);
      e.n_actions = static_cast<int>(args[1]);
      e.n_transient = static_cast<int>(args[2]);
      e.seed = static_cast<std::uint64_t>(args[3]);
    } else {
      throw FormatError("unknown environment '" + head + "'");
    }
    return e;
  }
};

inline TabularMdp build(const EnvSpec& spec) {
  switch (spec.kind) {
    case EnvSpec::Kind::Cycle2: return cycle2();
    case EnvSpec::Kind::TCycle: return tcycle();
    case EnvSpec::Kind::Bandit: return bandit();
    case EnvSpec::Kind::PCyc: return periodic_cycle(spec.period, spec.n_actions);
    case EnvSpec::Kind::Rand:
      return random_unichain(spec.n_states, spec.n_actions, spec.n_transient, spec.seed);
  }
  throw InvalidModel("unknown environment kind");
}

inline TabularMdp build(const std::string& name) { return build(EnvSpec::parse(name)); }

/// Fixtures listed by the `envs` command, with a one-line description each.
inline std::vector<std::pair<std::string, std::string>> catalogue() {
  return {
      {"cycle2", "2-state deterministic cycle, 1 action, r = [1, 0]"},
      {"tcycle", "cycle2 plus transient entry state 0 (-> 1), r(0) = 0"},
      {"bandit", "1 state, 2 actions, r = [0, 1]"},
      {"pcyc:P,A", "P-state cycle, A actions choosing rewards; period P under every policy"},
      {"rand:N,M,T,SEED", "random unichain, N states (last T transient), M actions"},
  };
}

}  // namespace nacb::envs
