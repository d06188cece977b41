#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "nacb/error.hpp"
#include "nacb/linalg.hpp"

namespace nacb {

/// Random stream used everywhere a run draws samples. Each run owns one.
using Rng = std::mt19937_64;

/// Per-state action distributions, one row per state.
using ActionTable = MatrixXd;

inline constexpr double kProbTolerance = 1e-12;
inline constexpr double kRenormalizeTolerance = 1e-9;

/// One observed transition (s, a, r, s').
struct Transition {
  int s = 0;
  int a = 0;
  double r = 0.0;
  int s_next = 0;

  friend bool operator==(const Transition&, const Transition&) = default;
};

/// Finite MDP with deterministic rewards r(s,a) in [0,1].
///
/// Transition probabilities are stored as an (S*A) x S matrix whose row
/// s*A + a is P(. | s, a). Construction does not validate; call validate()
/// or go through the file loader, which does.
class TabularMdp {
 public:
  TabularMdp() = default;

  TabularMdp(int n_states, int n_actions, MatrixXd transitions, MatrixXd rewards,
             VectorXd initial_dist)
      : n_states_(n_states),
        n_actions_(n_actions),
        transitions_(std::move(transitions)),
        rewards_(std::move(rewards)),
        initial_(std::move(initial_dist)) {
    if (n_states <= 0 || n_actions <= 0)
      throw InvalidModel("n_states and n_actions must be positive");
    if (transitions_.rows() != static_cast<Eigen::Index>(n_states) * n_actions ||
        transitions_.cols() != n_states)
      throw DimensionMismatch("transition matrix must be (S*A) x S");
    if (rewards_.rows() != n_states || rewards_.cols() != n_actions)
      throw DimensionMismatch("reward table must be S x A");
    if (initial_.size() != n_states)
      throw DimensionMismatch("initial distribution must have length S");
  }

  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }

  double transition(int s, int a, int s_next) const {
    return transitions_(row_index(s, a), s_next);
  }
  auto next_state_dist(int s, int a) const { return transitions_.row(row_index(s, a)); }
  double reward(int s, int a) const { return rewards_(s, a); }

  const MatrixXd& transitions() const { return transitions_; }
  const MatrixXd& rewards() const { return rewards_; }
  const VectorXd& initial_dist() const { return initial_; }

  Eigen::Index row_index(int s, int a) const {
    return static_cast<Eigen::Index>(s) * n_actions_ + a;
  }

  bool valid_state(int s) const { return s >= 0 && s < n_states_; }
  bool valid_action(int a) const { return a >= 0 && a < n_actions_; }

 private:
  int n_states_ = 0;
  int n_actions_ = 0;
  MatrixXd transitions_;
  MatrixXd rewards_;
  VectorXd initial_;
};

/// Row-stochastic matrix over a finite state space.
class StochasticMatrix {
 public:
  StochasticMatrix() = default;
  explicit StochasticMatrix(MatrixXd p) : p_(std::move(p)) {
    if (p_.rows() != p_.cols()) throw DimensionMismatch("kernel must be square");
    for (Eigen::Index i = 0; i < p_.rows(); ++i) {
      if ((p_.row(i).array() < 0.0).any())
        throw InvalidModel("kernel row " + std::to_string(i) + " has a negative entry");
      const double sum = p_.row(i).sum();
      if (std::abs(sum - 1.0) > kProbTolerance)
        throw InvalidModel("kernel row " + std::to_string(i) + " sums to " +
                           std::to_string(sum));
    }
  }

  int size() const { return static_cast<int>(p_.rows()); }
  double operator()(int i, int j) const { return p_(i, j); }
  const MatrixXd& matrix() const { return p_; }

 private:
  MatrixXd p_;
};

namespace detail {
inline std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}
}  // namespace detail

/// Lists every violated model invariant; an empty result means valid.
inline std::vector<std::string> validate(const TabularMdp& mdp) {
  std::vector<std::string> out;
  const int S = mdp.n_states();
  const int A = mdp.n_actions();
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      const auto row = mdp.next_state_dist(s, a);
      const std::string where = "(" + std::to_string(s) + "," + std::to_string(a) + ")";
      if ((row.array() < 0.0).any() || (row.array() > 1.0).any())
        out.push_back("row " + where + " has an entry outside [0,1]");
      const double sum = row.sum();
      if (!std::isfinite(sum) || std::abs(sum - 1.0) > kProbTolerance)
        out.push_back("row " + where + " sums to " + detail::fmt_double(sum));
      const double r = mdp.reward(s, a);
      if (!(r >= 0.0 && r <= 1.0))
        out.push_back("reward out of [0,1] at " + where + ": " + detail::fmt_double(r));
    }
  }
  const VectorXd& rho = mdp.initial_dist();
  if ((rho.array() < 0.0).any()) out.push_back("initial_dist has a negative entry");
  if (std::abs(rho.sum() - 1.0) > kProbTolerance)
    out.push_back("initial_dist sums to " + detail::fmt_double(rho.sum()));
  return out;
}

/// Rescales probability rows that miss unit mass by at most `tol`.
/// Returns the repaired model and one warning per touched row.
inline std::pair<TabularMdp, std::vector<std::string>> renormalized(
    const TabularMdp& mdp, double tol = kRenormalizeTolerance) {
  std::vector<std::string> warnings;
  MatrixXd p = mdp.transitions();
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double sum = p.row(i).sum();
    const double gap = std::abs(sum - 1.0);
    if (gap > kProbTolerance && gap <= tol && sum > 0.0) {
      p.row(i) /= sum;
      warnings.push_back("renormalized row (" + std::to_string(i / mdp.n_actions()) + "," +
                         std::to_string(i % mdp.n_actions()) + ") from sum " +
                         detail::fmt_double(sum));
    }
  }
  VectorXd rho = mdp.initial_dist();
  const double gap = std::abs(rho.sum() - 1.0);
  if (gap > kProbTolerance && gap <= tol && rho.sum() > 0.0) {
    warnings.push_back("renormalized initial_dist from sum " + detail::fmt_double(rho.sum()));
    rho /= rho.sum();
  }
  return {TabularMdp(mdp.n_states(), mdp.n_actions(), std::move(p), mdp.rewards(),
                     std::move(rho)),
          std::move(warnings)};
}

/// Draws an index from a probability vector by inverse CDF.
template <class Probs>
int sample_index(const Probs& probs, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double acc = 0.0;
  const int n = static_cast<int>(probs.size());
  int last_positive = 0;
  for (int i = 0; i < n; ++i) {
    if (probs(i) <= 0.0) continue;
    acc += probs(i);
    last_positive = i;
    if (u < acc) return i;
  }
  return last_positive;
}

inline int draw_initial_state(const TabularMdp& mdp, Rng& rng) {
  return sample_index(mdp.initial_dist(), rng);
}

/// One environment step from (s, a).
inline Transition step(const TabularMdp& mdp, int s, int a, Rng& rng) {
  if (!mdp.valid_state(s)) throw InvalidIndex("state " + std::to_string(s) + " out of range");
  if (!mdp.valid_action(a)) throw InvalidIndex("action " + std::to_string(a) + " out of range");
  const int next = sample_index(mdp.next_state_dist(s, a), rng);
  return Transition{s, a, mdp.reward(s, a), next};
}

/// P^pi(s, s') = sum_a pi(a|s) P(s'|s,a).
inline StochasticMatrix induced_kernel(const TabularMdp& mdp, const ActionTable& pi) {
  if (pi.rows() != mdp.n_states() || pi.cols() != mdp.n_actions())
    throw DimensionMismatch("policy table does not match the MDP dimensions");
  const int S = mdp.n_states();
  MatrixXd k = MatrixXd::Zero(S, S);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < mdp.n_actions(); ++a)
      if (pi(s, a) != 0.0) k.row(s) += pi(s, a) * mdp.next_state_dist(s, a);
  return StochasticMatrix(std::move(k));
}

/// r^pi(s) = sum_a pi(a|s) r(s,a).
inline VectorXd policy_reward(const TabularMdp& mdp, const ActionTable& pi) {
  return (pi.cwiseProduct(mdp.rewards())).rowwise().sum();
}

/// Action table of a deterministic policy given one action per state.
inline ActionTable deterministic_table(int n_actions, const std::vector<int>& actions) {
  ActionTable t = ActionTable::Zero(static_cast<Eigen::Index>(actions.size()), n_actions);
  for (std::size_t s = 0; s < actions.size(); ++s) t(static_cast<Eigen::Index>(s), actions[s]) = 1.0;
  return t;
}

}  // namespace nacb
