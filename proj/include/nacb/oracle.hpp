#pragma once

// Exact linear-algebra evaluation of everything the algorithm estimates
// from samples: gain, bias values, gradients, Fisher matrix, NPG direction
// and the expected critic system, for one fixed policy.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "nacb/chain.hpp"
#include "nacb/critic_features.hpp"
#include "nacb/error.hpp"
#include "nacb/linalg.hpp"
#include "nacb/mdp.hpp"
#include "nacb/policy.hpp"

namespace nacb {

/// Gain J, bias values V (normalized so d.V = 0), Q and A = Q - V.
struct ValueBundle {
  double gain = 0.0;
  VectorXd v;
  MatrixXd q;
  MatrixXd adv;
};

inline constexpr double kMaxPoissonCondition = 1e12;

inline ValueBundle value_bundle(const TabularMdp& mdp, const ActionTable& pi,
                                const ChainAnalysis& analysis) {
  const int S = mdp.n_states();
  const int A = mdp.n_actions();
  if (analysis.n_states() != S) throw DimensionMismatch("analysis does not match the MDP");
  const MatrixXd p = induced_kernel(mdp, pi).matrix();
  const VectorXd& d = analysis.stationary_dist;
  const VectorXd r_pi = policy_reward(mdp, pi);

  ValueBundle out;
  out.gain = d.dot(r_pi);
  const MatrixXd fundamental =
      MatrixXd::Identity(S, S) - p + VectorXd::Ones(S) * d.transpose();
  if (linalg::condition_number(fundamental) > kMaxPoissonCondition)
    throw SingularSystem("Poisson system is numerically singular");
  out.v = fundamental.fullPivLu().solve(r_pi - out.gain * VectorXd::Ones(S));
  out.v.array() -= d.dot(out.v);

  out.q.resize(S, A);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a)
      out.q(s, a) = mdp.reward(s, a) - out.gain + mdp.next_state_dist(s, a).dot(out.v);
  out.adv = out.q.colwise() - out.v;
  return out;
}

inline ValueBundle value_bundle(const TabularMdp& mdp, const SoftmaxPolicy& policy,
                                const ChainAnalysis& analysis) {
  return value_bundle(mdp, policy.table(), analysis);
}

/// Gain only; cheaper than a full bundle.
inline double gain(const TabularMdp& mdp, const ActionTable& pi, const ChainAnalysis& analysis) {
  return analysis.stationary_dist.dot(policy_reward(mdp, pi));
}

/// Double Cesaro average (1/N) sum_{T=1}^N sum_{t=0}^T (P^t r - J) of the
/// reward deviation, evaluated along the exact expectation recursion.
inline VectorXd cesaro_value(const StochasticMatrix& kernel, const VectorXd& r_pi, double gain,
                             int n_terms) {
  const MatrixXd& p = kernel.matrix();
  VectorXd w = r_pi;
  VectorXd partial = (w.array() - gain).matrix();
  VectorXd acc = VectorXd::Zero(r_pi.size());
  for (int t = 1; t <= n_terms; ++t) {
    w = p * w;
    partial.array() += w.array() - gain;
    acc += partial;
  }
  return acc / static_cast<double>(n_terms);
}

/// Cesaro estimate of V with its 1/N term cancelled: 2 A(2N) - A(N) with N a
/// multiple of the period and 2N <= max_terms. Periodic components vanish
/// exactly at multiples of the period, so only geometrically small terms remain.
inline VectorXd cesaro_value_extrapolated(const StochasticMatrix& kernel, const VectorXd& r_pi,
                                          double gain, int period, int max_terms = 10000) {
  const int n = std::max(period, (max_terms / 2 / period) * period);
  return 2.0 * cesaro_value(kernel, r_pi, gain, 2 * n) - cesaro_value(kernel, r_pi, gain, n);
}

/// grad J = sum_{s,a} d(s) pi(a|s) A(s,a) grad log pi(a|s).
inline VectorXd exact_policy_gradient(const TabularMdp& mdp, const SoftmaxPolicy& policy,
                                      const ValueBundle& bundle, const ChainAnalysis& analysis) {
  VectorXd g = VectorXd::Zero(policy.dim());
  const VectorXd& d = analysis.stationary_dist;
  for (int s = 0; s < mdp.n_states(); ++s) {
    if (d(s) == 0.0) continue;
    for (int a = 0; a < mdp.n_actions(); ++a)
      g += d(s) * policy.prob(s, a) * bundle.adv(s, a) * policy.score(s, a);
  }
  return g;
}

/// Same gradient weighted by Q instead of A.
inline VectorXd exact_policy_gradient_q_form(const TabularMdp& mdp, const SoftmaxPolicy& policy,
                                             const ValueBundle& bundle,
                                             const ChainAnalysis& analysis) {
  VectorXd g = VectorXd::Zero(policy.dim());
  const VectorXd& d = analysis.stationary_dist;
  for (int s = 0; s < mdp.n_states(); ++s)
    for (int a = 0; a < mdp.n_actions(); ++a)
      g += d(s) * policy.prob(s, a) * bundle.q(s, a) * policy.score(s, a);
  return g;
}

/// F = sum_{s,a} d(s) pi(a|s) score score^T.
inline MatrixXd fisher_matrix(const SoftmaxPolicy& policy, const ChainAnalysis& analysis) {
  MatrixXd f = MatrixXd::Zero(policy.dim(), policy.dim());
  const VectorXd& d = analysis.stationary_dist;
  for (int s = 0; s < policy.n_states(); ++s) {
    if (d(s) == 0.0) continue;
    for (int a = 0; a < policy.n_actions(); ++a) {
      const VectorXd sc = policy.score(s, a);
      f.noalias() += d(s) * policy.prob(s, a) * sc * sc.transpose();
    }
  }
  return 0.5 * (f + f.transpose());
}

/// omega* = F^+ grad J.
inline VectorXd exact_npg(const VectorXd& policy_gradient, const MatrixXd& fisher) {
  if (fisher.rows() != policy_gradient.size())
    throw DimensionMismatch("Fisher matrix and gradient disagree in dimension");
  return linalg::pinv(fisher) * policy_gradient;
}

/// Expected critic system for a fixed policy.
struct CriticSystem {
  MatrixXd a_v;           // E[A_v(theta, z)]
  VectorXd b_v;           // E[b_v(theta, z)]
  VectorXd xi_star;       // A_v^+ b_v
  MatrixXd m_theta;       // E[phi(s)(phi(s) - phi(s'))^T]
  MatrixXd kernel_basis;  // orthonormal basis of Ker(M_theta)
  MatrixXd projector;     // orthogonal projector onto Ker(A_v)^perp
};

inline CriticSystem critic_system(const TabularMdp& mdp, const ActionTable& pi,
                                  const ChainAnalysis& analysis, const CriticFeatures& phi,
                                  double c_beta) {
  if (phi.n_states() != mdp.n_states())
    throw DimensionMismatch("critic features do not cover the state space");
  const int S = mdp.n_states();
  const int m = phi.dim();
  const MatrixXd p = induced_kernel(mdp, pi).matrix();
  const VectorXd& d = analysis.stationary_dist;
  const MatrixXd& f = phi.matrix();
  const MatrixXd dmat = d.asDiagonal();

  CriticSystem out;
  out.m_theta = f.transpose() * dmat * (MatrixXd::Identity(S, S) - p) * f;
  out.a_v = MatrixXd::Zero(m + 1, m + 1);
  out.a_v(0, 0) = c_beta;
  out.a_v.block(1, 0, m, 1) = f.transpose() * d;
  out.a_v.bottomRightCorner(m, m) = out.m_theta;
  const VectorXd r_pi = policy_reward(mdp, pi);
  out.b_v.resize(m + 1);
  out.b_v(0) = c_beta * d.dot(r_pi);
  out.b_v.tail(m) = f.transpose() * (d.cwiseProduct(r_pi));
  out.xi_star = linalg::pinv(out.a_v) * out.b_v;
  out.kernel_basis = linalg::null_space(out.m_theta);
  out.projector = linalg::kernel_complement_projector(out.a_v);
  return out;
}

inline CriticSystem critic_system(const TabularMdp& mdp, const SoftmaxPolicy& policy,
                                  const ChainAnalysis& analysis, const CriticFeatures& phi,
                                  double c_beta) {
  return critic_system(mdp, policy.table(), analysis, phi, c_beta);
}

/// Orthonormal basis of {z : phi(s).z takes one value on the recurrent class}.
inline MatrixXd constant_on_recurrent_basis(const CriticFeatures& phi,
                                            const ChainAnalysis& analysis) {
  const auto& R = analysis.recurrent_class;
  const int m = phi.dim();
  if (R.size() < 2) return MatrixXd::Identity(m, m);
  MatrixXd diffs(R.size() - 1, m);
  for (std::size_t i = 1; i < R.size(); ++i) diffs.row(i - 1) = phi.row(R[i]) - phi.row(R[0]);
  return linalg::null_space(diffs);
}

/// Smallest eigenvalue of sym(M_theta) on Ker(M_theta)^perp; +inf when M_theta = 0.
inline double critic_curvature(const MatrixXd& m_theta) {
  return linalg::restricted_min_eigenvalue(m_theta, linalg::row_space(m_theta));
}

/// Expected NPG target E[(r - eta + zeta.(phi(s') - phi(s))) score(s,a)] for a fixed critic.
inline VectorXd expected_npg_target(const TabularMdp& mdp, const SoftmaxPolicy& policy,
                                    const ChainAnalysis& analysis, const CriticFeatures& phi,
                                    const VectorXd& xi) {
  const double eta = xi(0);
  const VectorXd zeta = xi.tail(phi.dim());
  const VectorXd values = phi.matrix() * zeta;
  VectorXd g = VectorXd::Zero(policy.dim());
  const VectorXd& d = analysis.stationary_dist;
  for (int s = 0; s < mdp.n_states(); ++s) {
    if (d(s) == 0.0) continue;
    for (int a = 0; a < mdp.n_actions(); ++a) {
      const double adv =
          mdp.reward(s, a) - eta + mdp.next_state_dist(s, a).dot(values) - values(s);
      g += d(s) * policy.prob(s, a) * adv * policy.score(s, a);
    }
  }
  return g;
}

/// Diagnostic constants over a finite sample of policies.
struct AssumptionConstants {
  double lambda = std::numeric_limits<double>::infinity();
  double mu = std::numeric_limits<double>::infinity();
  double g1 = 0.0;
  double g2 = 0.0;
  double c_hit_max = 0.0;  // lower estimates of the sup over all policies
  double c_tar_max = 0.0;
  bool fisher_full_rank = true;
  std::vector<std::string> warnings;
};

/// lambda and mu are minima over the sample; mu is the smallest eigenvalue of F
/// on range(F). G2 comes from random finite differences of the score.
inline AssumptionConstants assumption_constants(const TabularMdp& mdp,
                                                const std::vector<SoftmaxPolicy>& sample,
                                                const CriticFeatures& phi,
                                                std::uint64_t seed = 17) {
  AssumptionConstants out;
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  bool saw_zero_fisher = false;
  bool saw_zero_m = false;
  for (const auto& policy : sample) {
    const auto analysis = analyze_chain(induced_kernel(mdp, policy));
    out.c_hit_max = std::max(out.c_hit_max, analysis.c_hit);
    out.c_tar_max = std::max(out.c_tar_max, analysis.c_tar);

    const auto sys = critic_system(mdp, policy, analysis, phi, 1.0);
    const double lam = critic_curvature(sys.m_theta);
    if (std::isinf(lam)) saw_zero_m = true;
    out.lambda = std::min(out.lambda, lam);

    const MatrixXd f = fisher_matrix(policy, analysis);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(f, Eigen::EigenvaluesOnly);
    const VectorXd ev = es.eigenvalues();
    const double top = ev.size() ? ev(ev.size() - 1) : 0.0;
    if (top <= 0.0) {
      saw_zero_fisher = true;
    } else {
      for (Eigen::Index i = 0; i < ev.size(); ++i)
        if (ev(i) > kPinvCutoff * top) {
          if (i > 0) out.fisher_full_rank = false;
          out.mu = std::min(out.mu, ev(i));
          break;
        }
    }

    VectorXd dir(policy.dim());
    for (auto& x : dir) x = gauss(rng);
    dir /= dir.norm();
    constexpr double kStep = 1e-3;
    const SoftmaxPolicy moved = policy.update(dir, kStep);
    for (int s = 0; s < mdp.n_states(); ++s)
      for (int a = 0; a < mdp.n_actions(); ++a) {
        out.g1 = std::max(out.g1, policy.score(s, a).norm());
        out.g2 = std::max(out.g2, (policy.score(s, a) - moved.score(s, a)).norm() / kStep);
      }
  }
  if (saw_zero_fisher) {
    out.mu = 0.0;
    out.fisher_full_rank = false;
    out.warnings.push_back("Fisher matrix is zero for some sampled policy; mu reported as 0");
  }
  if (!out.fisher_full_rank && !saw_zero_fisher)
    out.warnings.push_back(
        "Fisher matrix is rank deficient; mu is the smallest eigenvalue on range(F), "
        "F - mu I is not positive semidefinite");
  if (saw_zero_m)
    out.warnings.push_back("M_theta vanishes for some sampled policy; lambda is undefined there");
  return out;
}

/// Maximum gain over deterministic stationary policies, found by enumeration.
struct OptimalGain {
  double j_star = -std::numeric_limits<double>::infinity();
  std::vector<int> policy;
};

inline OptimalGain optimal_gain(const TabularMdp& mdp, double cap = 1e6) {
  const int S = mdp.n_states();
  const int A = mdp.n_actions();
  if (S * std::log(static_cast<double>(A)) > std::log(cap) + 1e-9)
    throw EnumerationCapExceeded("A^S deterministic policies exceed the enumeration cap");
  std::vector<int> actions(S, 0);
  OptimalGain best;
  while (true) {
    const ActionTable table = deterministic_table(A, actions);
    const auto analysis = analyze_chain(induced_kernel(mdp, table));
    const double j = gain(mdp, table, analysis);
    if (j > best.j_star) {
      best.j_star = j;
      best.policy = actions;
    }
    int pos = 0;
    while (pos < S && ++actions[pos] == A) actions[pos++] = 0;
    if (pos == S) break;
  }
  return best;
}

}  // namespace nacb
