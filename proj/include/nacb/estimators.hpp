#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "nacb/critic_features.hpp"
#include "nacb/error.hpp"
#include "nacb/mdp.hpp"
#include "nacb/oracle.hpp"
#include "nacb/policy.hpp"

namespace nacb {

/// xi = [eta, zeta]: average-reward estimate and value weights.
struct CriticState {
  double eta = 0.0;
  VectorXd zeta;

  static CriticState zero(int m) { return {0.0, VectorXd::Zero(m)}; }
  static CriticState from_xi(const VectorXd& xi) { return {xi(0), xi.tail(xi.size() - 1)}; }
  VectorXd xi() const {
    VectorXd out(zeta.size() + 1);
    out << eta, zeta;
    return out;
  }
};

struct NpgState {
  VectorXd omega;
};

enum class NpgSign { descent, literal };

struct CriticSample {
  MatrixXd a_v;
  VectorXd b_v;
};

/// A_v(z) = [[c_beta, 0], [phi(s), phi(s)(phi(s) - phi(s'))^T]], b_v(z) = [c_beta r, r phi(s)].
inline CriticSample critic_sample_op(const CriticFeatures& phi, const Transition& z, double c_beta) {
  const int m = phi.dim();
  CriticSample out{MatrixXd::Zero(m + 1, m + 1), VectorXd::Zero(m + 1)};
  const VectorXd f = phi.row(z.s).transpose();
  out.a_v(0, 0) = c_beta;
  out.a_v.block(1, 0, m, 1) = f;
  out.a_v.bottomRightCorner(m, m) = f * (phi.row(z.s) - phi.row(z.s_next));
  out.b_v(0) = c_beta * z.r;
  out.b_v.tail(m) = z.r * f;
  return out;
}

/// r - eta + zeta . (phi(s') - phi(s)).
inline double advantage_estimate(const CriticState& xi, const CriticFeatures& phi,
                                 const Transition& z) {
  return z.r - xi.eta + (phi.row(z.s_next) - phi.row(z.s)).dot(xi.zeta);
}

struct NpgSample {
  MatrixXd a_u;
  VectorXd b_u;
};

/// A_u(z) = score score^T, b_u(z) = A_hat(z) score.
inline NpgSample npg_sample_op(const SoftmaxPolicy& policy, const CriticFeatures& phi,
                               const CriticState& xi, const Transition& z) {
  const VectorXd sc = policy.score(z.s, z.a);
  return {sc * sc.transpose(), advantage_estimate(xi, phi, z) * sc};
}

/// Draws one contiguous trajectory under whichever policy is passed to next().
///
/// Optional budget (SamplerExhausted beyond it), reward sink and transition log.
class TrajectorySampler {
 public:
  TrajectorySampler(const TabularMdp& mdp, int start_state, Rng& rng)
      : mdp_(&mdp), state_(start_state), rng_(&rng) {
    if (!mdp.valid_state(start_state)) throw InvalidIndex("sampler start state out of range");
  }

  static TrajectorySampler from_initial(const TabularMdp& mdp, Rng& rng) {
    const int s0 = draw_initial_state(mdp, rng);
    return TrajectorySampler(mdp, s0, rng);
  }

  Transition next(const SoftmaxPolicy& policy) {
    if (count_ >= budget_)
      throw SamplerExhausted("sampler budget of " + std::to_string(budget_) +
                             " transitions exhausted");
    const int a = policy.sample_action(state_, *rng_);
    const Transition z = step(*mdp_, state_, a, *rng_);
    state_ = z.s_next;
    ++count_;
    if (rewards_) rewards_->push_back(z.r);
    if (log_) log_->push_back(z);
    return z;
  }

  int state() const { return state_; }
  std::uint64_t count() const { return count_; }
  void set_budget(std::uint64_t budget) { budget_ = budget; }
  void set_reward_sink(std::vector<double>* sink) { rewards_ = sink; }
  void set_log(std::vector<Transition>* log) { log_ = log; }

 private:
  const TabularMdp* mdp_;
  int state_;
  Rng* rng_;
  std::uint64_t count_ = 0;
  std::uint64_t budget_ = std::numeric_limits<std::uint64_t>::max();
  std::vector<double>* rewards_ = nullptr;
  std::vector<Transition>* log_ = nullptr;
};

struct CriticLoopResult {
  CriticState state;
  std::vector<VectorXd> trace;  // xi_0 .. xi_H
};

struct NpgLoopResult {
  NpgState state;
  std::vector<VectorXd> trace;  // omega_0 .. omega_H
};

namespace detail {

inline void check_finite(const VectorXd& v, const char* what, int h) {
  if (!v.allFinite())
    throw NonFiniteIterate(std::string(what) + " iterate became non-finite at inner step " +
                           std::to_string(h + 1));
}

}  // namespace detail

/// H batched TD steps xi <- xi - beta * mean_b (A_v(z_b) xi - b_v(z_b)), B transitions each.
inline CriticLoopResult critic_inner_loop(const SoftmaxPolicy& policy, const CriticFeatures& phi,
                                          TrajectorySampler& sampler, const CriticState& xi0,
                                          int horizon, int batch, double beta, double c_beta,
                                          bool keep_trace = false) {
  const int m = phi.dim();
  if (xi0.zeta.size() != m) throw DimensionMismatch("critic state does not match features");
  CriticLoopResult out{xi0, {}};
  if (keep_trace) out.trace.push_back(xi0.xi());
  VectorXd dir(m + 1);
  for (int h = 0; h < horizon; ++h) {
    dir.setZero();
    auto& st = out.state;
    for (int b = 0; b < batch; ++b) {
      const Transition z = sampler.next(policy);
      const auto fs = phi.row(z.s);
      const double td = st.eta + (fs - phi.row(z.s_next)).dot(st.zeta) - z.r;
      dir(0) += c_beta * (st.eta - z.r);
      dir.tail(m) += td * fs.transpose();
    }
    st.eta -= beta * dir(0) / batch;
    st.zeta -= beta * dir.tail(m) / batch;
    if (!std::isfinite(st.eta)) throw NonFiniteIterate("critic eta became non-finite");
    detail::check_finite(st.zeta, "critic", h);
    if (keep_trace) out.trace.push_back(st.xi());
  }
  return out;
}

/// Noiseless version driven by the expected operators of a critic system.
inline CriticLoopResult critic_inner_loop_exact(const CriticSystem& sys, const CriticState& xi0,
                                                int horizon, double beta, bool keep_trace = true) {
  VectorXd xi = xi0.xi();
  if (xi.size() != sys.a_v.rows()) throw DimensionMismatch("critic state does not match system");
  CriticLoopResult out;
  if (keep_trace) out.trace.push_back(xi);
  for (int h = 0; h < horizon; ++h) {
    xi -= beta * (sys.a_v * xi - sys.b_v);
    detail::check_finite(xi, "critic", h);
    if (keep_trace) out.trace.push_back(xi);
  }
  out.state = CriticState::from_xi(xi);
  return out;
}

/// H batched steps omega <- omega -/+ gamma * mean_b (A_u(z_b) omega - b_u(z_b)).
/// The critic is frozen; descent subtracts, literal adds.
inline NpgLoopResult npg_inner_loop(const SoftmaxPolicy& policy, const CriticFeatures& phi,
                                    TrajectorySampler& sampler, const CriticState& xi,
                                    const NpgState& omega0, int horizon, int batch, double gamma,
                                    NpgSign sign = NpgSign::descent, bool keep_trace = false) {
  const int d = policy.dim();
  if (omega0.omega.size() != d) throw DimensionMismatch("omega does not match policy dimension");
  NpgLoopResult out{omega0, {}};
  if (keep_trace) out.trace.push_back(omega0.omega);
  const double sgn = sign == NpgSign::descent ? -1.0 : 1.0;
  VectorXd dir(d);
  for (int h = 0; h < horizon; ++h) {
    dir.setZero();
    VectorXd& w = out.state.omega;
    for (int b = 0; b < batch; ++b) {
      const Transition z = sampler.next(policy);
      const VectorXd sc = policy.score(z.s, z.a);
      dir += (sc.dot(w) - advantage_estimate(xi, phi, z)) * sc;
    }
    w += sgn * gamma * dir / batch;
    detail::check_finite(w, "NPG", h);
    if (keep_trace) out.trace.push_back(w);
  }
  return out;
}

/// Noiseless version: omega <- omega -/+ gamma (F omega - g) with g the expected b_u.
inline NpgLoopResult npg_inner_loop_exact(const MatrixXd& fisher, const VectorXd& target,
                                          const NpgState& omega0, int horizon, double gamma,
                                          NpgSign sign = NpgSign::descent, bool keep_trace = true) {
  if (fisher.rows() != omega0.omega.size() || target.size() != omega0.omega.size())
    throw DimensionMismatch("NPG system does not match omega");
  const double sgn = sign == NpgSign::descent ? -1.0 : 1.0;
  VectorXd w = omega0.omega;
  NpgLoopResult out;
  if (keep_trace) out.trace.push_back(w);
  for (int h = 0; h < horizon; ++h) {
    w += sgn * gamma * (fisher * w - target);
    detail::check_finite(w, "NPG", h);
    if (keep_trace) out.trace.push_back(w);
  }
  out.state.omega = w;
  return out;
}

}  // namespace nacb
