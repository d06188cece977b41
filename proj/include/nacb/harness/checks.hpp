#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "nacb/algorithm.hpp"
#include "nacb/chain.hpp"
#include "nacb/critic_features.hpp"
#include "nacb/envs.hpp"
#include "nacb/estimators.hpp"
#include "nacb/linrec.hpp"
#include "nacb/oracle.hpp"

namespace nacb::harness {

using nlohmann::json;

enum class Status { pass, fail, skip };

inline const char* status_name(Status s) {
  switch (s) {
    case Status::pass: return "pass";
    case Status::fail: return "fail";
    default: return "skip";
  }
}

struct CheckResult {
  std::string id;
  std::string reference;
  Status status = Status::skip;
  json measured = json::object();
  std::string tolerance;
  double runtime_s = 0.0;
  std::string message;
};

enum class Level { fast, full };

struct NamedEnv {
  std::string name;
  TabularMdp mdp;
};

/// Inputs shared by all checks. Trial counts depend on the level.
struct CheckContext {
  std::vector<NamedEnv> envs;
  Level level = Level::fast;
  std::uint64_t seed = 2024;
  std::optional<double> c_beta_override;

  bool full() const { return level == Level::full; }
  int pick(int fast, int full_count) const { return full() ? full_count : fast; }
  int policies_per_env() const { return pick(2, 6); }
};

// Per-environment policy sample: theta = 0 followed by N(0, 1) draws.
inline std::vector<SoftmaxPolicy> policy_sample(const TabularMdp& mdp, int count, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<SoftmaxPolicy> out;
  out.push_back(SoftmaxPolicy::tabular(mdp.n_states(), mdp.n_actions()));
  for (int i = 1; i < count; ++i) {
    VectorXd theta(mdp.n_states() * mdp.n_actions());
    for (auto& x : theta) x = g(rng);
    out.push_back(SoftmaxPolicy::tabular(mdp.n_states(), mdp.n_actions(), theta));
  }
  return out;
}

inline std::uint64_t env_seed(const CheckContext& ctx, std::size_t env_index, std::uint64_t salt) {
  return ctx.seed * 1000003ull + env_index * 7919ull + salt;
}

inline bool is_fixture(const std::string& name) { return name.rfind("rand", 0) != 0; }

/// Coupling constant lambda + sqrt(1/lambda^2 - 1) with lambda capped at 1.
inline double coupling_c_beta(double lambda) {
  return lambda + std::sqrt(1.0 / (lambda * lambda) - 1.0);
}

inline double capped_lambda(const MatrixXd& m_theta) {
  return std::min(1.0, critic_curvature(m_theta));
}

inline int worst_start_state(const ChainAnalysis& a) {
  if (a.transient_states.empty()) return a.recurrent_class.front();
  int best = a.transient_states.front();
  for (int s : a.transient_states)
    if (a.hit_times(s) > a.hit_times(best)) best = s;
  return best;
}

// ---------------------------------------------------------------------------

inline CheckResult check_pg_theorem(const CheckContext& ctx) {
  CheckResult r;
  r.tolerance = "relative error <= 1e-5 (central differences, h = 1e-5); A-form vs Q-form <= 1e-12";
  const int wanted = ctx.pick(15, 50);
  const int per_env = ctx.pick(3, 10);
  double worst_rel = 0.0, worst_form = 0.0;
  int pairs = 0;
  for (std::size_t e = 0; e < ctx.envs.size() && pairs < wanted; ++e) {
    const auto& mdp = ctx.envs[e].mdp;
    if (mdp.n_actions() < 2) continue;
    for (const auto& pol : policy_sample(mdp, per_env, env_seed(ctx, e, 1))) {
      if (pairs == wanted) break;
      const auto an = analyze_chain(induced_kernel(mdp, pol));
      const auto vb = value_bundle(mdp, pol, an);
      const VectorXd g = exact_policy_gradient(mdp, pol, vb, an);
      const VectorXd gq = exact_policy_gradient_q_form(mdp, pol, vb, an);
      constexpr double h = 1e-5;
      VectorXd fd(pol.dim());
      for (int i = 0; i < pol.dim(); ++i) {
        VectorXd step = VectorXd::Zero(pol.dim());
        step(i) = h;
        auto gain_at = [&](const VectorXd& th) {
          const auto p2 = pol.with_theta(th);
          return gain(mdp, p2.table(), analyze_chain(induced_kernel(mdp, p2)));
        };
        fd(i) = (gain_at(pol.theta() + step) - gain_at(pol.theta() - step)) / (2 * h);
      }
      const double scale = std::max(g.norm(), 1e-8);
      worst_rel = std::max(worst_rel, (g - fd).norm() / scale);
      worst_form = std::max(worst_form, (g - gq).norm() / std::max(1.0, g.norm()));
      ++pairs;
    }
  }
  r.measured = {{"pairs", pairs}, {"max_relative_error", worst_rel}, {"max_form_difference", worst_form}};
  if (pairs == 0) {
    r.status = Status::skip;
    r.message = "no environment with two or more actions";
    return r;
  }
  r.status = worst_rel <= 1e-5 && worst_form <= 1e-12 ? Status::pass : Status::fail;
  return r;
}

inline CheckResult check_cesaro(const CheckContext& ctx) {
  CheckResult r;
  r.tolerance = "TV(t) <= (c_hit + c_tar)/t + 1e-9; recurrent starts <= c_tar/t + 1e-9; "
                "2-cycle odd t equals 1/(2t) within 1e-12";
  const int t_max = ctx.pick(2000, 10000);
  double worst = -1e300, worst_rec = -1e300, cycle_err = 0.0;
  int curves = 0, violations = 0;
  for (std::size_t e = 0; e < ctx.envs.size(); ++e) {
    const auto& mdp = ctx.envs[e].mdp;
    for (const auto& pol : policy_sample(mdp, ctx.pick(2, 5), env_seed(ctx, e, 2))) {
      const auto kernel = induced_kernel(mdp, pol);
      const auto an = analyze_chain(kernel);
      const double c = an.c_hit + an.c_tar;
      for (int s0 = 0; s0 < mdp.n_states(); ++s0) {
        const auto tv = cesaro_tv_curve(kernel, s0, t_max, an.stationary_dist);
        ++curves;
        const bool rec = an.is_recurrent(s0);
        for (int t = 1; t <= t_max; ++t) {
          const double x = tv[t - 1];
          worst = std::max(worst, x - c / t);
          if (x > c / t + 1e-9) ++violations;
          if (rec) {
            worst_rec = std::max(worst_rec, x - an.c_tar / t);
            if (x > an.c_tar / t + 1e-9) ++violations;
          }
        }
      }
      if (ctx.envs[e].name == "cycle2") {
        const auto tv = cesaro_tv_curve(kernel, 0, t_max, an.stationary_dist);
        for (int t = 1; t <= t_max; t += 2) cycle_err = std::max(cycle_err, std::abs(tv[t - 1] - 0.5 / t));
      }
    }
  }
  r.measured = {{"curves", curves},
                {"t_max", t_max},
                {"max_excess_over_bound", worst},
                {"max_excess_over_recurrent_bound", worst_rec},
                {"violations", violations},
                {"cycle2_odd_error", cycle_err}};
  r.status = violations == 0 && cycle_err <= 1e-12 ? Status::pass : Status::fail;
  return r;
}

inline CheckResult check_value_bounds(const CheckContext& ctx) {
  CheckResult r;
  r.tolerance = "max|V| <= 2C, max|Q| <= 1 + 2C, max|A| <= 1 + 4C (C = c_hit + c_tar) with 1e-9 "
                "slack; Bellman residual and normalization <= 1e-10; Cesaro value within 1e-6";
  double worst_v = -1e300, worst_q = -1e300, worst_a = -1e300;
  double bellman = 0.0, norm = 0.0, cesaro = 0.0;
  int bundles = 0;
  for (std::size_t e = 0; e < ctx.envs.size(); ++e) {
    const auto& mdp = ctx.envs[e].mdp;
    for (const auto& pol : policy_sample(mdp, ctx.policies_per_env(), env_seed(ctx, e, 3))) {
      const auto kernel = induced_kernel(mdp, pol);
      const auto an = analyze_chain(kernel);
      const auto vb = value_bundle(mdp, pol, an);
      const double c = an.c_hit + an.c_tar;
      worst_v = std::max(worst_v, vb.v.cwiseAbs().maxCoeff() - 2 * c);
      worst_q = std::max(worst_q, vb.q.cwiseAbs().maxCoeff() - (1 + 2 * c));
      worst_a = std::max(worst_a, vb.adv.cwiseAbs().maxCoeff() - (1 + 4 * c));
      norm = std::max(norm, std::abs(an.stationary_dist.dot(vb.v)));
      for (int s = 0; s < mdp.n_states(); ++s)
        for (int a = 0; a < mdp.n_actions(); ++a)
          bellman = std::max(bellman, std::abs(vb.q(s, a) - (mdp.reward(s, a) - vb.gain +
                                                             mdp.next_state_dist(s, a).dot(vb.v))));
      const VectorXd ces = cesaro_value_extrapolated(kernel, policy_reward(mdp, pol.table()),
                                                     vb.gain, an.period);
      cesaro = std::max(cesaro, (ces - vb.v).cwiseAbs().maxCoeff());
      ++bundles;
    }
  }
  r.measured = {{"bundles", bundles},
                {"max_v_excess", worst_v},
                {"max_q_excess", worst_q},
                {"max_adv_excess", worst_a},
                {"max_bellman_residual", bellman},
                {"max_normalization", norm},
                {"max_cesaro_difference", cesaro}};
  const bool ok = worst_v <= 1e-9 && worst_q <= 1e-9 && worst_a <= 1e-9 && bellman <= 1e-10 &&
                  norm <= 1e-10 && cesaro <= 1e-6;
  r.status = bundles == 0 ? Status::skip : ok ? Status::pass : Status::fail;
  return r;
}

inline CheckResult check_hitting_probability(const CheckContext& ctx) {
  CheckResult r;
  r.tolerance = "P(T <= B) >= 1 - 2^-floor(B / 2 c_hit) - 3 sigma, B in {1,2,4,8} * ceil(c_hit)";
  const int trials = ctx.pick(2000, 10000);
  int cases = 0, violations = 0;
  double min_margin = 1e300;
  json rows = json::array();
  for (std::size_t e = 0; e < ctx.envs.size(); ++e) {
    const auto& mdp = ctx.envs[e].mdp;
    int pol_index = 0;
    for (const auto& pol : policy_sample(mdp, 2, env_seed(ctx, e, 4))) {
      const auto an = analyze_chain(induced_kernel(mdp, pol));
      if (an.transient_states.empty()) continue;
      const int s0 = worst_start_state(an);
      const int base = static_cast<int>(std::ceil(an.c_hit));
      Rng rng(env_seed(ctx, e, 40 + pol_index));
      std::vector<int> hit(trials);
      const int cap = 8 * base;
      for (int i = 0; i < trials; ++i) {
        int s = s0, t = 0;
        while (!an.is_recurrent(s) && t <= cap) {
          s = step(mdp, s, pol.sample_action(s, rng), rng).s_next;
          ++t;
        }
        hit[i] = an.is_recurrent(s) ? t : cap + 1;
      }
      for (int mult : {1, 2, 4, 8}) {
        const int b = mult * base;
        const double freq = static_cast<double>(std::count_if(hit.begin(), hit.end(),
                                                              [&](int t) { return t <= b; })) /
                            trials;
        const double bound = 1.0 - std::pow(2.0, -std::floor(b / (2.0 * an.c_hit)));
        const double sigma = std::sqrt(std::max(bound * (1 - bound), 0.0) / trials);
        const double margin = freq - (bound - 3 * sigma);
        min_margin = std::min(min_margin, margin);
        if (margin < 0) ++violations;
        ++cases;
        rows.push_back({{"env", ctx.envs[e].name}, {"policy", pol_index}, {"B", b},
                        {"frequency", freq}, {"bound", bound}});
      }
      ++pol_index;
    }
  }
  r.measured = {{"cases", cases}, {"trials", trials}, {"min_margin", min_margin},
                {"violations", violations}, {"rows", rows}};
  if (cases == 0) {
    r.status = Status::skip;
    r.message = "no environment with transient states";
    return r;
  }
  r.status = violations == 0 ? Status::pass : Status::fail;
  return r;
}

/// Exact E[(1/B) sum_{i=1}^B f(s_i)] from a point mass at s0.
inline VectorXd exact_batch_mean(const MatrixXd& p, const MatrixXd& f, int s0, int batch) {
  Eigen::RowVectorXd mu = Eigen::RowVectorXd::Zero(p.rows());
  mu(s0) = 1.0;
  VectorXd acc = VectorXd::Zero(f.cols());
  for (int i = 1; i <= batch; ++i) {
    mu = mu * p;
    acc += (mu * f).transpose();
  }
  return acc / batch;
}

inline CheckResult check_bias_variance(const CheckContext& ctx) {
  CheckResult r;
  r.tolerance = "bias(2B) <= 0.7 bias(B) + 3 se + 1e-12; bias(B) <= sqrt(d) C_f C / B + 3 se + 1e-12; "
                "E|avg - mu|^2 <= 1.5 (C_f^2 + 2 sqrt(d) C_f^2 C) / B";
  const int trials = ctx.pick(2000, 10000);
  constexpr int kDim = 3;
  int cases = 0, violations = 0;
  double worst_ratio_excess = -1e300, worst_var_ratio = 0.0, worst_bias_excess = -1e300;
  json rows = json::array();
  for (std::size_t e = 0; e < ctx.envs.size(); ++e) {
    const auto& mdp = ctx.envs[e].mdp;
    if (mdp.n_states() < 2) continue;
    const auto pol = policy_sample(mdp, 2, env_seed(ctx, e, 5)).back();
    const auto kernel = induced_kernel(mdp, pol);
    const auto an = analyze_chain(kernel);
    Rng rng(env_seed(ctx, e, 50));
    std::normal_distribution<double> g(0.0, 1.0);
    MatrixXd f(mdp.n_states(), kDim);
    for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = g(rng);
    f /= f.rowwise().norm().maxCoeff();
    const double c_f = f.rowwise().norm().maxCoeff();
    const VectorXd mu = f.transpose() * an.stationary_dist;
    const double c = an.c_hit + an.c_tar;
    const int s0 = worst_start_state(an);

    auto measure = [&](int batch) {
      VectorXd mean = VectorXd::Zero(kDim);
      double mse = 0.0;
      for (int t = 0; t < trials; ++t) {
        int s = s0;
        VectorXd acc = VectorXd::Zero(kDim);
        for (int i = 0; i < batch; ++i) {
          s = step(mdp, s, pol.sample_action(s, rng), rng).s_next;
          acc += f.row(s).transpose();
        }
        acc /= batch;
        mean += acc;
        mse += (acc - mu).squaredNorm();
      }
      mean /= trials;
      mse /= trials;
      return std::pair<double, double>{(mean - mu).norm(), mse};
    };
    for (int base : {8, 16}) {
      const int b = base * an.period;
      const auto [bias1, mse1] = measure(b);
      const auto [bias2, mse2] = measure(2 * b);
      const double se1 = std::sqrt(mse1 / trials), se2 = std::sqrt(mse2 / trials);
      const double ratio_excess = bias2 - (0.7 * bias1 + 3 * (se2 + 0.7 * se1));
      const double bias_bound = std::sqrt(static_cast<double>(kDim)) * c_f * c / b;
      const double bias_excess = bias1 - (bias_bound + 3 * se1);
      const double var_bound = 1.5 * (c_f * c_f + 2 * std::sqrt(double(kDim)) * c_f * c_f * c);
      const double var_ratio = std::max(mse1 * b, mse2 * 2 * b) / var_bound;
      worst_ratio_excess = std::max(worst_ratio_excess, ratio_excess);
      worst_bias_excess = std::max(worst_bias_excess, bias_excess);
      worst_var_ratio = std::max(worst_var_ratio, var_ratio);
      if (ratio_excess > 1e-12 || bias_excess > 1e-12 || var_ratio > 1.0) ++violations;
      const double exact1 = (exact_batch_mean(kernel.matrix(), f, s0, b) - mu).norm();
      const double exact2 = (exact_batch_mean(kernel.matrix(), f, s0, 2 * b) - mu).norm();
      rows.push_back({{"env", ctx.envs[e].name}, {"B", b}, {"bias_B", bias1}, {"bias_2B", bias2},
                      {"exact_bias_B", exact1}, {"exact_bias_2B", exact2},
                      {"mse_B", mse1}, {"mse_2B", mse2}});
      ++cases;
    }
  }
  r.measured = {{"cases", cases}, {"trials", trials}, {"max_ratio_excess", worst_ratio_excess},
                {"max_bias_excess", worst_bias_excess}, {"max_variance_ratio", worst_var_ratio},
                {"violations", violations}, {"rows", rows}};
  r.status = cases == 0 ? Status::skip : violations == 0 ? Status::pass : Status::fail;
  return r;
}

inline CheckResult check_critic_kernel(const CheckContext& ctx) {
  CheckResult r;
  r.tolerance = "largest principal angle between Ker(M_theta) and Z_theta <= 1e-8";
  double worst = 0.0;
  int cases = 0;
  for (std::size_t e = 0; e < ctx.envs.size(); ++e) {
    const auto& mdp = ctx.envs[e].mdp;
    const auto phi = CriticFeatures::one_hot(mdp.n_states());
    for (const auto& pol : policy_sample(mdp, ctx.policies_per_env(), env_seed(ctx, e, 6))) {
      const auto an = analyze_chain(induced_kernel(mdp, pol));
      const auto sys = critic_system(mdp, pol, an, phi, 1.0);
      worst = std::max(worst, linalg::max_principal_angle(sys.kernel_basis,
                                                          constant_on_recurrent_basis(phi, an)));
      ++cases;
    }
  }
  r.measured = {{"cases", cases}, {"max_principal_angle", worst}};
  r.status = cases == 0 ? Status::skip : worst <= 1e-8 ? Status::pass : Status::fail;
  return r;
}

inline CheckResult check_td_pd(const CheckContext& ctx) {
  CheckResult r;
  r.tolerance = "xi' A_v xi >= (lambda/2) |xi|^2 - 1e-10 on R x Ker(M)^perp "
                "(exact minimum and random probes), c_beta = lambda + sqrt(1/lambda^2 - 1)";
  const int probes = ctx.pick(200, 1000);
  double worst_exact = 1e300, worst_probe = 1e300;
  int cases = 0, violations = 0;
  for (std::size_t e = 0; e < ctx.envs.size(); ++e) {
    const auto& mdp = ctx.envs[e].mdp;
    const auto phi = CriticFeatures::one_hot(mdp.n_states());
    Rng rng(env_seed(ctx, e, 70));
    std::normal_distribution<double> g(0.0, 1.0);
    for (const auto& pol : policy_sample(mdp, ctx.policies_per_env(), env_seed(ctx, e, 7))) {
      const auto an = analyze_chain(induced_kernel(mdp, pol));
      const auto probe_sys = critic_system(mdp, pol, an, phi, 1.0);
      const double lam = capped_lambda(probe_sys.m_theta);
      const double cb = ctx.c_beta_override ? *ctx.c_beta_override : coupling_c_beta(lam);
      const auto sys = critic_system(mdp, pol, an, phi, cb);
      const MatrixXd zperp = linalg::row_space(sys.m_theta);
      const int m = phi.dim();
      MatrixXd basis = MatrixXd::Zero(m + 1, zperp.cols() + 1);
      basis(0, 0) = 1.0;
      basis.bottomRightCorner(m, zperp.cols()) = zperp;
      const double exact = linalg::restricted_min_eigenvalue(sys.a_v, basis) - lam / 2;
      worst_exact = std::min(worst_exact, exact);
      double probe_min = 1e300;
      for (int i = 0; i < probes; ++i) {
        VectorXd coeff(basis.cols());
        for (auto& x : coeff) x = g(rng);
        const VectorXd xi = basis * coeff;
        probe_min = std::min(probe_min, xi.dot(sys.a_v * xi) - lam / 2 * xi.squaredNorm());
      }
      worst_probe = std::min(worst_probe, probe_min);
      if (exact < -1e-10 || probe_min < -1e-10) ++violations;
      ++cases;
    }
  }
  r.measured = {{"cases", cases}, {"probes_per_case", probes},
                {"min_exact_margin", worst_exact}, {"min_probe_margin", worst_probe},
                {"violations", violations}};
  if (ctx.c_beta_override) r.measured["c_beta_override"] = *ctx.c_beta_override;
  r.status = cases == 0 ? Status::skip : violations == 0 ? Status::pass : Status::fail;
  return r;
}

inline CheckResult check_critic_fixed_point(const CheckContext& ctx) {
  CheckResult r;
  r.tolerance = "noiseless critic loop, beta = lambda^2/2, H = 500: |Pi(xi_H - xi*)| <= 1e-8 on "
                "named fixtures; error decreases on random models";
  double worst_fixture = 0.0, worst_random_ratio = 0.0;
  int fixtures = 0, randoms = 0;
  json rows = json::array();
  for (std::size_t e = 0; e < ctx.envs.size(); ++e) {
    const auto& mdp = ctx.envs[e].mdp;
    const auto phi = CriticFeatures::one_hot(mdp.n_states());
    for (const auto& pol : policy_sample(mdp, 2, env_seed(ctx, e, 8))) {
      const auto an = analyze_chain(induced_kernel(mdp, pol));
      const double lam = capped_lambda(critic_system(mdp, pol, an, phi, 1.0).m_theta);
      const double cb = ctx.c_beta_override ? *ctx.c_beta_override : coupling_c_beta(lam);
      const auto sys = critic_system(mdp, pol, an, phi, cb);
      const auto res = critic_inner_loop_exact(sys, CriticState::zero(phi.dim()), 500,
                                               lam * lam / 2, false);
      const double e0 = (sys.projector * (-sys.xi_star)).norm();
      const double eh = (sys.projector * (res.state.xi() - sys.xi_star)).norm();
      rows.push_back({{"env", ctx.envs[e].name}, {"lambda", lam}, {"initial", e0}, {"final", eh}});
      if (is_fixture(ctx.envs[e].name)) {
        worst_fixture = std::max(worst_fixture, eh);
        ++fixtures;
      } else {
        worst_random_ratio = std::max(worst_random_ratio, e0 > 0 ? eh / e0 : 0.0);
        ++randoms;
      }
    }
  }
  r.measured = {{"fixture_cases", fixtures}, {"random_cases", randoms},
                {"max_fixture_error", worst_fixture}, {"max_random_error_ratio", worst_random_ratio},
                {"rows", rows}};
  const bool ok = worst_fixture <= 1e-8 && worst_random_ratio < 1.0;
  r.status = fixtures + randoms == 0 ? Status::skip : ok ? Status::pass : Status::fail;
  return r;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Median over seeds of median_k |Pi(xi_k - xi*_k)|^2 at 4B divided by the same at B.
inline double critic_batch_ratio(const TabularMdp& mdp, int seeds, int batch, std::uint64_t seed0) {
  std::vector<double> ratios;
  for (int i = 0; i < seeds; ++i) {
    NacbConfig cfg;
    cfg.epochs = 10;
    cfg.horizon = 40;
    cfg.seed = seed0 + i;
    cfg.oracle_diagnostics = true;
    auto sq_median = [&](int b) {
      cfg.batch = b;
      std::vector<double> errs;
      for (const auto& ep : run(mdp, cfg).epochs) errs.push_back(ep.critic_error * ep.critic_error);
      return median(errs);
    };
    ratios.push_back(sq_median(4 * batch) / sq_median(batch));
  }
  return median(ratios);
}

inline CheckResult check_critic_batch_scaling(const CheckContext& ctx) {
  CheckResult r;
  r.tolerance = "median over seeds of the squared projected critic error ratio (4B vs B) <= 0.6";
  const int seeds = ctx.pick(5, 10);
  json rows = json::array();
  double worst = 0.0;
  int cases = 0;
  for (std::size_t e = 0; e < ctx.envs.size() && cases < 2; ++e) {
    const auto& name = ctx.envs[e].name;
    if (name != "bandit" && name.rfind("rand", 0) != 0) continue;
    if (ctx.envs[e].mdp.n_states() * std::log(double(ctx.envs[e].mdp.n_actions())) > std::log(1e5))
      continue;
    const double ratio = critic_batch_ratio(ctx.envs[e].mdp, seeds, 50, env_seed(ctx, e, 9));
    rows.push_back({{"env", name}, {"median_ratio", ratio}});
    worst = std::max(worst, ratio);
    ++cases;
  }
  r.measured = {{"seeds", seeds}, {"rows", rows}, {"max_median_ratio", worst}};
  r.status = cases == 0 ? Status::skip : worst <= 0.6 ? Status::pass : Status::fail;
  return r;
}

inline CheckResult check_npg_fixed_point(const CheckContext& ctx) {
  CheckResult r;
  r.tolerance = "noiseless NPG loop reaches |omega_H - omega*| <= 1e-8 on range(F); expected b_u "
                "with exact critic equals grad J within 1e-10; matches the generic recursion "
                "within 1e-12; omega* . score = A on recurrent states within 1e-8";
  double worst = 0.0, worst_target = 0.0, worst_engine = 0.0, worst_compat = 0.0;
  int cases = 0;
  json rows = json::array();
  for (std::size_t e = 0; e < ctx.envs.size(); ++e) {
    const auto& mdp = ctx.envs[e].mdp;
    if (mdp.n_actions() < 2) continue;
    const auto phi = CriticFeatures::one_hot(mdp.n_states());
    for (const auto& pol : policy_sample(mdp, 2, env_seed(ctx, e, 10))) {
      const auto an = analyze_chain(induced_kernel(mdp, pol));
      const auto vb = value_bundle(mdp, pol, an);
      const MatrixXd f = fisher_matrix(pol, an);
      const VectorXd grad = exact_policy_gradient(mdp, pol, vb, an);
      const VectorXd w_star = exact_npg(grad, f);
      const auto sys = critic_system(mdp, pol, an, phi, 1.0);
      const VectorXd target = expected_npg_target(mdp, pol, an, phi, sys.xi_star);
      worst_target = std::max(worst_target, (target - grad).cwiseAbs().maxCoeff());

      Eigen::SelfAdjointEigenSolver<MatrixXd> es(f, Eigen::EigenvaluesOnly);
      const double top = es.eigenvalues().maxCoeff();
      double mu = top;
      for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
        if (es.eigenvalues()(i) > kPinvCutoff * top) {
          mu = es.eigenvalues()(i);
          break;
        }
      const double gamma = 1.0 / top;
      const double factor = 1.0 - gamma * mu;
      const int horizon = std::clamp(
          static_cast<int>(std::ceil(std::log(1e-11 / std::max(w_star.norm(), 1e-300)) /
                                     std::log(std::max(factor, 1e-300)))) + 10,
          10, 2000000);
      const auto res = npg_inner_loop_exact(f, target, {VectorXd::Zero(pol.dim())}, horizon, gamma,
                                            NpgSign::descent, false);
      const MatrixXd range = linalg::range_space(f);
      const double err = (range.transpose() * (res.state.omega - w_star)).norm();
      worst = std::max(worst, err);

      linrec::RecursionSpec spec;
      spec.dim = pol.dim();
      spec.step = gamma;
      spec.horizon = std::min(horizon, 200);
      spec.p = f;
      spec.q = target;
      spec.measure = false;
      spec.source = [&](int, Rng&) { return linrec::NoisyOperator{f, target}; };
      Rng unused(0);
      const auto eng = linrec::run(spec, VectorXd::Zero(pol.dim()), unused);
      const auto short_loop = npg_inner_loop_exact(f, target, {VectorXd::Zero(pol.dim())},
                                                   spec.horizon, gamma, NpgSign::descent, false);
      worst_engine = std::max(worst_engine, (eng.x_final - short_loop.state.omega).cwiseAbs().maxCoeff());

      for (int s : an.recurrent_class)
        for (int a = 0; a < mdp.n_actions(); ++a)
          worst_compat = std::max(worst_compat, std::abs(w_star.dot(pol.score(s, a)) - vb.adv(s, a)));
      rows.push_back({{"env", ctx.envs[e].name}, {"mu", mu}, {"gamma", gamma}, {"H", horizon},
                      {"error", err}});
      ++cases;
    }
  }
  r.measured = {{"cases", cases}, {"max_error", worst}, {"max_target_difference", worst_target},
                {"max_engine_difference", worst_engine}, {"max_compatibility_error", worst_compat},
                {"rows", rows}};
  const bool ok = worst <= 1e-8 && worst_target <= 1e-10 && worst_engine <= 1e-12 &&
                  worst_compat <= 1e-8;
  r.status = cases == 0 ? Status::skip : ok ? Status::pass : Status::fail;
  return r;
}

inline CheckResult check_linear_recursion(const CheckContext& ctx) {
  CheckResult r;
  r.tolerance = "zero-noise factor <= 1 - beta lambda_P / 4 + 1e-10 and final error <= 1e-12; "
                "floor ratio <= 0.6 when sigma halves; bias ratio <= 0.35 when delta_q halves; "
                "delta_P > lambda_P / 8 is reported as a precondition violation";
  const int trials = ctx.pick(300, 1000);
  json rows = json::array();
  bool ok = true;
  auto add = [&](const char* name, const linrec::BoundCheckConfig& cfg) {
    const auto res = linrec::verify_recursion_bound(cfg, trials);
    rows.push_back({{"system", name}, {"passed", res.passed}, {"step", res.step},
                    {"lambda_p", res.lambda_p}, {"max_factor", res.max_factor},
                    {"factor_bound", res.factor_bound}, {"zero_noise_final", res.zero_noise_final},
                    {"floor_ratio", res.floor_ratio}, {"bias_ratio", res.bias_ratio}});
    ok = ok && res.passed;
  };
  linrec::BoundCheckConfig sym;
  sym.seed = ctx.seed;
  add("symmetric-8", sym);
  linrec::BoundCheckConfig skew;
  skew.system = {8, 2, 0.5, 1.0, 0.3, ctx.seed + 1};
  skew.horizon = 400;
  skew.seed = ctx.seed + 2;
  add("singular-skew-8", skew);
  linrec::BoundCheckConfig bad = sym;
  bad.delta_p = sym.system.lambda_p / 4;
  const auto guard = linrec::verify_recursion_bound(bad, 1);
  rows.push_back({{"system", "precondition-guard"}, {"flagged", !guard.precondition_ok}});
  ok = ok && !guard.precondition_ok;
  r.measured = {{"trials", trials}, {"rows", rows}};
  r.status = ok ? Status::pass : Status::fail;
  return r;
}

inline CheckResult check_cycle_regret(const CheckContext& ctx) {
  CheckResult r;
  r.tolerance = "2-cycle: |Reg_t| <= 0.5 at every t";
  double worst = 0.0;
  int runs = 0;
  for (const auto& env : ctx.envs) {
    if (env.name != "cycle2") continue;
    for (int seed = 0; seed < 3; ++seed) {
      NacbConfig cfg;
      cfg.epochs = 20;
      cfg.horizon = 5;
      cfg.batch = 11;
      cfg.seed = ctx.seed + seed;
      for (double reg : run(env.mdp, cfg).cumulative_regret()) worst = std::max(worst, std::abs(reg));
      ++runs;
    }
  }
  r.measured = {{"runs", runs}, {"max_abs_regret", worst}};
  r.status = runs == 0 ? Status::skip : worst <= 0.5 + 1e-12 ? Status::pass : Status::fail;
  return r;
}

inline CheckResult check_determinism(const CheckContext& ctx) {
  CheckResult r;
  r.tolerance = "identical seed gives bit-identical rewards and diagnostics";
  int runs = 0;
  bool ok = true;
  for (const auto& env : ctx.envs) {
    if (env.mdp.n_states() * std::log(double(env.mdp.n_actions())) > std::log(1e5)) continue;
    NacbConfig cfg;
    cfg.epochs = 5;
    cfg.horizon = 4;
    cfg.batch = 16;
    cfg.seed = ctx.seed;
    cfg.oracle_diagnostics = true;
    const auto a = run(env.mdp, cfg);
    const auto b = run(env.mdp, cfg);
    ok = ok && a.rewards == b.rewards && a.diagnostics_json().dump() == b.diagnostics_json().dump();
    if (++runs == 3) break;
  }
  r.measured = {{"runs", runs}};
  r.status = runs == 0 ? Status::skip : ok ? Status::pass : Status::fail;
  return r;
}

}  // namespace nacb::harness
