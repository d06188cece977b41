#pragma once

#include <json.hpp>

#include <fstream>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nacb/algorithm.hpp"
#include "nacb/error.hpp"
#include "nacb/mdp.hpp"
#include "nacb/policy.hpp"

namespace nacb::io {

using nlohmann::json;

namespace detail {

inline void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                                const std::string& where) {
  if (!j.is_object()) throw FormatError(where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& item : j.items())
    if (!ok.count(item.key())) throw FormatError("unknown key '" + item.key() + "' in " + where);
}

inline const json& require(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw FormatError("missing key '" + std::string(key) + "' in " + where);
  return j.at(key);
}

inline int as_int(const json& j, const std::string& what) {
  if (!j.is_number_integer()) throw FormatError(what + " must be an integer");
  return j.get<int>();
}

inline double as_double(const json& j, const std::string& what) {
  if (!j.is_number()) throw FormatError(what + " must be a number");
  return j.get<double>();
}

inline json parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
}

inline void write_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace detail

struct LoadedMdp {
  TabularMdp mdp;
  std::vector<std::string> warnings;
};

/// Only positive-probability transitions are written.
inline json mdp_to_json(const TabularMdp& mdp) {
  json j;
  j["n_states"] = mdp.n_states();
  j["n_actions"] = mdp.n_actions();
  j["transitions"] = json::array();
  j["rewards"] = json::array();
  for (int s = 0; s < mdp.n_states(); ++s)
    for (int a = 0; a < mdp.n_actions(); ++a) {
      for (int s2 = 0; s2 < mdp.n_states(); ++s2)
        if (mdp.transition(s, a, s2) > 0.0)
          j["transitions"].push_back({{"s", s}, {"a", a}, {"s_next", s2}, {"p", mdp.transition(s, a, s2)}});
      j["rewards"].push_back({{"s", s}, {"a", a}, {"r", mdp.reward(s, a)}});
    }
  const auto& rho = mdp.initial_dist();
  j["initial_dist"] = std::vector<double>(rho.data(), rho.data() + rho.size());
  return j;
}

/// Parses the MDP file format. Rows off by at most 1e-9 are renormalized with a
/// warning; larger violations raise InvalidModel.
inline LoadedMdp mdp_from_json(const json& j) {
  using detail::as_double;
  using detail::as_int;
  using detail::require;
  detail::reject_unknown_keys(j, {"n_states", "n_actions", "transitions", "rewards", "initial_dist"},
                              "MDP file");
  const int S = as_int(require(j, "n_states", "MDP file"), "n_states");
  const int A = as_int(require(j, "n_actions", "MDP file"), "n_actions");
  if (S <= 0 || A <= 0) throw FormatError("n_states and n_actions must be positive");

  MatrixXd p = MatrixXd::Zero(static_cast<Eigen::Index>(S) * A, S);
  MatrixXd r = MatrixXd::Zero(S, A);
  auto index = [&](const json& rec, const char* key, int bound, const std::string& where) {
    const int v = as_int(require(rec, key, where), where + "." + key);
    if (v < 0 || v >= bound)
      throw FormatError(where + "." + key + " = " + std::to_string(v) + " out of range");
    return v;
  };

  const json& trans = require(j, "transitions", "MDP file");
  if (!trans.is_array()) throw FormatError("transitions must be an array");
  std::set<std::tuple<int, int, int>> seen;
  for (const auto& rec : trans) {
    detail::reject_unknown_keys(rec, {"s", "a", "s_next", "p"}, "transition record");
    const int s = index(rec, "s", S, "transition");
    const int a = index(rec, "a", A, "transition");
    const int s2 = index(rec, "s_next", S, "transition");
    if (!seen.insert({s, a, s2}).second)
      throw FormatError("duplicate transition (" + std::to_string(s) + "," + std::to_string(a) +
                        "," + std::to_string(s2) + ")");
    p(static_cast<Eigen::Index>(s) * A + a, s2) = as_double(require(rec, "p", "transition"), "p");
  }

  const json& rew = require(j, "rewards", "MDP file");
  if (!rew.is_array()) throw FormatError("rewards must be an array");
  std::set<std::pair<int, int>> seen_r;
  for (const auto& rec : rew) {
    detail::reject_unknown_keys(rec, {"s", "a", "r"}, "reward record");
    const int s = index(rec, "s", S, "reward");
    const int a = index(rec, "a", A, "reward");
    if (!seen_r.insert({s, a}).second) throw FormatError("duplicate reward record");
    r(s, a) = as_double(require(rec, "r", "reward"), "r");
  }

  const json& init = require(j, "initial_dist", "MDP file");
  if (!init.is_array() || static_cast<int>(init.size()) != S)
    throw FormatError("initial_dist must be an array of length n_states");
  VectorXd rho(S);
  for (int s = 0; s < S; ++s) rho(s) = as_double(init[s], "initial_dist entry");

  const TabularMdp raw(S, A, p, r, rho);
  auto [fixed, warnings] = renormalized(raw, kRenormalizeTolerance);
  const auto problems = validate(fixed);
  if (!problems.empty()) {
    std::ostringstream msg;
    msg << "invalid MDP:";
    for (const auto& v : problems) msg << "\n  " << v;
    throw InvalidModel(msg.str());
  }
  return {std::move(fixed), std::move(warnings)};
}

inline LoadedMdp read_mdp_file(const std::string& path) {
  return mdp_from_json(detail::parse_file(path));
}

inline void write_mdp_file(const std::string& path, const TabularMdp& mdp) {
  detail::write_file(path, mdp_to_json(mdp));
}

/// Custom policy features: {"n_states", "n_actions", "dim", "rows"} with one row per
/// (s, a) in order s * n_actions + a.
inline PolicyFeatures features_from_json(const json& j) {
  using detail::as_int;
  using detail::require;
  detail::reject_unknown_keys(j, {"n_states", "n_actions", "dim", "rows"}, "feature file");
  const int S = as_int(require(j, "n_states", "feature file"), "n_states");
  const int A = as_int(require(j, "n_actions", "feature file"), "n_actions");
  const int d = as_int(require(j, "dim", "feature file"), "dim");
  const json& rows = require(j, "rows", "feature file");
  if (!rows.is_array() || static_cast<int>(rows.size()) != S * A)
    throw FormatError("feature rows must have n_states * n_actions entries");
  MatrixXd m(S * A, d);
  for (int i = 0; i < S * A; ++i) {
    if (!rows[i].is_array() || static_cast<int>(rows[i].size()) != d)
      throw FormatError("feature row " + std::to_string(i) + " must have dim entries");
    for (int k = 0; k < d; ++k) m(i, k) = detail::as_double(rows[i][k], "feature entry");
  }
  return PolicyFeatures(S, A, m, false);
}

/// Everything a train run needs besides the MDP.
struct RunSpec {
  NacbConfig config;
  std::shared_ptr<const PolicyFeatures> features;  // null means tabular
  std::optional<VectorXd> theta0;
  std::optional<std::uint64_t> target_horizon;     // schedule_for_horizon when set
};

/// Run config keys: K, H, B or T (target horizon), alpha, beta, c_beta, gamma,
/// npg_sign, seed, warm_start, rate_mode, L, oracle_diagnostics, j_star, policy.
inline RunSpec run_spec_from_json(const json& j, const std::string& base_dir = ".") {
  using detail::as_double;
  using detail::as_int;
  detail::reject_unknown_keys(j, {"K", "H", "B", "T", "alpha", "beta", "c_beta", "gamma",
                                  "npg_sign", "seed", "warm_start", "rate_mode", "L",
                                  "oracle_diagnostics", "j_star", "policy"},
                              "run config");
  RunSpec spec;
  NacbConfig& c = spec.config;
  if (j.contains("T")) {
    if (j.contains("K") || j.contains("H") || j.contains("B"))
      throw FormatError("give either T or K/H/B, not both");
    if (!j["T"].is_number_unsigned()) throw FormatError("T must be a positive integer");
    spec.target_horizon = j["T"].get<std::uint64_t>();
    const auto s = schedule_for_horizon(*spec.target_horizon);
    c.epochs = s.epochs;
    c.horizon = s.horizon;
    c.batch = s.batch;
  } else {
    for (const char* key : {"K", "H", "B"})
      if (!j.contains(key)) throw FormatError(std::string("run config needs T or ") + key);
    c.epochs = as_int(j["K"], "K");
    c.horizon = as_int(j["H"], "H");
    c.batch = as_int(j["B"], "B");
  }
  if (j.contains("alpha")) c.alpha = as_double(j["alpha"], "alpha");
  if (j.contains("beta")) c.beta = as_double(j["beta"], "beta");
  if (j.contains("c_beta")) c.c_beta = as_double(j["c_beta"], "c_beta");
  if (j.contains("gamma")) c.gamma = as_double(j["gamma"], "gamma");
  if (j.contains("L")) c.smoothness = as_double(j["L"], "L");
  if (j.contains("j_star")) c.j_star = as_double(j["j_star"], "j_star");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw FormatError("seed must be a nonnegative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("oracle_diagnostics")) {
    if (!j["oracle_diagnostics"].is_boolean()) throw FormatError("oracle_diagnostics must be boolean");
    c.oracle_diagnostics = j["oracle_diagnostics"].get<bool>();
  }
  auto choice = [&](const char* key, const char* a, const char* b) -> std::optional<bool> {
    if (!j.contains(key)) return std::nullopt;
    if (!j[key].is_string()) throw FormatError(std::string(key) + " must be a string");
    const auto v = j[key].get<std::string>();
    if (v == a) return true;
    if (v == b) return false;
    throw FormatError(std::string(key) + " must be '" + a + "' or '" + b + "'");
  };
  if (auto v = choice("npg_sign", "descent", "literal")) c.npg_sign = *v ? NpgSign::descent : NpgSign::literal;
  if (auto v = choice("warm_start", "reuse", "reset")) c.warm_start = *v ? WarmStart::reuse : WarmStart::reset;
  if (auto v = choice("rate_mode", "explicit", "theory"))
    c.rate_mode = *v ? RateMode::explicit_rates : RateMode::theory;

  if (j.contains("policy")) {
    const json& p = j["policy"];
    detail::reject_unknown_keys(p, {"features", "theta"}, "policy spec");
    if (p.contains("features")) {
      const json& f = p["features"];
      if (f.is_string()) {
        const auto kind = f.get<std::string>();
        if (kind != "tabular") {
          const std::string path = kind.front() == '/' ? kind : base_dir + "/" + kind;
          spec.features = std::make_shared<const PolicyFeatures>(
              features_from_json(detail::parse_file(path)));
        }
      } else {
        throw FormatError("policy.features must be 'tabular' or a feature file path");
      }
    }
    if (p.contains("theta")) {
      if (!p["theta"].is_array()) throw FormatError("policy.theta must be an array");
      VectorXd theta(p["theta"].size());
      for (std::size_t i = 0; i < p["theta"].size(); ++i)
        theta(static_cast<Eigen::Index>(i)) = as_double(p["theta"][i], "theta entry");
      spec.theta0 = theta;
    }
  }
  c.check();
  return spec;
}

inline SoftmaxPolicy initial_policy(const RunSpec& spec, const TabularMdp& mdp) {
  auto features = spec.features
                      ? spec.features
                      : std::make_shared<const PolicyFeatures>(
                            PolicyFeatures::tabular(mdp.n_states(), mdp.n_actions()));
  if (features->n_states() != mdp.n_states() || features->n_actions() != mdp.n_actions())
    throw DimensionMismatch("policy features do not match the MDP");
  VectorXd theta = spec.theta0 ? *spec.theta0 : VectorXd::Zero(features->dim());
  return SoftmaxPolicy(features, theta);
}

}  // namespace nacb::io
