#pragma once

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "nacb/envs.hpp"
#include "nacb/error.hpp"
#include "nacb/harness/checks.hpp"

namespace nacb::harness {

struct VerifyOptions {
  Level level = Level::fast;
  std::optional<std::vector<std::string>> envs;  // explicit list; empty means no checks
  std::optional<double> c_beta_override;
  std::uint64_t seed = 2024;
};

struct VerifyReport {
  std::vector<CheckResult> checks;

  bool all_passed() const {
    for (const auto& c : checks)
      if (c.status == Status::fail) return false;
    return true;
  }
  int count(Status s) const {
    int n = 0;
    for (const auto& c : checks) n += c.status == s;
    return n;
  }

  json to_json(bool include_runtime = true) const {
    json j;
    j["passed"] = all_passed();
    j["checks"] = json::array();
    for (const auto& c : checks) {
      json e = {{"id", c.id},
                {"reference", c.reference},
                {"status", status_name(c.status)},
                {"measured", c.measured},
                {"tolerance", c.tolerance}};
      if (!c.message.empty()) e["message"] = c.message;
      if (include_runtime) e["runtime_s"] = c.runtime_s;
      j["checks"].push_back(std::move(e));
    }
    return j;
  }

  void print(std::ostream& os) const {
    for (const auto& c : checks) {
      os << (c.status == Status::pass ? "PASS " : c.status == Status::fail ? "FAIL " : "SKIP ")
         << c.id << "  (" << c.reference << ")";
      if (!c.message.empty()) os << "  " << c.message;
      os << '\n';
    }
    os << count(Status::pass) << " passed, " << count(Status::fail) << " failed, "
       << count(Status::skip) << " skipped\n";
  }
};

/// Named fixtures plus generated random unichain models.
inline std::vector<std::string> default_env_names(Level level) {
  std::vector<std::string> names = {"cycle2", "tcycle", "bandit", "pcyc:3,2", "rand:8,3,2,7"};
  const int randoms = level == Level::full ? 20 : 5;
  for (int i = 0; i < randoms; ++i) {
    names.push_back("rand:" + std::to_string(4 + i % 9) + "," + std::to_string(2 + i % 2) + "," +
                    std::to_string(i % 4) + "," + std::to_string(1000 + i));
  }
  return names;
}

struct CheckEntry {
  std::string id;
  std::string reference;
  std::function<CheckResult(const CheckContext&)> fn;
};

inline const std::vector<CheckEntry>& check_registry() {
  static const std::vector<CheckEntry> registry = {
      {"pg-theorem", "average-reward policy gradient theorem", check_pg_theorem},
      {"cesaro-tv", "Cesaro mixing bound", check_cesaro},
      {"value-bounds", "value, Q and advantage bounds", check_value_bounds},
      {"hitting-probability", "hitting probability of the recurrent class", check_hitting_probability},
      {"markov-bias-variance", "Markovian batch bias and variance", check_bias_variance},
      {"critic-kernel", "kernel of the critic matrix", check_critic_kernel},
      {"td-pd", "restricted positive definiteness of the critic operator", check_td_pd},
      {"critic-fixed-point", "noiseless critic convergence", check_critic_fixed_point},
      {"critic-batch-scaling", "critic error versus batch size", check_critic_batch_scaling},
      {"npg-fixed-point", "noiseless NPG convergence and compatible features", check_npg_fixed_point},
      {"linear-recursion", "noisy linear recursion bound", check_linear_recursion},
      {"regret-cycle2", "regret on the deterministic 2-cycle", check_cycle_regret},
      {"determinism", "seeded reproducibility", check_determinism},
  };
  return registry;
}

inline CheckContext make_context(const VerifyOptions& opts) {
  CheckContext ctx;
  ctx.level = opts.level;
  ctx.seed = opts.seed;
  ctx.c_beta_override = opts.c_beta_override;
  const auto names = opts.envs ? *opts.envs : default_env_names(opts.level);
  for (const auto& n : names) ctx.envs.push_back({n, envs::build(n)});
  return ctx;
}

/// Runs every registered check, or only those in `only` when non-empty.
inline VerifyReport verify(const VerifyOptions& opts, const std::vector<std::string>& only = {}) {
  VerifyReport report;
  if (opts.envs && opts.envs->empty()) return report;
  const CheckContext ctx = make_context(opts);
  for (const auto& entry : check_registry()) {
    if (!only.empty() && std::find(only.begin(), only.end(), entry.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    CheckResult r;
    try {
      r = entry.fn(ctx);
    } catch (const Error& e) {
      r.status = Status::fail;
      r.message = std::string("error: ") + e.what();
    }
    r.id = entry.id;
    r.reference = entry.reference;
    r.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.checks.push_back(std::move(r));
  }
  return report;
}

}  // namespace nacb::harness
