#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "nacb/algorithm.hpp"
#include "nacb/envs.hpp"
#include "nacb/harness/sweep.hpp"
#include "nacb/harness/verify.hpp"
#include "nacb/io.hpp"

using nlohmann::json;

namespace {

json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json vec(const nacb::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json mat(const nacb::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(vec(m.row(i).transpose()));
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw nacb::FormatError("cannot write " + path);
  return os;
}

void emit_json(const json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
  } else {
    open_out(path) << j.dump(2) << '\n';
  }
}

nacb::TabularMdp load_mdp(const std::string& file, const std::string& env) {
  if (!env.empty()) return nacb::envs::build(env);
  auto loaded = nacb::io::read_mdp_file(file);
  for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << '\n';
  return std::move(loaded.mdp);
}

int cmd_verify(const std::string& level, const std::vector<std::string>& env_list, bool env_given,
               std::optional<double> c_beta, std::uint64_t seed,
               const std::vector<std::string>& only, const std::string& json_out) {
  nacb::harness::VerifyOptions opts;
  opts.level = level == "full" ? nacb::harness::Level::full : nacb::harness::Level::fast;
  if (env_given) opts.envs = env_list;
  opts.c_beta_override = c_beta;
  opts.seed = seed;
  const auto report = nacb::harness::verify(opts, only);
  report.print(std::cout);
  if (!json_out.empty()) emit_json(report.to_json(), json_out);
  return report.all_passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Natural actor-critic for average-reward MDPs"};
  app.require_subcommand(1);

  // verify
  auto* verify = app.add_subcommand("verify", "Run the numerical property checks");
  std::string level = "fast", verify_json;
  std::vector<std::string> verify_envs, verify_only;
  std::optional<double> verify_cbeta;
  std::uint64_t verify_seed = 2024;
  verify->add_option("--level", level, "fast or full")->check(CLI::IsMember({"fast", "full"}));
  auto* env_opt = verify->add_option("--env", verify_envs, "Environment names (default: fixtures plus random models)")
                      ->expected(0, -1);
  verify->add_option("--check", verify_only, "Only run these check ids");
  verify->add_option("--c-beta", verify_cbeta, "Override the critic coupling constant");
  verify->add_option("--seed", verify_seed, "Base seed");
  verify->add_option("--json", verify_json, "Write the JSON report here ('-' for stdout)");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Regret versus horizon on a log-spaced grid");
  std::string sweep_env, sweep_mdp, sweep_out, sweep_json;
  nacb::harness::SweepOptions sopts;
  bool sweep_literal = false;
  auto* sweep_env_opt = sweep->add_option("--env", sweep_env, "Environment name");
  sweep->add_option("--mdp", sweep_mdp, "MDP file")->excludes(sweep_env_opt)->check(CLI::ExistingFile);
  sweep->add_option("--tmin", sopts.t_min, "Smallest target horizon")->capture_default_str();
  sweep->add_option("--tmax", sopts.t_max, "Largest target horizon")->capture_default_str();
  sweep->add_option("--points", sopts.points, "Grid points")->capture_default_str();
  sweep->add_option("--seeds", sopts.seeds, "Seeds per grid point")->capture_default_str();
  sweep->add_option("--seed", sopts.seed, "Seed of the first replicate")->capture_default_str();
  sweep->add_option("--alpha", sopts.rates.alpha, "Actor step")->capture_default_str();
  sweep->add_option("--beta", sopts.rates.beta, "Critic step")->capture_default_str();
  sweep->add_option("--c-beta", sopts.rates.c_beta, "Critic coupling constant")->capture_default_str();
  sweep->add_option("--gamma", sopts.rates.gamma, "NPG step")->capture_default_str();
  sweep->add_option("--threads", sopts.threads, "Worker threads (default NACB_THREADS or all cores)");
  sweep->add_flag("--literal-sign", sweep_literal, "Add the NPG direction instead of subtracting it");
  sweep->add_option("--out", sweep_out, "CSV output ('-' for stdout)")->required();
  sweep->add_option("--json", sweep_json, "Summary JSON output");

  // train
  auto* train = app.add_subcommand("train", "Run the algorithm once and write the regret trace");
  std::string train_mdp, train_env, train_config, train_trace, train_diag;
  auto* train_env_opt = train->add_option("--env", train_env, "Environment name");
  train->add_option("--mdp", train_mdp, "MDP file")->excludes(train_env_opt)->check(CLI::ExistingFile);
  train->add_option("--config", train_config, "Run config JSON")->required()->check(CLI::ExistingFile);
  train->add_option("--trace", train_trace, "Trace CSV output")->required();
  train->add_option("--diagnostics", train_diag, "Diagnostics JSON output");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Chain structure, values and constants of a policy");
  std::string an_mdp, an_env, an_policy, an_out;
  int an_samples = 8;
  std::uint64_t an_seed = 17;
  auto* an_env_opt = analyze->add_option("--env", an_env, "Environment name");
  analyze->add_option("--mdp", an_mdp, "MDP file")->excludes(an_env_opt)->check(CLI::ExistingFile);
  analyze->add_option("--policy", an_policy, "Policy JSON {features, theta}")->check(CLI::ExistingFile);
  analyze->add_option("--samples", an_samples, "Random policies added to the constant estimates")
      ->capture_default_str();
  analyze->add_option("--seed", an_seed, "Seed for the random policies")->capture_default_str();
  analyze->add_option("--out", an_out, "JSON output (default stdout)");

  // envs
  auto* envs = app.add_subcommand("envs", "List built-in environments or export one");
  std::string env_name, env_out;
  envs->add_option("name", env_name, "Environment to export");
  envs->add_option("--out", env_out, "MDP file to write");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*verify)
      return cmd_verify(level, verify_envs, env_opt->count() > 0, verify_cbeta, verify_seed,
                        verify_only, verify_json);

    if (*sweep) {
      if (sweep_env.empty() && sweep_mdp.empty()) throw CLI::RequiredError("--env or --mdp");
      sopts.npg_sign = sweep_literal ? nacb::NpgSign::literal : nacb::NpgSign::descent;
      const auto mdp = load_mdp(sweep_mdp, sweep_env);
      const auto res = nacb::harness::sweep(mdp, sweep_env.empty() ? sweep_mdp : sweep_env, sopts);
      if (sweep_out == "-") {
        res.write_csv(std::cout);
      } else {
        auto os = open_out(sweep_out);
        res.write_csv(os);
      }
      if (!sweep_json.empty()) emit_json(res.to_json(), sweep_json);
      std::cerr << "slope " << res.fit.status;
      if (res.fit.status == "ok")
        std::cerr << ' ' << res.fit.slope << " [" << res.fit.ci_low << ", " << res.fit.ci_high << ']';
      std::cerr << "; " << res.errors.size() << " failed cells\n";
      return res.errors.empty() ? 0 : 1;
    }

    if (*train) {
      if (train_env.empty() && train_mdp.empty()) throw CLI::RequiredError("--env or --mdp");
      const auto mdp = load_mdp(train_mdp, train_env);
      const auto base = std::filesystem::path(train_config).parent_path().string();
      const auto spec = nacb::io::run_spec_from_json(nacb::io::detail::parse_file(train_config),
                                                     base.empty() ? "." : base);
      nacb::Rng rng(spec.config.seed);
      const auto trace = nacb::run(mdp, nacb::io::initial_policy(spec, mdp),
                                   nacb::CriticFeatures::one_hot(mdp.n_states()), spec.config, rng);
      {
        auto os = open_out(train_trace);
        trace.write_csv(os);
      }
      if (!train_diag.empty()) emit_json(trace.diagnostics_json(), train_diag);
      std::cerr << "steps " << trace.rewards.size() << ", final regret " << trace.final_regret()
                << '\n';
      return 0;
    }

    if (*analyze) {
      if (an_env.empty() && an_mdp.empty()) throw CLI::RequiredError("--env or --mdp");
      const auto mdp = load_mdp(an_mdp, an_env);
      json wrapped = {{"K", 0}, {"H", 1}, {"B", 1}};
      std::string base = ".";
      if (!an_policy.empty()) {
        wrapped["policy"] = nacb::io::detail::parse_file(an_policy);
        const auto parent = std::filesystem::path(an_policy).parent_path().string();
        if (!parent.empty()) base = parent;
      }
      const auto policy = nacb::io::initial_policy(nacb::io::run_spec_from_json(wrapped, base), mdp);
      const auto an = nacb::analyze_chain(nacb::induced_kernel(mdp, policy));
      const auto vb = nacb::value_bundle(mdp, policy, an);
      const auto phi = nacb::CriticFeatures::one_hot(mdp.n_states());
      std::vector<nacb::SoftmaxPolicy> sample = {policy};
      nacb::Rng rng(an_seed);
      std::normal_distribution<double> g(0.0, 1.0);
      for (int i = 0; i < an_samples; ++i) {
        nacb::VectorXd th(policy.dim());
        for (auto& x : th) x = g(rng);
        sample.push_back(policy.with_theta(th));
      }
      const auto c = nacb::assumption_constants(mdp, sample, phi, an_seed);
      json out;
      out["chain"] = {{"recurrent_class", an.recurrent_class},
                      {"transient_states", an.transient_states},
                      {"period", an.period},
                      {"stationary_dist", vec(an.stationary_dist)},
                      {"hit_times", vec(an.hit_times)},
                      {"c_hit", an.c_hit},
                      {"c_tar", an.c_tar},
                      {"c_tar_check", an.c_tar_check}};
      out["values"] = {{"gain", vb.gain}, {"v", vec(vb.v)}, {"q", mat(vb.q)}, {"advantage", mat(vb.adv)}};
      out["constants"] = {{"lambda", num(c.lambda)}, {"mu", num(c.mu)}, {"G1", c.g1}, {"G2", c.g2},
                          {"c_hit_max", c.c_hit_max}, {"c_tar_max", c.c_tar_max},
                          {"fisher_full_rank", c.fisher_full_rank}, {"policies", sample.size()},
                          {"warnings", c.warnings}};
      emit_json(out, an_out);
      return 0;
    }

    if (*envs) {
      if (env_name.empty()) {
        for (const auto& [name, desc] : nacb::envs::catalogue()) std::cout << name << "  " << desc << '\n';
        return 0;
      }
      const auto mdp = nacb::envs::build(env_name);
      if (env_out.empty()) {
        std::cout << nacb::io::mdp_to_json(mdp).dump(2) << '\n';
      } else {
        nacb::io::write_mdp_file(env_out, mdp);
      }
      return 0;
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const nacb::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
