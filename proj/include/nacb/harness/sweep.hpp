#pragma once

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "nacb/algorithm.hpp"
#include "nacb/envs.hpp"
#include "nacb/error.hpp"

namespace nacb::harness {

struct SweepOptions {
  std::uint64_t t_min = 1ull << 14;
  std::uint64_t t_max = 1ull << 20;
  int points = 7;
  int seeds = 10;
  std::uint64_t seed = 1;
  Rates rates{1.0, 0.5, 1.0, 1.0};
  NpgSign npg_sign = NpgSign::descent;
  int threads = 0;  // 0: NACB_THREADS, else hardware concurrency

  void check() const {
    if (t_min < 64 || t_max < t_min) throw DomainError("sweep needs 64 <= tmin <= tmax");
    if (points < 1 || seeds < 1) throw DomainError("sweep needs points >= 1 and seeds >= 1");
  }
};

struct SweepRow {
  std::uint64_t target = 0;
  Schedule schedule;
  int completed = 0;
  double mean_regret = 0.0;
  double std_regret = 0.0;
  double mean_regret_per_step = 0.0;
  std::vector<double> regrets;  // per seed, NaN when the cell failed
};

struct CellError {
  std::uint64_t target = 0;
  int seed_index = 0;
  std::string message;
};

struct SlopeFit {
  std::string status = "undefined";  // ok, undefined, degenerate
  double slope = std::nan("");
  double ci_low = std::nan("");
  double ci_high = std::nan("");
  int points = 0;
};

struct SweepResult {
  std::string env;
  double j_star = 0.0;
  std::vector<SweepRow> rows;
  SlopeFit fit;
  bool regret_per_step_decreasing = false;
  bool regret_nondecreasing = false;
  std::vector<CellError> errors;

  /// Columns: T_target, T_effective, K, H, B, seeds, mean_regret, std_regret, mean_regret_per_step.
  void write_csv(std::ostream& os) const {
    os << "T_target,T_effective,K,H,B,seeds,mean_regret,std_regret,mean_regret_per_step\n";
    char buf[256];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%llu,%llu,%d,%d,%d,%d,%.17g,%.17g,%.17g\n",
                    static_cast<unsigned long long>(r.target),
                    static_cast<unsigned long long>(r.schedule.effective_steps), r.schedule.epochs,
                    r.schedule.horizon, r.schedule.batch, r.completed, r.mean_regret, r.std_regret,
                    r.mean_regret_per_step);
      os << buf;
    }
  }

  nlohmann::json to_json() const {
    auto num = [](double x) -> nlohmann::json {
      return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
    };
    nlohmann::json j;
    j["env"] = env;
    j["j_star"] = j_star;
    j["slope"] = {{"status", fit.status}, {"value", num(fit.slope)}, {"ci95_low", num(fit.ci_low)},
                  {"ci95_high", num(fit.ci_high)}, {"points", fit.points}};
    j["regret_per_step_decreasing"] = regret_per_step_decreasing;
    j["regret_nondecreasing"] = regret_nondecreasing;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : rows)
      j["rows"].push_back({{"T_target", r.target}, {"T_effective", r.schedule.effective_steps},
                           {"K", r.schedule.epochs}, {"H", r.schedule.horizon},
                           {"B", r.schedule.batch}, {"seeds", r.completed},
                           {"mean_regret", num(r.mean_regret)}, {"std_regret", num(r.std_regret)}});
    j["errors"] = nlohmann::json::array();
    for (const auto& e : errors)
      j["errors"].push_back({{"T_target", e.target}, {"seed_index", e.seed_index},
                             {"message", e.message}});
    return j;
  }
};

/// Log-spaced targets between t_min and t_max, deduplicated.
inline std::vector<std::uint64_t> sweep_grid(std::uint64_t t_min, std::uint64_t t_max, int points) {
  std::vector<std::uint64_t> out;
  if (points == 1) return {t_min};
  const double l0 = std::log(double(t_min)), l1 = std::log(double(t_max));
  for (int i = 0; i < points; ++i) {
    const auto t = static_cast<std::uint64_t>(std::llround(std::exp(l0 + (l1 - l0) * i / (points - 1))));
    if (out.empty() || t != out.back()) out.push_back(t);
  }
  return out;
}

inline int sweep_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("NACB_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// OLS of log mean regret on log T_effective with a t-based 95% interval.
inline SlopeFit fit_slope(const std::vector<SweepRow>& rows, int seeds) {
  SlopeFit fit;
  fit.points = static_cast<int>(rows.size());
  if (rows.size() < 4 || seeds < 5) return fit;
  for (const auto& r : rows)
    if (!(r.mean_regret > 1.0)) {
      fit.status = "degenerate";
      return fit;
    }
  const double n = static_cast<double>(rows.size());
  double mx = 0, my = 0;
  for (const auto& r : rows) {
    mx += std::log(double(r.schedule.effective_steps));
    my += std::log(r.mean_regret);
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (const auto& r : rows) {
    const double dx = std::log(double(r.schedule.effective_steps)) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(r.mean_regret) - my);
  }
  fit.slope = sxy / sxx;
  double ssr = 0;
  for (const auto& r : rows) {
    const double res = std::log(r.mean_regret) - my -
                       fit.slope * (std::log(double(r.schedule.effective_steps)) - mx);
    ssr += res * res;
  }
  const double se = std::sqrt(ssr / (n - 2) / sxx);
  const boost::math::students_t dist(n - 2);
  const double q = boost::math::quantile(boost::math::complement(dist, 0.025));
  fit.ci_low = fit.slope - q * se;
  fit.ci_high = fit.slope + q * se;
  fit.status = "ok";
  return fit;
}

/// Cell (target i, seed j) uses seed opts.seed + j at every target.
inline SweepResult sweep(const TabularMdp& mdp, const std::string& env_name,
                         const SweepOptions& opts) {
  opts.check();
  SweepResult res;
  res.env = env_name;
  res.j_star = optimal_gain(mdp).j_star;
  const auto grid = sweep_grid(opts.t_min, opts.t_max, opts.points);
  for (auto t : grid) {
    SweepRow row;
    row.target = t;
    row.schedule = schedule_for_horizon(t);
    row.regrets.assign(opts.seeds, std::nan(""));
    res.rows.push_back(std::move(row));
  }

  const int cells = static_cast<int>(grid.size()) * opts.seeds;
  std::atomic<int> next{0};
  std::mutex err_mutex;
  auto worker = [&] {
    for (int c = next++; c < cells; c = next++) {
      SweepRow& row = res.rows[c / opts.seeds];
      const int j = c % opts.seeds;
      NacbConfig cfg;
      cfg.epochs = row.schedule.epochs;
      cfg.horizon = row.schedule.horizon;
      cfg.batch = row.schedule.batch;
      cfg.alpha = opts.rates.alpha;
      cfg.beta = opts.rates.beta;
      cfg.c_beta = opts.rates.c_beta;
      cfg.gamma = opts.rates.gamma;
      cfg.npg_sign = opts.npg_sign;
      cfg.seed = opts.seed + j;
      cfg.j_star = res.j_star;
      try {
        row.regrets[j] = run(mdp, cfg).final_regret();
      } catch (const Error& e) {
        std::lock_guard lock(err_mutex);
        res.errors.push_back({row.target, j, e.what()});
      }
    }
  };
  const int n_threads = std::min(sweep_threads(opts.threads), cells);
  std::vector<std::thread> pool;
  for (int i = 1; i < n_threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  std::sort(res.errors.begin(), res.errors.end(), [](const CellError& a, const CellError& b) {
    return a.target != b.target ? a.target < b.target : a.seed_index < b.seed_index;
  });

  for (auto& row : res.rows) {
    double sum = 0, sq = 0;
    row.completed = 0;
    for (double x : row.regrets)
      if (std::isfinite(x)) {
        sum += x;
        ++row.completed;
      }
    row.mean_regret = row.completed ? sum / row.completed : std::nan("");
    for (double x : row.regrets)
      if (std::isfinite(x)) sq += (x - row.mean_regret) * (x - row.mean_regret);
    row.std_regret = row.completed > 1 ? std::sqrt(sq / (row.completed - 1)) : 0.0;
    row.mean_regret_per_step = row.mean_regret / double(row.schedule.effective_steps);
  }

  int min_completed = opts.seeds;
  for (const auto& row : res.rows) min_completed = std::min(min_completed, row.completed);
  res.fit = fit_slope(res.rows, min_completed);
  res.regret_per_step_decreasing = res.regret_nondecreasing = res.rows.size() >= 2;
  for (std::size_t i = 1; i < res.rows.size(); ++i) {
    if (!(res.rows[i].mean_regret_per_step < res.rows[i - 1].mean_regret_per_step))
      res.regret_per_step_decreasing = false;
    if (!(res.rows[i].mean_regret >= res.rows[i - 1].mean_regret)) res.regret_nondecreasing = false;
  }
  return res;
}

inline SweepResult sweep(const std::string& env_name, const SweepOptions& opts) {
  return sweep(envs::build(env_name), env_name, opts);
}

}  // namespace nacb::harness
