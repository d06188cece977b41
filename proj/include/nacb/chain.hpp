#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <queue>
#include <string>
#include <vector>

#include "nacb/error.hpp"
#include "nacb/linalg.hpp"
#include "nacb/mdp.hpp"

namespace nacb {

/// Structure and hitting-time constants of one policy-induced chain.
struct ChainAnalysis {
  std::vector<int> recurrent_class;
  std::vector<int> transient_states;
  int period = 1;
  VectorXd stationary_dist;  // zero on transient states
  VectorXd hit_times;        // E_s[time to enter the recurrent class], per state
  double c_hit = 0.0;        // max_s of hit_times
  double c_tar = 0.0;        // random-target hitting time from the first recurrent state
  double c_tar_check = 0.0;  // same quantity from the last recurrent state

  bool is_recurrent(int s) const {
    return std::binary_search(recurrent_class.begin(), recurrent_class.end(), s);
  }
  int n_states() const { return static_cast<int>(stationary_dist.size()); }
};

namespace detail {

// Tarjan's algorithm on the positive-probability graph. Returns component id per node.
inline std::vector<int> strongly_connected_components(const MatrixXd& p, int& n_components) {
  const int n = static_cast<int>(p.rows());
  std::vector<int> index(n, -1), low(n, 0), comp(n, -1), stack;
  std::vector<bool> on_stack(n, false);
  int counter = 0;
  n_components = 0;

  struct Frame {
    int v;
    int next;
  };
  for (int root = 0; root < n; ++root) {
    if (index[root] != -1) continue;
    std::vector<Frame> call{{root, 0}};
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!call.empty()) {
      Frame& f = call.back();
      if (f.next < n) {
        const int w = f.next++;
        if (p(f.v, w) <= 0.0) continue;
        if (index[w] == -1) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = true;
          call.push_back({w, 0});
        } else if (on_stack[w]) {
          low[f.v] = std::min(low[f.v], index[w]);
        }
        continue;
      }
      const int v = f.v;
      if (low[v] == index[v]) {
        int w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = false;
          comp[w] = n_components;
        } while (w != v);
        ++n_components;
      }
      call.pop_back();
      if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
    }
  }
  return comp;
}

inline int class_period(const MatrixXd& p, const std::vector<int>& cls) {
  const int n = static_cast<int>(p.rows());
  std::vector<int> level(n, -1);
  std::vector<bool> member(n, false);
  for (int s : cls) member[s] = true;
  std::queue<int> q;
  level[cls.front()] = 0;
  q.push(cls.front());
  int g = 0;
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (int v = 0; v < n; ++v) {
      if (!member[v] || p(u, v) <= 0.0) continue;
      if (level[v] == -1) {
        level[v] = level[u] + 1;
        q.push(v);
      } else {
        g = std::gcd(g, std::abs(level[u] + 1 - level[v]));
      }
    }
  }
  return g == 0 ? 1 : g;
}

inline MatrixXd submatrix(const MatrixXd& p, const std::vector<int>& rows,
                          const std::vector<int>& cols) {
  MatrixXd out(rows.size(), cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = p(rows[i], cols[j]);
  return out;
}

inline VectorXd solve_checked(const MatrixXd& a, const VectorXd& b, const char* what) {
  Eigen::FullPivLU<MatrixXd> lu(a);
  if (!lu.isInvertible()) throw SingularSystem(std::string(what) + ": singular system");
  VectorXd x = lu.solve(b);
  const double resid = (a * x - b).norm();
  if (!x.allFinite() || resid > 1e-8 * std::max(1.0, b.norm()))
    throw SingularSystem(std::string(what) + ": residual " + std::to_string(resid));
  return x;
}

// E_start[T_target] for T_target = inf{t >= 0 : s_t = target}, chain restricted to cls.
inline VectorXd hitting_times_to(const MatrixXd& p, const std::vector<int>& cls, int target) {
  std::vector<int> others;
  for (int s : cls)
    if (s != target) others.push_back(s);
  VectorXd out = VectorXd::Zero(p.rows());
  if (others.empty()) return out;
  const MatrixXd sub = submatrix(p, others, others);
  const MatrixXd a = MatrixXd::Identity(others.size(), others.size()) - sub;
  const VectorXd h = solve_checked(a, VectorXd::Ones(others.size()), "target hitting time");
  for (std::size_t i = 0; i < others.size(); ++i) out(others[i]) = h(i);
  return out;
}

}  // namespace detail

/// Random-target hitting time sum_{s'} d(s') E_start[T_{s'}] from a recurrent start.
inline double random_target_time(const MatrixXd& p, const std::vector<int>& cls,
                                 const VectorXd& d, int start) {
  double total = 0.0;
  for (int target : cls) total += d(target) * detail::hitting_times_to(p, cls, target)(start);
  return total;
}

/// Classifies the chain, solves for d, C_hit and C_tar.
///
/// Throws NotUnichain when more than one closed class exists and
/// SingularSystem when a linear solve fails its residual check.
inline ChainAnalysis analyze_chain(const StochasticMatrix& kernel) {
  const MatrixXd& p = kernel.matrix();
  const int n = kernel.size();
  int n_comp = 0;
  const std::vector<int> comp = detail::strongly_connected_components(p, n_comp);

  std::vector<bool> closed(n_comp, true);
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v)
      if (p(u, v) > 0.0 && comp[u] != comp[v]) closed[comp[u]] = false;
  const int n_closed = static_cast<int>(std::count(closed.begin(), closed.end(), true));
  if (n_closed != 1)
    throw NotUnichain("induced chain has " + std::to_string(n_closed) + " closed classes");
  const int rc = static_cast<int>(std::find(closed.begin(), closed.end(), true) - closed.begin());

  ChainAnalysis out;
  for (int s = 0; s < n; ++s) (comp[s] == rc ? out.recurrent_class : out.transient_states).push_back(s);
  out.period = detail::class_period(p, out.recurrent_class);

  // d on the recurrent class: (P_R^T - I) d = 0, 1^T d = 1.
  const auto& R = out.recurrent_class;
  const Eigen::Index k = static_cast<Eigen::Index>(R.size());
  MatrixXd sys(k + 1, k);
  sys.topRows(k) = detail::submatrix(p, R, R).transpose() - MatrixXd::Identity(k, k);
  sys.row(k).setOnes();
  VectorXd rhs = VectorXd::Zero(k + 1);
  rhs(k) = 1.0;
  const VectorXd dr = sys.colPivHouseholderQr().solve(rhs);
  if (!dr.allFinite() || (sys * dr - rhs).norm() > 1e-10)
    throw SingularSystem("stationary distribution solve failed");
  out.stationary_dist = VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < k; ++i) out.stationary_dist(R[i]) = std::max(0.0, dr(i));
  out.stationary_dist /= out.stationary_dist.sum();

  out.hit_times = VectorXd::Zero(n);
  const auto& T = out.transient_states;
  if (!T.empty()) {
    const Eigen::Index m = static_cast<Eigen::Index>(T.size());
    const MatrixXd a = MatrixXd::Identity(m, m) - detail::submatrix(p, T, T);
    const VectorXd h = detail::solve_checked(a, VectorXd::Ones(m), "recurrent-class hitting time");
    for (Eigen::Index i = 0; i < m; ++i) out.hit_times(T[i]) = h(i);
    out.c_hit = h.maxCoeff();
  }

  out.c_tar = random_target_time(p, R, out.stationary_dist, R.front());
  out.c_tar_check = random_target_time(p, R, out.stationary_dist, R.back());
  if (std::abs(out.c_tar - out.c_tar_check) > 1e-8 * std::max(1.0, out.c_tar))
    throw SingularSystem("random-target hitting time depends on the start state: " +
                         std::to_string(out.c_tar) + " vs " + std::to_string(out.c_tar_check));
  return out;
}

/// TV distance between the running Cesaro average (1/t) sum_{i=1}^t P^i(s0, .)
/// and d, for t = 1..t_max.
inline std::vector<double> cesaro_tv_curve(const StochasticMatrix& kernel, int s0, int t_max,
                                           const VectorXd& stationary) {
  if (s0 < 0 || s0 >= kernel.size()) throw InvalidIndex("start state out of range");
  const MatrixXd& p = kernel.matrix();
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(kernel.size());
  row(s0) = 1.0;
  Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(kernel.size());
  const Eigen::RowVectorXd d = stationary.transpose();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(std::max(0, t_max)));
  for (int t = 1; t <= t_max; ++t) {
    row = row * p;
    acc += row;
    out.push_back(0.5 * (acc / static_cast<double>(t) - d).cwiseAbs().sum());
  }
  return out;
}

inline std::vector<double> cesaro_tv_curve(const StochasticMatrix& kernel, int s0, int t_max) {
  return cesaro_tv_curve(kernel, s0, t_max, analyze_chain(kernel).stationary_dist);
}

}  // namespace nacb
