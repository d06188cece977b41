#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nacb/error.hpp"
#include "nacb/linalg.hpp"
#include "nacb/mdp.hpp"

namespace nacb::linrec {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct NoisyOperator {
  MatrixXd p;
  VectorXd q;
};

/// Called once per step with the step index; must draw from the given rng only.
using OperatorSource = std::function<NoisyOperator(int, Rng&)>;

/// x_{h+1} = x_h - step * (P_h x_h - q_h) for h < horizon, with reference (P, q).
struct RecursionSpec {
  int dim = 0;
  double step = 0.0;
  int horizon = 0;
  OperatorSource source;
  MatrixXd p;
  VectorXd q;
  bool measure = true;  // off skips the per-step norm bookkeeping

  void check() const {
    if (dim <= 0) throw DomainError("recursion dimension must be positive");
    if (!(step > 0.0)) throw DomainError("recursion step must be positive");
    if (horizon <= 0) throw DomainError("recursion horizon must be positive");
    if (!source) throw DomainError("recursion has no operator source");
    if (p.rows() != dim || p.cols() != dim || q.size() != dim)
      throw DimensionMismatch("reference system does not match the recursion dimension");
  }
};

/// Empirical versions of the noise and size constants, measured from the draws.
struct MeasuredConstants {
  double sigma_p = 0.0;     // sqrt(mean ||P_h - P||^2)
  double delta_p = 0.0;     // ||mean P_h - P||
  double sigma_q = 0.0;     // sqrt(mean ||q_h - q||^2)
  double delta_q = 0.0;     // ||mean q_h - q||
  double big_lambda_p = 0.0;  // ||P||
  double big_lambda_q = 0.0;  // ||q||
  double lambda_p = 0.0;      // min of x'Px/|x|^2 over random probes in Ker(P)^perp
  double lambda_p_exact = 0.0;  // smallest eigenvalue of sym(P) on Ker(P)^perp
};

struct RecursionReport {
  VectorXd x_final;
  VectorXd x_star;
  MatrixXd projector;                    // onto Ker(P)^perp
  std::vector<double> projected_error;   // ||Pi(x_h - x*)||, h = 0..H
  MeasuredConstants constants;
  int kernel_violations = 0;   // steps with ||P_h K|| > tolerance
  double kernel_drift = 0.0;   // max_h ||K^T (x_h - x_0)||
};

inline constexpr double kKernelTolerance = 1e-9;
inline constexpr int kCurvatureProbes = 200;

inline MeasuredConstants reference_constants(const MatrixXd& p, const VectorXd& q,
                                             const MatrixXd& row_basis, Rng& rng) {
  MeasuredConstants c;
  c.big_lambda_p = linalg::spectral_norm(p);
  c.big_lambda_q = q.norm();
  c.lambda_p_exact = linalg::restricted_min_eigenvalue(p, row_basis);
  c.lambda_p = std::numeric_limits<double>::infinity();
  if (row_basis.cols() > 0) {
    std::normal_distribution<double> g(0.0, 1.0);
    for (int i = 0; i < kCurvatureProbes; ++i) {
      VectorXd coeff(row_basis.cols());
      for (auto& x : coeff) x = g(rng);
      const VectorXd x = row_basis * coeff;
      c.lambda_p = std::min(c.lambda_p, x.dot(p * x) / x.squaredNorm());
    }
  }
  return c;
}

inline RecursionReport run(const RecursionSpec& spec, const VectorXd& x0, Rng& rng) {
  spec.check();
  if (x0.size() != spec.dim) throw DimensionMismatch("x0 does not match the recursion dimension");

  RecursionReport rep;
  const MatrixXd row_basis = linalg::row_space(spec.p);
  const MatrixXd kernel = linalg::null_space(spec.p);
  rep.projector = row_basis * row_basis.transpose();
  rep.x_star = linalg::pinv(spec.p) * spec.q;
  rep.projected_error.reserve(spec.horizon + 1);

  VectorXd x = x0;
  MatrixXd p_sum = MatrixXd::Zero(spec.dim, spec.dim);
  VectorXd q_sum = VectorXd::Zero(spec.dim);
  double p_sq = 0.0, q_sq = 0.0;
  rep.projected_error.push_back((rep.projector * (x - rep.x_star)).norm());

  for (int h = 0; h < spec.horizon; ++h) {
    const NoisyOperator op = spec.source(h, rng);
    if (op.p.rows() != spec.dim || op.p.cols() != spec.dim || op.q.size() != spec.dim)
      throw DimensionMismatch("operator source returned wrong shapes");
    if (spec.measure) {
      p_sum += op.p;
      q_sum += op.q;
      p_sq += std::pow(linalg::spectral_norm(op.p - spec.p), 2);
      q_sq += (op.q - spec.q).squaredNorm();
      if (kernel.cols() > 0 && (op.p * kernel).norm() > kKernelTolerance) ++rep.kernel_violations;
    }

    x -= spec.step * (op.p * x - op.q);
    if (!x.allFinite()) {
      std::ostringstream msg;
      msg << "non-finite iterate at step " << h + 1 << " (step size " << spec.step
          << ", ||P_h|| = " << linalg::spectral_norm(op.p) << ")";
      throw NonFiniteIterate(msg.str());
    }
    rep.projected_error.push_back((rep.projector * (x - rep.x_star)).norm());
    if (kernel.cols() > 0)
      rep.kernel_drift = std::max(rep.kernel_drift, (kernel.transpose() * (x - x0)).norm());
  }

  rep.x_final = x;
  if (!spec.measure) return rep;
  rep.constants = reference_constants(spec.p, spec.q, row_basis, rng);
  const double n = spec.horizon;
  rep.constants.sigma_p = std::sqrt(p_sq / n);
  rep.constants.sigma_q = std::sqrt(q_sq / n);
  rep.constants.delta_p = linalg::spectral_norm(p_sum / n - spec.p);
  rep.constants.delta_q = (q_sum / n - spec.q).norm();
  return rep;
}

/// Synthetic P = U (D + S) U^T with U an orthonormal basis of an (n - kernel_dim)
/// dimensional subspace, D diagonal with smallest entry lambda_p and S skew.
struct SyntheticSystem {
  int dim = 8;
  int kernel_dim = 0;
  double lambda_p = 0.5;
  double big_lambda_p = 1.0;
  double skew = 0.0;
  std::uint64_t seed = 1;
};

struct SyntheticInstance {
  MatrixXd p;
  VectorXd q;
  MatrixXd row_basis;  // U
  MatrixXd kernel_basis;
};

inline MatrixXd gaussian_matrix(int rows, int cols, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

inline SyntheticInstance make_system(const SyntheticSystem& sys) {
  if (sys.kernel_dim < 0 || sys.kernel_dim >= sys.dim)
    throw DomainError("kernel dimension must lie in [0, dim)");
  if (!(sys.lambda_p > 0.0) || sys.big_lambda_p < sys.lambda_p)
    throw DomainError("need 0 < lambda_p <= big_lambda_p");
  Rng rng(sys.seed);
  const int r = sys.dim - sys.kernel_dim;
  const MatrixXd qfull = gaussian_matrix(sys.dim, sys.dim, rng).householderQr().householderQ();
  SyntheticInstance out;
  out.row_basis = qfull.leftCols(r);
  out.kernel_basis = qfull.rightCols(sys.kernel_dim);

  // Diagonal part in [lambda_p, big_lambda_p - skew] keeps ||D + S|| <= big_lambda_p.
  const double top = sys.big_lambda_p - sys.skew;
  if (top < sys.lambda_p) throw DomainError("skew too large for the requested spectrum");
  std::uniform_real_distribution<double> u(sys.lambda_p, top);
  VectorXd diag(r);
  for (auto& x : diag) x = u(rng);
  diag(0) = sys.lambda_p;
  if (r > 1) diag(r - 1) = top;
  MatrixXd core = diag.asDiagonal();
  if (sys.skew > 0.0 && r > 1) {
    const MatrixXd g = gaussian_matrix(r, r, rng);
    const MatrixXd s = g - g.transpose();
    core += s * (sys.skew / linalg::spectral_norm(s));
  }
  out.p = out.row_basis * core * out.row_basis.transpose();
  VectorXd coeff = gaussian_matrix(r, 1, rng).col(0);
  out.q = out.p * (out.row_basis * coeff) / coeff.norm();
  return out;
}

/// Noise model: P_h = P + delta_p E_P + sigma_p G_h, q_h = q + delta_q e_q + sigma_q g_h,
/// with every perturbation confined to Ker(P)^perp so the kernel is shared.
struct NoiseLevels {
  double sigma_p = 0.0;
  double sigma_q = 0.0;
  double delta_p = 0.0;
  double delta_q = 0.0;
};

inline OperatorSource synthetic_source(const SyntheticInstance& inst, const NoiseLevels& noise,
                                       std::uint64_t direction_seed = 99) {
  const int n = static_cast<int>(inst.p.rows());
  const MatrixXd proj = inst.row_basis * inst.row_basis.transpose();
  Rng dir_rng(direction_seed);
  MatrixXd bias_p = proj * gaussian_matrix(n, n, dir_rng) * proj;
  if (bias_p.norm() > 0.0) bias_p /= linalg::spectral_norm(bias_p);
  VectorXd bias_q = proj * gaussian_matrix(n, 1, dir_rng).col(0);
  if (bias_q.norm() > 0.0) bias_q /= bias_q.norm();
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  return [=](int, Rng& rng) {
    NoisyOperator op{inst.p + noise.delta_p * bias_p, inst.q + noise.delta_q * bias_q};
    if (noise.sigma_p > 0.0)
      op.p += noise.sigma_p * scale * (proj * gaussian_matrix(n, n, rng) * proj);
    if (noise.sigma_q > 0.0)
      op.q += noise.sigma_q * scale * (proj * gaussian_matrix(n, 1, rng).col(0));
    return op;
  };
}

struct BoundCheckConfig {
  SyntheticSystem system;
  int horizon = 200;
  int noisy_horizon = 200;
  double sigma = 0.2;     // noise level before halving
  double delta_q = 0.2;   // bias level before halving
  double delta_p = 0.0;
  double step = 0.0;      // 0 picks lambda_p / big_lambda_p
  std::uint64_t seed = 5;
};

struct BoundCheckResult {
  bool passed = false;
  bool precondition_ok = true;
  std::string precondition_message;
  double step = 0.0;
  double lambda_p = 0.0;
  double max_factor = 0.0;     // largest zero-noise per-step contraction
  double factor_bound = 0.0;   // 1 - step * lambda_p / 4
  double zero_noise_final = 0.0;
  double floor = 0.0;          // mean ||Pi e_H||^2 at sigma
  double floor_half = 0.0;     // ... at sigma / 2
  double floor_ratio = 0.0;
  double bias = 0.0;           // ||Pi(mean x_H - x*)||^2 at delta_q
  double bias_half = 0.0;
  double bias_ratio = 0.0;
  bool kernel_preserved = true;
};

inline constexpr double kFloorRatioBound = 0.6;
inline constexpr double kBiasRatioBound = 0.35;

/// Largest ||Pi e_{h+1}|| / ||Pi e_h|| over steps where ||Pi e_h|| is above round-off.
inline double max_contraction_factor(const std::vector<double>& err, double floor = 1e-11) {
  double worst = 0.0;
  for (std::size_t h = 0; h + 1 < err.size(); ++h)
    if (err[h] > floor) worst = std::max(worst, err[h + 1] / err[h]);
  return worst;
}

inline BoundCheckResult verify_recursion_bound(const BoundCheckConfig& cfg, int trials) {
  BoundCheckResult res;
  const SyntheticInstance inst = make_system(cfg.system);
  const MatrixXd row_basis = linalg::row_space(inst.p);
  res.lambda_p = linalg::restricted_min_eigenvalue(inst.p, row_basis);
  const double big_lambda = linalg::spectral_norm(inst.p);
  res.step = cfg.step > 0.0 ? cfg.step : res.lambda_p / big_lambda;
  res.factor_bound = 1.0 - res.step * res.lambda_p / 4.0;

  if (cfg.delta_p > res.lambda_p / 8.0) {
    res.precondition_ok = false;
    std::ostringstream msg;
    msg << "delta_P = " << cfg.delta_p << " exceeds lambda_P / 8 = " << res.lambda_p / 8.0
        << "; rate assertions skipped";
    res.precondition_message = msg.str();
    return res;
  }

  Rng rng(cfg.seed);
  const int n = cfg.system.dim;
  auto make_spec = [&](const NoiseLevels& noise, int horizon) {
    RecursionSpec spec;
    spec.dim = n;
    spec.step = res.step;
    spec.horizon = horizon;
    spec.source = synthetic_source(inst, noise);
    spec.p = inst.p;
    spec.q = inst.q;
    spec.measure = false;
    return spec;
  };
  auto start = [&](Rng& r) { return VectorXd(gaussian_matrix(n, 1, r).col(0)); };

  // (i) zero noise: geometric phase.
  {
    auto spec = make_spec(NoiseLevels{}, cfg.horizon);
    spec.measure = true;
    const auto rep = run(spec, start(rng), rng);
    res.max_factor = max_contraction_factor(rep.projected_error);
    res.zero_noise_final = rep.projected_error.back();
    res.kernel_preserved = rep.kernel_violations == 0 && rep.kernel_drift <= 1e-9;
  }

  // (ii) variance floor under halving of sigma_P and sigma_q.
  auto mean_sq_error = [&](double sigma) {
    double acc = 0.0;
    const auto spec = make_spec(NoiseLevels{sigma, sigma, cfg.delta_p, 0.0}, cfg.noisy_horizon);
    for (int t = 0; t < trials; ++t) {
      const auto rep = run(spec, start(rng), rng);
      acc += std::pow(rep.projected_error.back(), 2);
    }
    return acc / trials;
  };
  res.floor = mean_sq_error(cfg.sigma);
  res.floor_half = mean_sq_error(cfg.sigma / 2);
  res.floor_ratio = res.floor_half / res.floor;

  // (iii) bias of the mean iterate under halving of delta_q.
  auto mean_bias = [&](double delta_q) {
    const auto spec = make_spec(NoiseLevels{0.0, cfg.sigma, cfg.delta_p, delta_q}, cfg.noisy_horizon);
    VectorXd mean = VectorXd::Zero(n);
    VectorXd x_star;
    MatrixXd proj;
    for (int t = 0; t < trials; ++t) {
      const auto rep = run(spec, start(rng), rng);
      mean += rep.x_final;
      x_star = rep.x_star;
      proj = rep.projector;
    }
    mean /= trials;
    return (proj * (mean - x_star)).squaredNorm();
  };
  res.bias = mean_bias(cfg.delta_q);
  res.bias_half = mean_bias(cfg.delta_q / 2);
  res.bias_ratio = res.bias_half / res.bias;

  res.passed = res.max_factor <= res.factor_bound + 1e-10 && res.zero_noise_final <= 1e-12 &&
               res.floor_ratio <= kFloorRatioBound && res.bias_ratio <= kBiasRatioBound &&
               res.kernel_preserved;
  return res;
}

}  // namespace nacb::linrec
