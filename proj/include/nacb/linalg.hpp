#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

namespace nacb {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Relative singular-value cutoff shared by every pseudoinverse, null space
/// and projector in the library.
inline constexpr double kPinvCutoff = 1e-10;
// Singular values below this are treated as zero regardless of scale.
inline constexpr double kAbsoluteRankFloor = 1e-13;

namespace linalg {

/// Largest singular value (operator 2-norm).
inline double spectral_norm(const MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<MatrixXd> svd(m);
  return svd.singularValues()(0);
}

/// Singular values below cutoff * sigma_max count as zero.
inline Eigen::Index numerical_rank(const Eigen::JacobiSVD<MatrixXd>& svd,
                                   double cutoff = kPinvCutoff) {
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) <= kAbsoluteRankFloor) return 0;
  const double tol = std::max(cutoff * sv(0), kAbsoluteRankFloor);
  Eigen::Index r = 0;
  while (r < sv.size() && sv(r) > tol) ++r;
  return r;
}

inline MatrixXd pinv(const MatrixXd& m, double cutoff = kPinvCutoff) {
  Eigen::JacobiSVD<MatrixXd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Index r = numerical_rank(svd, cutoff);
  MatrixXd out = MatrixXd::Zero(m.cols(), m.rows());
  for (Eigen::Index i = 0; i < r; ++i) {
    out += svd.matrixV().col(i) * (1.0 / svd.singularValues()(i)) *
           svd.matrixU().col(i).transpose();
  }
  return out;
}

/// Orthonormal basis of Ker(m), one column per direction (possibly zero columns).
inline MatrixXd null_space(const MatrixXd& m, double cutoff = kPinvCutoff) {
  Eigen::JacobiSVD<MatrixXd> svd(m, Eigen::ComputeFullV);
  const Eigen::Index r = numerical_rank(svd, cutoff);
  return svd.matrixV().rightCols(m.cols() - r);
}

/// Orthonormal basis of Ker(m)^perp, i.e. the row space of m.
inline MatrixXd row_space(const MatrixXd& m, double cutoff = kPinvCutoff) {
  Eigen::JacobiSVD<MatrixXd> svd(m, Eigen::ComputeFullV);
  const Eigen::Index r = numerical_rank(svd, cutoff);
  return svd.matrixV().leftCols(r);
}

/// Orthonormal basis of range(m).
inline MatrixXd range_space(const MatrixXd& m, double cutoff = kPinvCutoff) {
  Eigen::JacobiSVD<MatrixXd> svd(m, Eigen::ComputeFullU);
  const Eigen::Index r = numerical_rank(svd, cutoff);
  return svd.matrixU().leftCols(r);
}

/// Orthogonal projector onto Ker(m)^perp.
inline MatrixXd kernel_complement_projector(const MatrixXd& m,
                                            double cutoff = kPinvCutoff) {
  const MatrixXd basis = row_space(m, cutoff);
  return basis * basis.transpose();
}

inline double condition_number(const MatrixXd& m) {
  Eigen::JacobiSVD<MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0) return 1.0;
  const double smallest = sv(sv.size() - 1);
  if (smallest == 0.0) return std::numeric_limits<double>::infinity();
  return sv(0) / smallest;
}

inline MatrixXd symmetric_part(const MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

/// Largest principal angle (radians) between the column spans of two
/// orthonormal bases. Bases of different dimension give pi/2.
inline double max_principal_angle(const MatrixXd& a, const MatrixXd& b) {
  if (a.cols() != b.cols()) return std::acos(0.0);
  if (a.cols() == 0) return 0.0;
  // sin of the largest angle is the norm of b's residual off span(a).
  const MatrixXd residual = b - a * (a.transpose() * b);
  return std::asin(std::min(1.0, spectral_norm(residual)));
}

/// Smallest eigenvalue of the symmetric part of m restricted to span(basis).
inline double restricted_min_eigenvalue(const MatrixXd& m, const MatrixXd& basis) {
  if (basis.cols() == 0) return std::numeric_limits<double>::infinity();
  const MatrixXd reduced = basis.transpose() * symmetric_part(m) * basis;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(reduced, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

inline bool all_finite(const MatrixXd& m) { return m.allFinite(); }

}  // namespace linalg
}  // namespace nacb
