#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>

#include "nacb/error.hpp"
#include "nacb/linalg.hpp"

namespace nacb {

/// State features phi(s) in R^m for the linear critic, one row per state.
/// Every row must satisfy ||phi(s)|| <= 1.
class CriticFeatures {
 public:
  explicit CriticFeatures(MatrixXd rows) : rows_(std::move(rows)) {
    for (Eigen::Index s = 0; s < rows_.rows(); ++s) {
      const double n = rows_.row(s).norm();
      if (!(n <= 1.0 + 1e-12))
        throw FeatureNormViolation("||phi(" + std::to_string(s) + ")|| = " + std::to_string(n) +
                                   " exceeds 1");
    }
  }

  static CriticFeatures one_hot(int n_states) {
    return CriticFeatures(MatrixXd::Identity(n_states, n_states));
  }
  static CriticFeatures constant(int n_states, int dim, double value) {
    return CriticFeatures(MatrixXd::Constant(n_states, dim, value));
  }

  int n_states() const { return static_cast<int>(rows_.rows()); }
  int dim() const { return static_cast<int>(rows_.cols()); }
  auto row(int s) const { return rows_.row(s); }
  const MatrixXd& matrix() const { return rows_; }

 private:
  MatrixXd rows_;
};

}  // namespace nacb
