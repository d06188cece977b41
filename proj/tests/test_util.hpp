#pragma once

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include <random>

#include "nacb/mdp.hpp"

namespace nacb::testing {

inline ::testing::AssertionResult near(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want,
                                       double tol) {
  if (got.rows() != want.rows() || got.cols() != want.cols())
    return ::testing::AssertionFailure() << "shape " << got.rows() << "x" << got.cols()
                                         << " vs " << want.rows() << "x" << want.cols();
  const double err = (got - want).cwiseAbs().maxCoeff();
  if (err <= tol) return ::testing::AssertionSuccess();
  return ::testing::AssertionFailure() << "max abs error " << err << " > " << tol << "\ngot:\n"
                                       << got << "\nwant:\n"
                                       << want;
}

inline Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

inline Eigen::VectorXd gaussian_vector(int n, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Eigen::VectorXd v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

}  // namespace nacb::testing
