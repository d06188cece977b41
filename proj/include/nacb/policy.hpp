#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <string>
#include <utility>

#include "nacb/error.hpp"
#include "nacb/mdp.hpp"

namespace nacb {

/// Feature map psi(s, a) in R^d, stored as an (S*A) x d matrix with row s*A + a.
class PolicyFeatures {
 public:
  PolicyFeatures(int n_states, int n_actions, MatrixXd rows, bool tabular = false)
      : n_states_(n_states), n_actions_(n_actions), rows_(std::move(rows)), tabular_(tabular) {
    if (rows_.rows() != static_cast<Eigen::Index>(n_states) * n_actions)
      throw DimensionMismatch("policy feature matrix must have S*A rows");
    if (!rows_.allFinite()) throw InvalidModel("policy features must be finite");
  }

  /// One-hot features, d = S*A.
  static PolicyFeatures tabular(int n_states, int n_actions) {
    const Eigen::Index n = static_cast<Eigen::Index>(n_states) * n_actions;
    return PolicyFeatures(n_states, n_actions, MatrixXd::Identity(n, n), true);
  }

  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  int dim() const { return static_cast<int>(rows_.cols()); }
  bool is_tabular() const { return tabular_; }
  auto row(int s, int a) const { return rows_.row(static_cast<Eigen::Index>(s) * n_actions_ + a); }
  const MatrixXd& matrix() const { return rows_; }

 private:
  int n_states_;
  int n_actions_;
  MatrixXd rows_;
  bool tabular_;
};

/// Softmax policy pi(a|s) proportional to exp(theta . psi(s,a)).
///
/// Value type: probabilities and per-state mean features are cached at
/// construction, and update() returns a new policy.
class SoftmaxPolicy {
 public:
  SoftmaxPolicy(std::shared_ptr<const PolicyFeatures> features, VectorXd theta)
      : features_(std::move(features)), theta_(std::move(theta)) {
    if (!features_) throw InvalidModel("policy features missing");
    if (theta_.size() != features_->dim())
      throw DimensionMismatch("theta has dimension " + std::to_string(theta_.size()) +
                              ", features have " + std::to_string(features_->dim()));
    refresh();
  }

  static SoftmaxPolicy tabular(int n_states, int n_actions) {
    auto f = std::make_shared<const PolicyFeatures>(PolicyFeatures::tabular(n_states, n_actions));
    return SoftmaxPolicy(f, VectorXd::Zero(f->dim()));
  }
  static SoftmaxPolicy tabular(int n_states, int n_actions, VectorXd theta) {
    auto f = std::make_shared<const PolicyFeatures>(PolicyFeatures::tabular(n_states, n_actions));
    return SoftmaxPolicy(f, std::move(theta));
  }

  int n_states() const { return features_->n_states(); }
  int n_actions() const { return features_->n_actions(); }
  int dim() const { return features_->dim(); }
  const VectorXd& theta() const { return theta_; }
  const PolicyFeatures& features() const { return *features_; }
  std::shared_ptr<const PolicyFeatures> features_ptr() const { return features_; }

  VectorXd action_probs(int s) const { return probs_.row(s).transpose(); }
  double prob(int s, int a) const { return probs_(s, a); }
  const ActionTable& table() const { return probs_; }

  double log_prob(int s, int a) const { return logits_(s, a) - log_norm_(s); }

  /// grad_theta log pi(a|s) = psi(s,a) - sum_a' pi(a'|s) psi(s,a').
  VectorXd score(int s, int a) const {
    return features_->row(s, a).transpose() - mean_features_.row(s).transpose();
  }

  int sample_action(int s, Rng& rng) const { return sample_index(probs_.row(s), rng); }

  /// theta <- theta + alpha * omega.
  SoftmaxPolicy update(const VectorXd& omega, double alpha) const {
    if (omega.size() != theta_.size())
      throw DimensionMismatch("update direction has wrong dimension");
    return SoftmaxPolicy(features_, theta_ + alpha * omega);
  }

  SoftmaxPolicy with_theta(VectorXd theta) const { return SoftmaxPolicy(features_, std::move(theta)); }

 private:
  void refresh() {
    const int S = n_states();
    const int A = n_actions();
    logits_.resize(S, A);
    probs_.resize(S, A);
    log_norm_.resize(S);
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) logits_(s, a) = features_->row(s, a).dot(theta_);
      const double mx = logits_.row(s).maxCoeff();
      const Eigen::RowVectorXd e = (logits_.row(s).array() - mx).exp().matrix();
      const double z = e.sum();
      probs_.row(s) = e / z;
      log_norm_(s) = mx + std::log(z);
    }
    mean_features_ = MatrixXd::Zero(S, dim());
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) mean_features_.row(s) += probs_(s, a) * features_->row(s, a);
  }

  std::shared_ptr<const PolicyFeatures> features_;
  VectorXd theta_;
  MatrixXd logits_;
  ActionTable probs_;
  VectorXd log_norm_;
  MatrixXd mean_features_;
};

inline StochasticMatrix induced_kernel(const TabularMdp& mdp, const SoftmaxPolicy& policy) {
  if (policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions())
    throw DimensionMismatch("policy dimensions do not match the MDP");
  return induced_kernel(mdp, policy.table());
}

}  // namespace nacb
