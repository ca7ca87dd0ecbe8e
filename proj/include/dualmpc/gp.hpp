#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "dualmpc/types.hpp"

namespace dmpc::gp {

/// Squared-exponential kernel on linearly mapped features:
///   k(z, z') = prior_variance * exp(-0.5 * || (F z - F z') ./ length_scales ||^2)
/// where F is the feature map. One length scale per feature row.
struct KernelParams {
  double prior_variance = 0.3;
  Eigen::VectorXd length_scales;  ///< one per feature (row of feature_map)
  double noise_variance = 0.0;
  Eigen::MatrixXd feature_map;    ///< features x raw-input-dim, full row rank

  Eigen::Index feature_count() const { return feature_map.rows(); }
  Eigen::Index input_dim() const { return feature_map.cols(); }

  /// Throws std::invalid_argument on non-positive variance/scales, size
  /// mismatches, or a rank-deficient feature map.
  void validate() const;
};

double kernel_eval(const KernelParams& params, const Eigen::VectorXd& a,
                   const Eigen::VectorXd& b);

/// Ordered set of (input, residual) pairs. With a nonzero capacity the set is
/// a FIFO window: appending beyond capacity evicts the oldest pair.
class TrainingSet {
 public:
  TrainingSet() = default;
  explicit TrainingSet(std::size_t capacity) : capacity_(capacity) {}

  void append(const Eigen::VectorXd& input, double output);
  std::size_t size() const { return inputs_.size(); }
  bool empty() const { return inputs_.empty(); }
  const Eigen::VectorXd& input(std::size_t i) const { return inputs_.at(i); }
  double output(std::size_t i) const { return outputs_.at(i); }

 private:
  std::vector<Eigen::VectorXd> inputs_;
  std::vector<double> outputs_;
  std::size_t capacity_ = 0;  ///< 0 = unbounded
};

/// Posterior of the scalar residual at one test input.
struct PosteriorEval {
  double mean = 0.0;
  double variance = 0.0;
  Eigen::VectorXd mean_gradient;  ///< d mean / d raw input
};

/// Posterior with the extra derivatives the planner needs for exact
/// constraint/objective gradients.
struct PosteriorDerivatives {
  double mean = 0.0;
  double variance = 0.0;
  Eigen::VectorXd mean_gradient;
  Eigen::MatrixXd mean_hessian;       ///< d^2 mean / d input^2
  Eigen::VectorXd variance_gradient;  ///< d variance / d input
};

/// Exact GP regressor with zero prior mean. Immutable after fit; posterior
/// queries are const and safe to run concurrently.
class GpModel {
 public:
  /// Factorizes the regularized Gram matrix with adaptive jitter
  /// (1e-10 * prior_variance, escalating tenfold up to 1e-4 * prior_variance).
  /// Throws NumericalError when the factorization stays indefinite.
  static GpModel fit(const KernelParams& params, const TrainingSet& data);

  PosteriorEval posterior(const Eigen::VectorXd& z) const;
  PosteriorDerivatives posterior_derivatives(const Eigen::VectorXd& z) const;

  std::size_t size() const { return static_cast<std::size_t>(y_.size()); }
  double jitter() const { return jitter_; }
  const KernelParams& params() const { return params_; }

 private:
  KernelParams params_;
  Eigen::MatrixXd features_;  ///< mapped training inputs, features x n
  Eigen::VectorXd y_;
  Eigen::LLT<Eigen::MatrixXd> gram_llt_;  ///< of K + (noise + jitter) I
  Eigen::VectorXd alpha_;                 ///< (K + (noise + jitter) I)^-1 y
  double jitter_ = 0.0;
};

/// Sparse GP regressor (fully independent training conditional family).
/// The predictive cost depends only on the inducing-set size, never on the
/// number of training pairs. With inducing inputs equal to the training inputs
/// it reproduces the exact GP up to jitter-level differences; with no training
/// pairs it returns the prior exactly.
class SparseGpModel {
 public:
  static SparseGpModel fit(const KernelParams& params, const TrainingSet& data,
                           const std::vector<Eigen::VectorXd>& inducing);

  PosteriorEval posterior(const Eigen::VectorXd& z) const;
  PosteriorDerivatives posterior_derivatives(const Eigen::VectorXd& z) const;

  std::size_t inducing_count() const {
    return static_cast<std::size_t>(inducing_features_.cols());
  }
  std::size_t training_count() const { return training_count_; }
  const KernelParams& params() const { return params_; }

 private:
  KernelParams params_;
  Eigen::MatrixXd inducing_features_;      ///< features x M
  Eigen::LLT<Eigen::MatrixXd> kmm_llt_;    ///< of K_MM + jitter I
  Eigen::LLT<Eigen::MatrixXd> bmm_llt_;    ///< of K_MM + K_MN Lam^-1 K_NM (+ jitter)
  Eigen::VectorXd weights_;                ///< posterior mean = k_zM . weights
  std::size_t training_count_ = 0;
};

}  // namespace dmpc::gp
