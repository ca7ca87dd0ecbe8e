#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "dualmpc/gp.hpp"
#include "dualmpc/types.hpp"

namespace dmpc::belief {

/// Gaussian state belief over one agent.
struct GaussianBelief {
  Vec5 mean = Vec5::Zero();
  Mat5 covariance = Mat5::Zero();

  static GaussianBelief deterministic(const Vec5& state) {
    return GaussianBelief{state, Mat5::Zero()};
  }

  /// Symmetrizes and floors the eigenvalues at zero (projection back onto the
  /// PSD cone after accumulated round-off).
  void make_psd();
};

/// How the scalar residual enters the target agent's state update, i.e. the
/// column b in  x+ = f(x) + b*d.
struct ResidualChannel {
  Vec5 column = Vec5::Zero();

  /// Residual acting on the forward-speed component.
  static ResidualChannel speed() {
    ResidualChannel c;
    c.column[2] = 1.0;
    return c;
  }

  /// Left pseudo-inverse row: recovers the residual from a state difference.
  double extract(const Vec5& state_delta) const {
    const double nsq = column.squaredNorm();
    return nsq > 0.0 ? column.dot(state_delta) / nsq : 0.0;
  }
};

/// First-order moments of the residual at a Gaussian test input: the residual
/// mean, its cross-covariance with the target state, and its total variance
/// (posterior variance plus the linearized contribution of state uncertainty).
struct TaylorMoments {
  double mean = 0.0;
  Vec5 cross = Vec5::Zero();  ///< cov(state, residual)
  double variance = 0.0;
};

/// Posterior evaluator: any callable mapping a joint test input to mean,
/// variance and mean gradient (exact GP, sparse GP, or a synthetic stand-in).
using PosteriorFn = std::function<gp::PosteriorEval(const Eigen::VectorXd&)>;

/// Linearizes the residual mean around the belief mean. `joint_input` is the
/// full test input with the target agent's state block (at `target_offset`,
/// five entries) set to the belief mean; all other entries are deterministic.
TaylorMoments taylor_moments(const PosteriorFn& posterior,
                             const GaussianBelief& belief,
                             const Eigen::VectorXd& joint_input,
                             Eigen::Index target_offset);

/// Nominal one-step model of the target agent: next mean and Jacobian at the
/// current mean.
struct NominalStep {
  Vec5 next_mean = Vec5::Zero();
  Mat5 jacobian = Mat5::Identity();
};
using NominalModel = std::function<NominalStep(const Vec5& mean)>;

/// One covariance-propagation step:
///   mean+ = f(mean) + b * moments.mean
///   cov+  = F cov F' + F cross b' + b cross' F' + b var b'  (+ process noise)
/// then projected back onto the PSD cone. Residuals at distinct steps are
/// treated as independent, so only the within-step joint appears.
GaussianBelief propagate_step(const NominalStep& nominal,
                              const ResidualChannel& channel,
                              const GaussianBelief& belief,
                              const TaylorMoments& moments,
                              const Mat5& process_noise = Mat5::Zero());

/// Builds the joint test input for a horizon step from the target mean and the
/// deterministic companions (other agents' predicted states, planned input).
using JointInputBuilder =
    std::function<Eigen::VectorXd(int step, const Vec5& target_mean)>;

/// Rolls the belief forward `steps` times, starting from a deterministic
/// state. Returns the trajectory including the initial belief
/// (size steps + 1). Deterministic given its inputs.
std::vector<GaussianBelief> propagate_horizon(
    const PosteriorFn& posterior, const NominalModel& nominal,
    const ResidualChannel& channel, const Vec5& initial_state, int steps,
    const JointInputBuilder& build_input, Eigen::Index target_offset);

}  // namespace dmpc::belief
