#include "dualmpc/belief.hpp"

#include <stdexcept>

namespace dmpc::belief {

void GaussianBelief::make_psd() {
  covariance = 0.5 * (covariance + covariance.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Mat5> eig(covariance);
  if (eig.info() != Eigen::Success) {
    throw NumericalError("belief covariance eigendecomposition failed");
  }
  if (eig.eigenvalues().minCoeff() >= 0.0) {
    return;
  }
  const Vec5 floored = eig.eigenvalues().cwiseMax(0.0);
  covariance =
      eig.eigenvectors() * floored.asDiagonal() * eig.eigenvectors().transpose();
}

TaylorMoments taylor_moments(const PosteriorFn& posterior,
                             const GaussianBelief& belief,
                             const Eigen::VectorXd& joint_input,
                             Eigen::Index target_offset) {
  if (target_offset < 0 || target_offset + 5 > joint_input.size()) {
    throw std::invalid_argument("target state block out of joint-input range");
  }
  const gp::PosteriorEval eval = posterior(joint_input);
  if (eval.mean_gradient.size() != joint_input.size()) {
    throw std::invalid_argument("posterior gradient dimension mismatch");
  }
  const Vec5 grad = eval.mean_gradient.segment<5>(target_offset);
  TaylorMoments out;
  out.mean = eval.mean;
  out.cross = belief.covariance * grad;
  out.variance = eval.variance + grad.dot(out.cross);
  return out;
}

GaussianBelief propagate_step(const NominalStep& nominal,
                              const ResidualChannel& channel,
                              const GaussianBelief& belief,
                              const TaylorMoments& moments,
                              const Mat5& process_noise) {
  const Mat5& f = nominal.jacobian;
  const Vec5& b = channel.column;
  GaussianBelief next;
  next.mean = nominal.next_mean + b * moments.mean;
  const Vec5 fc = f * moments.cross;
  next.covariance = f * belief.covariance * f.transpose() +
                    fc * b.transpose() + b * fc.transpose() +
                    moments.variance * (b * b.transpose()) + process_noise;
  next.make_psd();
  return next;
}

std::vector<GaussianBelief> propagate_horizon(
    const PosteriorFn& posterior, const NominalModel& nominal,
    const ResidualChannel& channel, const Vec5& initial_state, int steps,
    const JointInputBuilder& build_input, Eigen::Index target_offset) {
  if (steps < 0) {
    throw std::invalid_argument("horizon length must be >= 0");
  }
  std::vector<GaussianBelief> out;
  out.reserve(static_cast<std::size_t>(steps) + 1);
  out.push_back(GaussianBelief::deterministic(initial_state));
  for (int i = 0; i < steps; ++i) {
    const GaussianBelief& cur = out.back();
    const Eigen::VectorXd joint = build_input(i, cur.mean);
    const TaylorMoments moments =
        taylor_moments(posterior, cur, joint, target_offset);
    out.push_back(propagate_step(nominal(cur.mean), channel, cur, moments));
  }
  return out;
}

}  // namespace dmpc::belief
