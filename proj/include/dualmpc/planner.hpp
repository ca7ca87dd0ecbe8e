#pragma once

#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "dualmpc/belief.hpp"
#include "dualmpc/gp.hpp"
#include "dualmpc/solver.hpp"
#include "dualmpc/types.hpp"

namespace dmpc::plan {

/// Lane layout of the merge: the ego's lane centerline blends from the merge
/// lane into the target lane between merge_start_x and merge_end_x with a
/// C^1 cubic (smoothstep) ramp.
struct MergeLaneGeometry {
  double merge_center_y = 0.0;   ///< [m] centerline of the closing lane
  double target_center_y = 3.5;  ///< [m] centerline of the through lane
  double lane_width = 3.5;       ///< [m]
  double merge_start_x = 20.0;   ///< [m] ramp start
  double merge_end_x = 60.0;     ///< [m] lane fully closed

  double centerline(double x) const;
  double centerline_slope(double x) const;
};

/// Right road boundary value for the ego body (<= 0 keeps the body on-road):
///   centerline(x) - y + (body_width - lane_width) / 2
double road_boundary_value(const MergeLaneGeometry& lane,
                           const VehicleGeometry& vehicle,
                           const AgentState& state);

/// Diagonal tracking/effort weights of the stage cost.
struct PlannerWeights {
  Vec5 state = (Vec5() << 0.0, 1.0, 1.0, 10.0, 10.0).finished();
  Vec2 input = Vec2(0.1, 10.0);
  Vec2 input_rate = Vec2(1.0, 100.0);
  double collision_penalty = 1e4;  ///< L1 weight on softened collision rows
};

/// Uncertainty-tightened elliptic separation constraint.
struct CollisionEllipse {
  double semi_major = 6.5;  ///< [m] longitudinal semi-axis
  double semi_minor = 2.2;  ///< [m] lateral semi-axis
  double sigma = 2.0;       ///< tightening multiplier on sqrt(position var)
};

/// Value of the tightened constraint (<= 0 is separated):
///   1 - dcx^2 / (semi_major + sigma*sqrt(var + eps))^2 - dcy^2 / semi_minor^2
/// Monotone non-decreasing in the position variance: uncertainty only ever
/// shrinks the feasible set.
double tightened_collision_value(const CollisionEllipse& ellipse, double dcx,
                                 double dcy, double position_variance);

/// Body centroid: rear axle advanced half a body length along the heading.
Eigen::Vector2d body_centroid(const AgentState& state,
                              const VehicleGeometry& vehicle);

/// Hard limits on the ego plan.
struct EgoBounds {
  double accel_max = 5.0;                       ///< [m/s^2]
  double steer_rate_max = deg_to_rad(5.0);      ///< [rad/s]
  double speed_max = 36.0;                      ///< [m/s]
  double heading_max = deg_to_rad(15.0);        ///< [rad]
  double steer_max = deg_to_rad(5.0);           ///< [rad]
};

/// Reference state at a rolled-out ego position: ride the lane centerline at
/// the target speed with zero heading and steering.
Vec5 reference_state(const MergeLaneGeometry& lane, double x,
                     double target_speed);

/// Everything one planning instance needs besides the residual model.
struct MergeScene {
  AgentState ego;
  AgentState follower;
  AgentState leader;
  AgentInput previous_input;  ///< anchors the first input-rate term
  int horizon = 12;
  double dt = 0.25;
  double target_speed = 31.0;
  double residual_prior_variance = 0.3;  ///< per-step speed-residual variance
  VehicleGeometry vehicle;
  MergeLaneGeometry lane;
  PlannerWeights weights;
  CollisionEllipse ellipse;
  EgoBounds bounds;
};

/// Layout of the joint residual-model input
/// z = (ego state, follower state, leader state, ego input).
inline constexpr Eigen::Index kJointDim = 17;
inline constexpr Eigen::Index kFollowerBlock = 5;

Eigen::VectorXd joint_input(const Vec5& ego, const Vec5& follower,
                            const Vec5& leader, const Vec2& input);

/// Feature map of the interaction kernel: the three forward speeds, the
/// follower's longitudinal offsets to ego and leader, and the follower's
/// lateral offset to the ego.
Eigen::MatrixXd joint_feature_map();

/// Optimal-control problem with the learned residual model in the follower
/// prediction (uncertainty propagated through the plan, so planned inputs
/// shape both the predicted mean and the predicted covariance).
nlp::OcpSpec assemble_gp_mpc(const MergeScene& scene,
                             std::shared_ptr<const gp::SparseGpModel> model);

/// Baseline problem: constant-velocity follower model with a fixed per-step
/// speed-residual variance. Follower mean and covariance trajectories do not
/// depend on the planned inputs.
nlp::OcpSpec assemble_cv_mpc(const MergeScene& scene);

/// Posterior evaluator with constant prior variance and zero mean, used by
/// the baseline branch and by prior-equivalence checks.
belief::PosteriorFn prior_posterior(double variance);

/// Deterministic ego rollout under a stacked input sequence (size 2*horizon).
/// Returns horizon+1 states including the initial one.
std::vector<AgentState> rollout_ego(const MergeScene& scene,
                                    const Eigen::VectorXd& inputs);

/// Leader rollout (constant speed, straight).
std::vector<AgentState> rollout_leader(const MergeScene& scene, int steps);

/// Follower belief trajectory under fixed ego inputs: constant-velocity
/// nominal plus the residual posterior, propagated with linearized moments.
std::vector<belief::GaussianBelief> predict_follower(
    const MergeScene& scene, const belief::PosteriorFn& posterior,
    const Eigen::VectorXd& inputs);

/// Joint-input trajectory of a solved plan (horizon+1 points; the terminal
/// point reuses the last input), the pool inducing points are drawn from.
std::vector<Eigen::VectorXd> joint_trajectory(const MergeScene& scene,
                                              const belief::PosteriorFn& posterior,
                                              const Eigen::VectorXd& inputs);

/// Picks `count` equidistant points along a previous joint-input trajectory
/// (first and last included; single point takes the middle; duplicates from a
/// short trajectory are dropped).
std::vector<Eigen::VectorXd> select_inducing(
    const std::vector<Eigen::VectorXd>& trajectory, int count);

}  // namespace dmpc::plan
