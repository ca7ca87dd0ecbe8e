#pragma once

#include "dualmpc/types.hpp"

namespace dmpc::driver {

/// Intelligent-driver-model parameters.
struct IdmParams {
  double desired_speed = 31.0;     ///< [m/s]
  double time_headway = 1.0;       ///< [s]
  double max_accel = 3.0;          ///< [m/s^2]
  double comfortable_decel = 3.0;  ///< [m/s^2]
  double min_gap = 2.0;            ///< [m]
  double accel_exponent = 4.0;
};

/// Follower policy reacting to both its in-lane leader and a laterally
/// encroaching vehicle.
struct MergeReactiveParams {
  IdmParams idm;
  double lane_width = 3.5;            ///< [m]
  double activation_epsilon = 1e-3;   ///< floor on the lateral weight divisor
  double anticipation_time = 0.25;    ///< [s], projects the intruder's speed
  double hard_decel = 5.0;            ///< [m/s^2] braking clamp magnitude
  double hard_accel = 5.0;            ///< [m/s^2] acceleration clamp magnitude
};

/// Car-following acceleration for speed v, bumper gap and closing speed
/// (v - v_lead). Non-positive gaps are the collision regime and return full
/// braking; the result is always clamped to [-hard_decel, hard_accel].
double idm_accel(const IdmParams& params, double v, double gap,
                 double closing_speed, double hard_decel = 5.0,
                 double hard_accel = 5.0);

/// Lateral activation weight in [0, 1]: 1 when the intruder is laterally
/// centered in the follower's lane, 0 beyond one lane width, cubically
/// blended (smoothstep) in between so the output is C^1 in dy.
double lateral_activation(double dy, double lane_width);

/// Merge-reactive acceleration: the minimum of the IDM reaction to the in-lane
/// leader and to the laterally weighted intruder (considered only when it is
/// longitudinally ahead). The intruder's gap is divided by the activation
/// weight, so a vehicle outside the lane is effectively infinitely far away.
double mr_idm_accel(const MergeReactiveParams& params,
                    const AgentState& follower, const AgentState& intruder,
                    const AgentState& leader, double intruder_accel,
                    const VehicleGeometry& geom);

/// Full follower input: merge-reactive acceleration, zero steering rate.
AgentInput follower_input(const MergeReactiveParams& params,
                          const AgentState& follower,
                          const AgentState& intruder, const AgentState& leader,
                          double intruder_accel, const VehicleGeometry& geom);

}  // namespace dmpc::driver
