#include "dualmpc/driver.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dmpc::driver {

namespace {

void check_params(const IdmParams& p) {
  if (!(p.desired_speed > 0.0) || !(p.time_headway >= 0.0) ||
      !(p.max_accel > 0.0) || !(p.comfortable_decel > 0.0) ||
      !(p.min_gap >= 0.0)) {
    throw std::invalid_argument("invalid car-following parameters");
  }
}

double free_road_accel(const IdmParams& p, double v) {
  return p.max_accel *
         (1.0 - std::pow(std::max(0.0, v) / p.desired_speed, p.accel_exponent));
}

}  // namespace

double idm_accel(const IdmParams& params, double v, double gap,
                 double closing_speed, double hard_decel, double hard_accel) {
  check_params(params);
  if (gap <= 0.0) {
    return -hard_decel;  // collision regime
  }
  const double desired_gap =
      params.min_gap + v * params.time_headway +
      v * closing_speed /
          (2.0 * std::sqrt(params.max_accel * params.comfortable_decel));
  const double ratio = desired_gap / gap;
  const double a = free_road_accel(params, v) - params.max_accel * ratio * ratio;
  return std::clamp(a, -hard_decel, hard_accel);
}

double lateral_activation(double dy, double lane_width) {
  if (!(lane_width > 0.0)) {
    throw std::invalid_argument("lane width must be positive");
  }
  const double t = std::clamp(1.0 - std::abs(dy) / lane_width, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);  // smoothstep: C^1 at both clamp boundaries
}

double mr_idm_accel(const MergeReactiveParams& params,
                    const AgentState& follower, const AgentState& intruder,
                    const AgentState& leader, double intruder_accel,
                    const VehicleGeometry& geom) {
  const double gap_leader = (leader.x - follower.x) - geom.length;
  double accel =
      idm_accel(params.idm, follower.speed, gap_leader,
                follower.speed - leader.speed, params.hard_decel,
                params.hard_accel);

  // The intruder matters only once it is longitudinally ahead.
  if (intruder.x > follower.x) {
    const double g =
        lateral_activation(intruder.y - follower.y, params.lane_width);
    const double gap = (intruder.x - follower.x) - geom.length;
    double candidate;
    if (gap <= 0.0) {
      // Longitudinal overlap: hard braking when the intruder is laterally
      // engaged, free-road behaviour when it is still in its own lane,
      // blended by the activation weight to stay continuous in dy.
      candidate = g * (-params.hard_decel) +
                  (1.0 - g) * std::clamp(free_road_accel(params.idm,
                                                         follower.speed),
                                         -params.hard_decel, params.hard_accel);
    } else {
      // An intruder with low lateral engagement looks proportionally
      // farther away.
      const double effective_gap = gap / std::max(g, params.activation_epsilon);
      const double closing = follower.speed -
                             (intruder.speed +
                              intruder_accel * params.anticipation_time);
      candidate = idm_accel(params.idm, follower.speed, effective_gap, closing,
                            params.hard_decel, params.hard_accel);
    }
    accel = std::min(accel, candidate);
  }
  return accel;
}

AgentInput follower_input(const MergeReactiveParams& params,
                          const AgentState& follower,
                          const AgentState& intruder, const AgentState& leader,
                          double intruder_accel, const VehicleGeometry& geom) {
  return AgentInput{mr_idm_accel(params, follower, intruder, leader,
                                 intruder_accel, geom),
                    0.0};
}

}  // namespace dmpc::driver
