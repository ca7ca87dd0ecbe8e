#pragma once

#include "dualmpc/types.hpp"

namespace dmpc::dyn {

/// Continuous-time kinematic bicycle flow:
///   d/dt (x, y, v, psi, delta) = (v cos psi, v sin psi, a, v tan(delta)/L, r)
/// with wheelbase L, acceleration a and steering rate r.
/// Throws std::domain_error when |delta| >= pi/2 (tan singularity).
Vec5 bicycle_derivative(const Vec5& state, const Vec2& input,
                        const VehicleGeometry& geom);

/// Jacobians of the continuous flow w.r.t. state and input.
struct FlowJacobians {
  Mat5 state;
  Mat52 input;
};
FlowJacobians bicycle_flow_jacobians(const Vec5& state, const Vec2& input,
                                     const VehicleGeometry& geom);

/// One classical fourth-order Runge-Kutta step of the bicycle flow over dt.
/// dt == 0 returns the state unchanged; dt < 0 is rejected.
AgentState rk4_step(const AgentState& state, const AgentInput& input,
                    const VehicleGeometry& geom, double dt);

/// Jacobians of the discrete RK4 map w.r.t. the initial state and the (zero-
/// order-hold) input, obtained by chaining the stage Jacobians exactly.
struct StepJacobians {
  Mat5 state;
  Mat52 input;
};
StepJacobians rk4_step_jacobians(const AgentState& state, const AgentInput& input,
                                 const VehicleGeometry& geom, double dt);

/// Discrete constant-velocity transition: x advances by dt*v, everything else
/// is frozen. Returned as the exact linear map.
Mat5 cv_transition(double dt);

/// One constant-velocity step, i.e. cv_transition(dt) * state.
AgentState cv_predict(const AgentState& state, double dt);

}  // namespace dmpc::dyn
