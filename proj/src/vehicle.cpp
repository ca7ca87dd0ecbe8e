#include "dualmpc/vehicle.hpp"

#include <cmath>
#include <stdexcept>

namespace dmpc::dyn {

namespace {

void check_steer(double steer) {
  if (!(std::abs(steer) < kPi / 2.0)) {
    throw std::domain_error("bicycle flow: |steer| must be below pi/2, got " +
                            std::to_string(steer));
  }
}

void check_dt(double dt) {
  if (!(dt >= 0.0) || !std::isfinite(dt)) {
    throw std::invalid_argument("integration step must be finite and >= 0");
  }
}

}  // namespace

Vec5 bicycle_derivative(const Vec5& state, const Vec2& input,
                        const VehicleGeometry& geom) {
  check_steer(state[4]);
  const double v = state[2];
  const double psi = state[3];
  const double delta = state[4];
  Vec5 dot;
  dot << v * std::cos(psi), v * std::sin(psi), input[0],
      v * std::tan(delta) / geom.wheelbase, input[1];
  return dot;
}

FlowJacobians bicycle_flow_jacobians(const Vec5& state, const Vec2& input,
                                     const VehicleGeometry& geom) {
  (void)input;  // the flow is affine in the input
  check_steer(state[4]);
  const double v = state[2];
  const double psi = state[3];
  const double delta = state[4];
  const double cd = std::cos(delta);

  FlowJacobians jac;
  jac.state.setZero();
  jac.state(0, 2) = std::cos(psi);
  jac.state(0, 3) = -v * std::sin(psi);
  jac.state(1, 2) = std::sin(psi);
  jac.state(1, 3) = v * std::cos(psi);
  jac.state(3, 2) = std::tan(delta) / geom.wheelbase;
  jac.state(3, 4) = v / (geom.wheelbase * cd * cd);

  jac.input.setZero();
  jac.input(2, 0) = 1.0;
  jac.input(4, 1) = 1.0;
  return jac;
}

AgentState rk4_step(const AgentState& state, const AgentInput& input,
                    const VehicleGeometry& geom, double dt) {
  check_dt(dt);
  const Vec5 x = state.vector();
  const Vec2 u = input.vector();
  const Vec5 k1 = bicycle_derivative(x, u, geom);
  const Vec5 k2 = bicycle_derivative(x + 0.5 * dt * k1, u, geom);
  const Vec5 k3 = bicycle_derivative(x + 0.5 * dt * k2, u, geom);
  const Vec5 k4 = bicycle_derivative(x + dt * k3, u, geom);
  return AgentState::from_vector(x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

StepJacobians rk4_step_jacobians(const AgentState& state, const AgentInput& input,
                                 const VehicleGeometry& geom, double dt) {
  check_dt(dt);
  const Vec5 x = state.vector();
  const Vec2 u = input.vector();

  const Vec5 k1 = bicycle_derivative(x, u, geom);
  const Vec5 x2 = x + 0.5 * dt * k1;
  const Vec5 k2 = bicycle_derivative(x2, u, geom);
  const Vec5 x3 = x + 0.5 * dt * k2;
  const Vec5 k3 = bicycle_derivative(x3, u, geom);
  const Vec5 x4 = x + dt * k3;

  const FlowJacobians j1 = bicycle_flow_jacobians(x, u, geom);
  const FlowJacobians j2 = bicycle_flow_jacobians(x2, u, geom);
  const FlowJacobians j3 = bicycle_flow_jacobians(x3, u, geom);
  const FlowJacobians j4 = bicycle_flow_jacobians(x4, u, geom);

  // Stage sensitivities w.r.t. the initial state.
  const Mat5 I = Mat5::Identity();
  const Mat5 dk1 = j1.state;
  const Mat5 dk2 = j2.state * (I + 0.5 * dt * dk1);
  const Mat5 dk3 = j3.state * (I + 0.5 * dt * dk2);
  const Mat5 dk4 = j4.state * (I + dt * dk3);

  // Stage sensitivities w.r.t. the held input.
  const Mat52 dk1u = j1.input;
  const Mat52 dk2u = j2.state * (0.5 * dt * dk1u) + j2.input;
  const Mat52 dk3u = j3.state * (0.5 * dt * dk2u) + j3.input;
  const Mat52 dk4u = j4.state * (dt * dk3u) + j4.input;

  StepJacobians out;
  out.state = I + (dt / 6.0) * (dk1 + 2.0 * dk2 + 2.0 * dk3 + dk4);
  out.input = (dt / 6.0) * (dk1u + 2.0 * dk2u + 2.0 * dk3u + dk4u);
  return out;
}

Mat5 cv_transition(double dt) {
  check_dt(dt);
  Mat5 a = Mat5::Identity();
  a(0, 2) = dt;
  return a;
}

AgentState cv_predict(const AgentState& state, double dt) {
  return AgentState::from_vector(cv_transition(dt) * state.vector());
}

}  // namespace dmpc::dyn
