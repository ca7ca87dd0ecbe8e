#pragma once

#include <stdexcept>

#include <Eigen/Dense>

namespace dmpc {

using Vec2 = Eigen::Vector2d;
using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat5 = Eigen::Matrix<double, 5, 5>;
using Mat52 = Eigen::Matrix<double, 5, 2>;

/// Thrown when a numerical routine cannot proceed (e.g. a factorization that
/// stays indefinite after the full jitter escalation).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Planar state of one vehicle. Position is the rear-axle point.
struct AgentState {
  double x = 0.0;        ///< longitudinal position [m]
  double y = 0.0;        ///< lateral position [m]
  double speed = 0.0;    ///< forward speed [m/s]
  double heading = 0.0;  ///< yaw angle [rad]
  double steer = 0.0;    ///< front-axle steering angle [rad]

  Vec5 vector() const {
    Vec5 v;
    v << x, y, speed, heading, steer;
    return v;
  }
  static AgentState from_vector(const Vec5& v) {
    return AgentState{v[0], v[1], v[2], v[3], v[4]};
  }
};

/// Control input of one vehicle: longitudinal acceleration + steering rate.
struct AgentInput {
  double accel = 0.0;       ///< [m/s^2]
  double steer_rate = 0.0;  ///< [rad/s]

  Vec2 vector() const { return Vec2(accel, steer_rate); }
  static AgentInput from_vector(const Vec2& v) { return AgentInput{v[0], v[1]}; }
};

/// Body dimensions shared by all vehicles in the scenario.
struct VehicleGeometry {
  double wheelbase = 2.7;  ///< rear-to-front axle distance [m]
  double width = 1.8;      ///< body width [m]
  double length = 4.5;     ///< body length [m]
};

inline constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

}  // namespace dmpc
