#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "dualmpc/driver.hpp"
#include "dualmpc/planner.hpp"
#include "dualmpc/types.hpp"

namespace dmpc::cfg {

/// Thrown on malformed scenario files: unknown keys, wrong types, values out
/// of range. The message names the offending JSON path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TimingConfig {
  double dt = 0.25;               ///< [s] controller sampling time
  double trial_duration_s = 20.0; ///< [s] closed-loop horizon per trial
};

/// Ego starting grid: trials place the ego at `trial_count` equidistant
/// longitudinal positions between start_x_min and start_x_max.
struct EgoGridConfig {
  double start_x_min = -100.0;  ///< [m]
  double start_x_max = -75.0;   ///< [m]
  int trial_count = 11;
  double start_y = 0.0;         ///< [m] merge-lane center
  double start_speed = 31.0;    ///< [m/s]
  double target_speed = 31.0;   ///< [m/s] tracked reference speed
};

/// Starting pose of a target-lane vehicle (zero heading and steering).
struct NeighborConfig {
  double start_x = 0.0;     ///< [m]
  double start_y = 3.5;     ///< [m]
  double start_speed = 0.0; ///< [m/s]
};

struct SolverConfig {
  double kkt_tolerance = 1e-6;
  int max_iterations = 100;
};

/// Residual-model hyperparameters (kernel + sparse approximation).
struct ResidualModelConfig {
  double prior_variance = 0.3;
  Eigen::VectorXd length_scales =
      (Eigen::VectorXd(6) << 3.0, 3.0, 3.0, 17.0, 17.0, 5.0).finished();
  double noise_variance = 0.0;
  int inducing_count = 4;
  int window_capacity = 0;  ///< 0 = keep every observed pair
};

/// Where the pre-training data comes from: an optional fixture CSV (columns
/// z0..z16,y) or, when `source` is empty, a fresh bootstrap run.
struct PretrainConfig {
  std::string source;           ///< fixture path, empty = regenerate
  int points = 80;              ///< pairs collected by the bootstrap run
  double run_start_x = -85.0;   ///< [m] ego start of the bootstrap run
};

/// Merge-outcome classification: the ego must hold the target-lane center to
/// within lane_fraction * lane_width for settle_s seconds.
struct OutcomeConfig {
  double lane_fraction = 0.25;
  double settle_s = 1.0;
};

/// Full scenario description. `parse_config` fills it from JSON with every
/// field optional (defaults above) and unknown keys rejected. Angular bounds
/// live in the JSON as *_deg fields and here in radians.
struct ScenarioConfig {
  unsigned int seed = 1;
  TimingConfig timing;
  VehicleGeometry vehicle;
  plan::MergeLaneGeometry lane;
  EgoGridConfig ego;
  NeighborConfig follower{-75.0, 3.5, 31.0};
  NeighborConfig leader{0.0, 3.5, 25.0};
  int horizon = 12;
  plan::PlannerWeights weights;
  plan::CollisionEllipse ellipse;
  plan::EgoBounds bounds;
  SolverConfig solver;
  ResidualModelConfig residual;
  driver::MergeReactiveParams follower_driver;
  PretrainConfig pretrain;
  OutcomeConfig outcome;

  int steps_per_trial() const {
    return static_cast<int>(timing.trial_duration_s / timing.dt + 0.5);
  }
};

/// All defaults; equals parse_config("{}").
ScenarioConfig default_config();

/// Parses and validates a scenario from JSON text. Throws ConfigError.
ScenarioConfig parse_config(const std::string& json_text);

/// Reads + parses a scenario file. Throws ConfigError (also on I/O failure).
ScenarioConfig load_config(const std::string& path);

/// Serializes a scenario back to pretty-printed JSON (round-trips through
/// parse_config).
std::string config_to_json(const ScenarioConfig& config);

}  // namespace dmpc::cfg
