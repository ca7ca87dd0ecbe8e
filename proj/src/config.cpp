#include "dualmpc/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <utility>
#include <vector>

#include <json.hpp>

namespace dmpc::cfg {

namespace {

using nlohmann::json;

/// Typed, path-aware view of one JSON object. Tracks which keys were read so
/// that leftovers (typos, stale fields) fail loudly instead of being ignored.
class ObjectReader {
 public:
  ObjectReader(const json& node, std::string path)
      : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) {
      throw ConfigError(path_ + ": expected a JSON object");
    }
  }

  ~ObjectReader() = default;
  ObjectReader(const ObjectReader&) = delete;
  ObjectReader& operator=(const ObjectReader&) = delete;

  bool has(const std::string& key) {
    if (node_.contains(key)) {
      seen_.insert(key);
      return true;
    }
    return false;
  }

  void number(const std::string& key, double& out) {
    if (!has(key)) {
      return;
    }
    const json& v = node_.at(key);
    if (!v.is_number()) {
      throw ConfigError(child(key) + ": expected a number");
    }
    out = v.get<double>();
  }

  void angle_deg(const std::string& key, double& out_rad) {
    double deg = rad_to_deg(out_rad);
    number(key, deg);
    out_rad = deg_to_rad(deg);
  }

  void integer(const std::string& key, int& out) {
    if (!has(key)) {
      return;
    }
    const json& v = node_.at(key);
    if (!v.is_number_integer()) {
      throw ConfigError(child(key) + ": expected an integer");
    }
    out = v.get<int>();
  }

  void unsigned_integer(const std::string& key, unsigned int& out) {
    if (!has(key)) {
      return;
    }
    const json& v = node_.at(key);
    if (!v.is_number_unsigned()) {
      throw ConfigError(child(key) + ": expected a non-negative integer");
    }
    out = v.get<unsigned int>();
  }

  void text(const std::string& key, std::string& out) {
    if (!has(key)) {
      return;
    }
    const json& v = node_.at(key);
    if (!v.is_string()) {
      throw ConfigError(child(key) + ": expected a string");
    }
    out = v.get<std::string>();
  }

  template <typename Vector>
  void fixed_vector(const std::string& key, Vector& out) {
    if (!has(key)) {
      return;
    }
    const json& v = node_.at(key);
    if (!v.is_array() || static_cast<Eigen::Index>(v.size()) != out.size()) {
      throw ConfigError(child(key) + ": expected an array of " +
                        std::to_string(out.size()) + " numbers");
    }
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      const json& e = v.at(static_cast<std::size_t>(i));
      if (!e.is_number()) {
        throw ConfigError(child(key) + ": expected an array of numbers");
      }
      out[i] = e.get<double>();
    }
  }

  void variable_vector(const std::string& key, Eigen::VectorXd& out) {
    if (!has(key)) {
      return;
    }
    const json& v = node_.at(key);
    if (!v.is_array() || v.empty()) {
      throw ConfigError(child(key) + ": expected a non-empty array of numbers");
    }
    out.resize(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v.at(i).is_number()) {
        throw ConfigError(child(key) + ": expected an array of numbers");
      }
      out[static_cast<Eigen::Index>(i)] = v.at(i).get<double>();
    }
  }

  /// Runs `body` on the sub-object at `key` (if present) with the extended
  /// path, then verifies the sub-object left no unknown keys behind.
  template <typename Body>
  void object(const std::string& key, Body&& body) {
    if (!has(key)) {
      return;
    }
    ObjectReader sub(node_.at(key), child(key));
    body(sub);
    sub.finish();
  }

  void finish() const {
    for (const auto& item : node_.items()) {
      if (seen_.count(item.key()) == 0) {
        throw ConfigError(child(item.key()) + ": unknown key");
      }
    }
  }

 private:
  std::string child(const std::string& key) const { return path_ + "." + key; }

  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& message) {
  if (!ok) {
    throw ConfigError(message);
  }
}

void validate(const ScenarioConfig& c) {
  require(c.timing.dt > 0.0, "timing.dt: must be positive");
  require(c.timing.trial_duration_s >= c.timing.dt,
          "timing.trial_duration_s: must cover at least one step");
  require(c.vehicle.wheelbase > 0.0 && c.vehicle.width > 0.0 &&
              c.vehicle.length > 0.0,
          "vehicle: dimensions must be positive");
  require(c.lane.lane_width > 0.0, "lane.lane_width: must be positive");
  require(c.lane.merge_end_x > c.lane.merge_start_x,
          "lane: merge_end_x must exceed merge_start_x");
  require(c.ego.trial_count >= 1, "ego.trial_count: must be >= 1");
  require(c.ego.start_x_max >= c.ego.start_x_min,
          "ego: start_x_max must be >= start_x_min");
  require(c.ego.trial_count == 1 || c.ego.start_x_max > c.ego.start_x_min,
          "ego: a multi-trial grid needs distinct endpoints");
  require(c.ego.start_speed >= 0.0 && c.ego.target_speed >= 0.0,
          "ego: speeds must be >= 0");
  require(c.follower.start_speed >= 0.0 && c.leader.start_speed >= 0.0,
          "follower/leader: speeds must be >= 0");
  require(c.horizon >= 1, "horizon: must be >= 1");
  require((c.weights.state.array() >= 0.0).all() &&
              (c.weights.input.array() >= 0.0).all() &&
              (c.weights.input_rate.array() >= 0.0).all(),
          "weights: must be >= 0");
  require(c.weights.collision_penalty > 0.0,
          "weights.collision_penalty: must be positive");
  require(c.ellipse.semi_major > 0.0 && c.ellipse.semi_minor > 0.0,
          "ellipse: semi-axes must be positive");
  require(c.ellipse.sigma >= 0.0, "ellipse.sigma: must be >= 0");
  require(c.bounds.accel_max > 0.0 && c.bounds.steer_rate_max > 0.0 &&
              c.bounds.speed_max > 0.0 && c.bounds.heading_max > 0.0 &&
              c.bounds.steer_max > 0.0,
          "bounds: limits must be positive");
  require(c.solver.kkt_tolerance > 0.0, "solver.kkt_tolerance: must be positive");
  require(c.solver.max_iterations >= 1, "solver.max_iterations: must be >= 1");
  require(c.residual.prior_variance > 0.0,
          "residual_model.prior_variance: must be positive");
  require(c.residual.noise_variance >= 0.0,
          "residual_model.noise_variance: must be >= 0");
  require((c.residual.length_scales.array() > 0.0).all(),
          "residual_model.length_scales: must be positive");
  require(c.residual.length_scales.size() == 6,
          "residual_model.length_scales: expected 6 entries");
  require(c.residual.inducing_count >= 1,
          "residual_model.inducing_count: must be >= 1");
  require(c.residual.window_capacity >= 0,
          "residual_model.window_capacity: must be >= 0");
  require(c.follower_driver.idm.desired_speed > 0.0 &&
              c.follower_driver.idm.time_headway >= 0.0 &&
              c.follower_driver.idm.max_accel > 0.0 &&
              c.follower_driver.idm.comfortable_decel > 0.0 &&
              c.follower_driver.idm.min_gap > 0.0 &&
              c.follower_driver.idm.accel_exponent > 0.0,
          "follower_driver: car-following parameters out of range");
  require(c.follower_driver.anticipation_time >= 0.0 &&
              c.follower_driver.activation_epsilon > 0.0 &&
              c.follower_driver.hard_decel > 0.0 &&
              c.follower_driver.hard_accel > 0.0,
          "follower_driver: reaction parameters out of range");
  require(c.pretrain.points >= 0, "pretrain.points: must be >= 0");
  require(c.outcome.lane_fraction > 0.0 && c.outcome.lane_fraction <= 0.5,
          "outcome.lane_fraction: must lie in (0, 0.5]");
  require(c.outcome.settle_s >= 0.0, "outcome.settle_s: must be >= 0");
}

}  // namespace

ScenarioConfig default_config() { return ScenarioConfig{}; }

ScenarioConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("scenario JSON: ") + e.what());
  }

  ScenarioConfig c;
  ObjectReader r(root, "scenario");
  r.unsigned_integer("seed", c.seed);
  r.object("timing", [&](ObjectReader& o) {
    o.number("dt", c.timing.dt);
    o.number("trial_duration_s", c.timing.trial_duration_s);
  });
  r.object("vehicle", [&](ObjectReader& o) {
    o.number("wheelbase", c.vehicle.wheelbase);
    o.number("width", c.vehicle.width);
    o.number("length", c.vehicle.length);
  });
  r.object("lane", [&](ObjectReader& o) {
    o.number("merge_center_y", c.lane.merge_center_y);
    o.number("target_center_y", c.lane.target_center_y);
    o.number("lane_width", c.lane.lane_width);
    o.number("merge_start_x", c.lane.merge_start_x);
    o.number("merge_end_x", c.lane.merge_end_x);
  });
  r.object("ego", [&](ObjectReader& o) {
    o.number("start_x_min", c.ego.start_x_min);
    o.number("start_x_max", c.ego.start_x_max);
    o.integer("trial_count", c.ego.trial_count);
    o.number("start_y", c.ego.start_y);
    o.number("start_speed", c.ego.start_speed);
    o.number("target_speed", c.ego.target_speed);
  });
  r.object("follower", [&](ObjectReader& o) {
    o.number("start_x", c.follower.start_x);
    o.number("start_y", c.follower.start_y);
    o.number("start_speed", c.follower.start_speed);
  });
  r.object("leader", [&](ObjectReader& o) {
    o.number("start_x", c.leader.start_x);
    o.number("start_y", c.leader.start_y);
    o.number("start_speed", c.leader.start_speed);
  });
  r.object("planner", [&](ObjectReader& o) {
    o.integer("horizon", c.horizon);
    o.object("weights", [&](ObjectReader& w) {
      w.fixed_vector("state", c.weights.state);
      w.fixed_vector("input", c.weights.input);
      w.fixed_vector("input_rate", c.weights.input_rate);
      w.number("collision_penalty", c.weights.collision_penalty);
    });
    o.object("ellipse", [&](ObjectReader& el) {
      el.number("semi_major", c.ellipse.semi_major);
      el.number("semi_minor", c.ellipse.semi_minor);
      el.number("sigma", c.ellipse.sigma);
    });
    o.object("bounds", [&](ObjectReader& b) {
      b.number("accel_max", c.bounds.accel_max);
      b.angle_deg("steer_rate_max_deg", c.bounds.steer_rate_max);
      b.number("speed_max", c.bounds.speed_max);
      b.angle_deg("heading_max_deg", c.bounds.heading_max);
      b.angle_deg("steer_max_deg", c.bounds.steer_max);
    });
    o.object("solver", [&](ObjectReader& s) {
      s.number("kkt_tolerance", c.solver.kkt_tolerance);
      s.integer("max_iterations", c.solver.max_iterations);
    });
  });
  r.object("residual_model", [&](ObjectReader& o) {
    o.number("prior_variance", c.residual.prior_variance);
    o.variable_vector("length_scales", c.residual.length_scales);
    o.number("noise_variance", c.residual.noise_variance);
    o.integer("inducing_count", c.residual.inducing_count);
    o.integer("window_capacity", c.residual.window_capacity);
  });
  r.object("follower_driver", [&](ObjectReader& o) {
    o.number("desired_speed", c.follower_driver.idm.desired_speed);
    o.number("time_headway", c.follower_driver.idm.time_headway);
    o.number("max_accel", c.follower_driver.idm.max_accel);
    o.number("comfortable_decel", c.follower_driver.idm.comfortable_decel);
    o.number("min_gap", c.follower_driver.idm.min_gap);
    o.number("accel_exponent", c.follower_driver.idm.accel_exponent);
    o.number("anticipation_time", c.follower_driver.anticipation_time);
    o.number("activation_epsilon", c.follower_driver.activation_epsilon);
    o.number("hard_decel", c.follower_driver.hard_decel);
    o.number("hard_accel", c.follower_driver.hard_accel);
  });
  r.object("pretrain", [&](ObjectReader& o) {
    o.text("source", c.pretrain.source);
    o.integer("points", c.pretrain.points);
    o.number("run_start_x", c.pretrain.run_start_x);
  });
  r.object("outcome", [&](ObjectReader& o) {
    o.number("lane_fraction", c.outcome.lane_fraction);
    o.number("settle_s", c.outcome.settle_s);
  });
  r.finish();

  // The follower reacts over the configured lane width.
  c.follower_driver.lane_width = c.lane.lane_width;
  validate(c);
  return c;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open scenario file: " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string config_to_json(const ScenarioConfig& c) {
  json root;
  root["seed"] = c.seed;
  root["timing"] = {{"dt", c.timing.dt},
                    {"trial_duration_s", c.timing.trial_duration_s}};
  root["vehicle"] = {{"wheelbase", c.vehicle.wheelbase},
                     {"width", c.vehicle.width},
                     {"length", c.vehicle.length}};
  root["lane"] = {{"merge_center_y", c.lane.merge_center_y},
                  {"target_center_y", c.lane.target_center_y},
                  {"lane_width", c.lane.lane_width},
                  {"merge_start_x", c.lane.merge_start_x},
                  {"merge_end_x", c.lane.merge_end_x}};
  root["ego"] = {{"start_x_min", c.ego.start_x_min},
                 {"start_x_max", c.ego.start_x_max},
                 {"trial_count", c.ego.trial_count},
                 {"start_y", c.ego.start_y},
                 {"start_speed", c.ego.start_speed},
                 {"target_speed", c.ego.target_speed}};
  root["follower"] = {{"start_x", c.follower.start_x},
                      {"start_y", c.follower.start_y},
                      {"start_speed", c.follower.start_speed}};
  root["leader"] = {{"start_x", c.leader.start_x},
                    {"start_y", c.leader.start_y},
                    {"start_speed", c.leader.start_speed}};
  root["planner"] = {
      {"horizon", c.horizon},
      {"weights",
       {{"state", std::vector<double>(c.weights.state.data(),
                                      c.weights.state.data() + 5)},
        {"input", std::vector<double>(c.weights.input.data(),
                                      c.weights.input.data() + 2)},
        {"input_rate", std::vector<double>(c.weights.input_rate.data(),
                                           c.weights.input_rate.data() + 2)},
        {"collision_penalty", c.weights.collision_penalty}}},
      {"ellipse",
       {{"semi_major", c.ellipse.semi_major},
        {"semi_minor", c.ellipse.semi_minor},
        {"sigma", c.ellipse.sigma}}},
      {"bounds",
       {{"accel_max", c.bounds.accel_max},
        {"steer_rate_max_deg", rad_to_deg(c.bounds.steer_rate_max)},
        {"speed_max", c.bounds.speed_max},
        {"heading_max_deg", rad_to_deg(c.bounds.heading_max)},
        {"steer_max_deg", rad_to_deg(c.bounds.steer_max)}}},
      {"solver",
       {{"kkt_tolerance", c.solver.kkt_tolerance},
        {"max_iterations", c.solver.max_iterations}}}};
  root["residual_model"] = {
      {"prior_variance", c.residual.prior_variance},
      {"length_scales",
       std::vector<double>(c.residual.length_scales.data(),
                           c.residual.length_scales.data() +
                               c.residual.length_scales.size())},
      {"noise_variance", c.residual.noise_variance},
      {"inducing_count", c.residual.inducing_count},
      {"window_capacity", c.residual.window_capacity}};
  root["follower_driver"] = {
      {"desired_speed", c.follower_driver.idm.desired_speed},
      {"time_headway", c.follower_driver.idm.time_headway},
      {"max_accel", c.follower_driver.idm.max_accel},
      {"comfortable_decel", c.follower_driver.idm.comfortable_decel},
      {"min_gap", c.follower_driver.idm.min_gap},
      {"accel_exponent", c.follower_driver.idm.accel_exponent},
      {"anticipation_time", c.follower_driver.anticipation_time},
      {"activation_epsilon", c.follower_driver.activation_epsilon},
      {"hard_decel", c.follower_driver.hard_decel},
      {"hard_accel", c.follower_driver.hard_accel}};
  root["pretrain"] = {{"source", c.pretrain.source},
                      {"points", c.pretrain.points},
                      {"run_start_x", c.pretrain.run_start_x}};
  root["outcome"] = {{"lane_fraction", c.outcome.lane_fraction},
                     {"settle_s", c.outcome.settle_s}};
  return root.dump(2) + "\n";
}

}  // namespace dmpc::cfg
