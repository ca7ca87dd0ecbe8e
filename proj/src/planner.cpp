#include "dualmpc/planner.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "dualmpc/vehicle.hpp"

namespace dmpc::plan {

namespace {

constexpr double kVarEps = 1e-9;  ///< smoothing inside sqrt(position variance)

void validate_scene(const MergeScene& s) {
  if (s.horizon < 1) {
    throw std::invalid_argument("merge scene: horizon must be >= 1");
  }
  if (!(s.dt > 0.0)) {
    throw std::invalid_argument("merge scene: sampling time must be positive");
  }
  if (!(s.residual_prior_variance >= 0.0)) {
    throw std::invalid_argument("merge scene: residual variance must be >= 0");
  }
  if (!(s.lane.lane_width > 0.0) || !(s.lane.merge_end_x > s.lane.merge_start_x)) {
    throw std::invalid_argument("merge scene: invalid lane geometry");
  }
  if (!(s.ellipse.semi_major > 0.0) || !(s.ellipse.semi_minor > 0.0) ||
      !(s.ellipse.sigma >= 0.0)) {
    throw std::invalid_argument("merge scene: invalid collision ellipse");
  }
  if (!(s.bounds.accel_max > 0.0) || !(s.bounds.steer_rate_max > 0.0) ||
      !(s.bounds.speed_max > 0.0) || !(s.bounds.heading_max > 0.0) ||
      !(s.bounds.steer_max > 0.0)) {
    throw std::invalid_argument("merge scene: invalid ego bounds");
  }
  if ((s.weights.state.array() < 0.0).any() ||
      (s.weights.input.array() < 0.0).any() ||
      (s.weights.input_rate.array() < 0.0).any() ||
      !(s.weights.collision_penalty > 0.0)) {
    throw std::invalid_argument("merge scene: invalid weights");
  }
}

/// Residual posterior snapshot at one rollout step.
struct ResidualPoint {
  double mean = 0.0;
  double variance = 0.0;
  Eigen::VectorXd mean_gradient;       // kJointDim
  Eigen::MatrixXd mean_hessian;        // kJointDim x kJointDim
  Eigen::VectorXd variance_gradient;   // kJointDim
};

/// Shared rollout state + memoized evaluation for the OCP callbacks. One
/// instance backs one assembled problem; not safe for concurrent evaluate
/// calls (each closed-loop solve owns its problem).
class RolloutCache {
 public:
  RolloutCache(MergeScene scene, std::shared_ptr<const gp::SparseGpModel> model)
      : scene_(std::move(scene)), model_(std::move(model)) {
    validate_scene(scene_);
    leader_.resize(static_cast<std::size_t>(scene_.horizon) + 1);
    leader_[0] = scene_.leader.vector();
    const Mat5 a = dyn::cv_transition(scene_.dt);
    for (int i = 0; i < scene_.horizon; ++i) {
      leader_[static_cast<std::size_t>(i) + 1] =
          a * leader_[static_cast<std::size_t>(i)];
    }
  }

  struct Eval {
    bool valid = false;
    bool derivs = false;
    Eigen::VectorXd inputs;
    double objective = 0.0;
    Eigen::VectorXd objective_gradient;
    Eigen::VectorXd hard;
    Eigen::MatrixXd hard_jacobian;
    Eigen::VectorXd soft;
    Eigen::MatrixXd soft_jacobian;
  };

  const MergeScene& scene() const { return scene_; }
  int hard_count() const { return 7 * scene_.horizon; }
  int soft_count() const { return 2 * scene_.horizon; }

  const Eval& ensure(const Eigen::VectorXd& inputs, bool derivs) {
    if (cache_.valid && cache_.inputs.size() == inputs.size() &&
        (cache_.inputs.array() == inputs.array()).all() &&
        (cache_.derivs || !derivs)) {
      return cache_;
    }
    compute(inputs, derivs);
    return cache_;
  }

 private:
  ResidualPoint residual_at(const Eigen::VectorXd& z, bool derivs) const {
    ResidualPoint out;
    if (model_ != nullptr) {
      if (derivs) {
        const gp::PosteriorDerivatives d = model_->posterior_derivatives(z);
        out.mean = d.mean;
        out.variance = d.variance;
        out.mean_gradient = d.mean_gradient;
        out.mean_hessian = d.mean_hessian;
        out.variance_gradient = d.variance_gradient;
      } else {
        const gp::PosteriorEval d = model_->posterior(z);
        out.mean = d.mean;
        out.variance = d.variance;
        out.mean_gradient = d.mean_gradient;
      }
    } else {
      out.variance = scene_.residual_prior_variance;
      out.mean_gradient = Eigen::VectorXd::Zero(kJointDim);
      if (derivs) {
        out.mean_hessian = Eigen::MatrixXd::Zero(kJointDim, kJointDim);
        out.variance_gradient = Eigen::VectorXd::Zero(kJointDim);
      }
    }
    return out;
  }

  void compute(const Eigen::VectorXd& inputs, bool derivs);

  MergeScene scene_;
  std::shared_ptr<const gp::SparseGpModel> model_;  ///< null = fixed prior
  std::vector<Vec5> leader_;
  Eval cache_;
};

void RolloutCache::compute(const Eigen::VectorXd& inputs, bool derivs) {
  const int n = scene_.horizon;
  const int nu = 2 * n;
  if (inputs.size() != nu) {
    throw std::invalid_argument("input sequence length mismatch");
  }
  if (!inputs.allFinite()) {
    throw std::invalid_argument("input sequence contains non-finite values");
  }

  const Mat5 a_cv = dyn::cv_transition(scene_.dt);
  Vec5 channel = Vec5::Zero();
  channel[2] = 1.0;  // residual acts on the forward speed

  std::vector<Vec5> ego(static_cast<std::size_t>(n) + 1);
  std::vector<Vec5> fol(static_cast<std::size_t>(n) + 1);
  std::vector<Mat5> cov(static_cast<std::size_t>(n) + 1);
  std::vector<Eigen::MatrixXd> ego_sens;
  std::vector<Eigen::MatrixXd> fol_sens;
  std::vector<Eigen::MatrixXd> cov_sens;  // 25 x nu, column-major vec(cov)

  ego[0] = scene_.ego.vector();
  fol[0] = scene_.follower.vector();
  cov[0].setZero();
  if (derivs) {
    ego_sens.assign(static_cast<std::size_t>(n) + 1,
                    Eigen::MatrixXd::Zero(5, nu));
    fol_sens.assign(static_cast<std::size_t>(n) + 1,
                    Eigen::MatrixXd::Zero(5, nu));
    cov_sens.assign(static_cast<std::size_t>(n) + 1,
                    Eigen::MatrixXd::Zero(25, nu));
  }

  for (int i = 0; i < n; ++i) {
    const std::size_t si = static_cast<std::size_t>(i);
    const Vec2 u = inputs.segment<2>(2 * i);

    const Eigen::VectorXd z = joint_input(ego[si], fol[si], leader_[si], u);
    const ResidualPoint res = residual_at(z, derivs);

    // Within-step joint of follower state and residual.
    const Vec5 gamma = res.mean_gradient.segment<5>(kFollowerBlock);
    const Vec5 cross = cov[si] * gamma;
    const double var_full = res.variance + gamma.dot(cross);

    fol[si + 1] = a_cv * fol[si] + channel * res.mean;
    const Vec5 a_cross = a_cv * cross;
    cov[si + 1] = a_cv * cov[si] * a_cv.transpose() +
                  a_cross * channel.transpose() +
                  channel * a_cross.transpose() +
                  var_full * (channel * channel.transpose());
    cov[si + 1] = 0.5 * (cov[si + 1] + cov[si + 1].transpose()).eval();

    const AgentState ego_state = AgentState::from_vector(ego[si]);
    const AgentInput ego_input = AgentInput::from_vector(u);
    ego[si + 1] =
        dyn::rk4_step(ego_state, ego_input, scene_.vehicle, scene_.dt).vector();

    if (!derivs) {
      continue;
    }

    // d z / d inputs: ego block, follower block, input selector.
    Eigen::MatrixXd zs = Eigen::MatrixXd::Zero(kJointDim, nu);
    zs.topRows<5>() = ego_sens[si];
    zs.middleRows<5>(kFollowerBlock) = fol_sens[si];
    zs(15, 2 * i) = 1.0;
    zs(16, 2 * i + 1) = 1.0;

    const Eigen::RowVectorXd dmean = res.mean_gradient.transpose() * zs;
    const Eigen::MatrixXd dgamma =
        res.mean_hessian.middleRows<5>(kFollowerBlock) * zs;
    const Eigen::RowVectorXd dvar = res.variance_gradient.transpose() * zs;

    fol_sens[si + 1] = a_cv * fol_sens[si] + channel * dmean;

    for (int p = 0; p < nu; ++p) {
      const Eigen::Map<const Mat5> ds(cov_sens[si].col(p).data());
      const Vec5 dcross = ds * gamma + cov[si] * dgamma.col(p);
      const double dvar_full =
          dvar[p] + dgamma.col(p).dot(cross) + gamma.dot(dcross);
      Mat5 dnext = a_cv * ds * a_cv.transpose();
      const Vec5 a_dcross = a_cv * dcross;
      dnext += a_dcross * channel.transpose() + channel * a_dcross.transpose();
      dnext += dvar_full * (channel * channel.transpose());
      dnext = 0.5 * (dnext + dnext.transpose()).eval();
      Eigen::Map<Mat5>(cov_sens[si + 1].col(p).data()) = dnext;
    }

    const dyn::StepJacobians jac =
        dyn::rk4_step_jacobians(ego_state, ego_input, scene_.vehicle, scene_.dt);
    ego_sens[si + 1] = jac.state * ego_sens[si];
    ego_sens[si + 1].middleCols<2>(2 * i) += jac.input;
  }

  // ---- objective ----------------------------------------------------------
  Eval& e = cache_;
  e.valid = true;
  e.derivs = derivs;
  e.inputs = inputs;
  e.objective = 0.0;
  if (derivs) {
    e.objective_gradient = Eigen::VectorXd::Zero(nu);
  }

  for (int i = 1; i <= n; ++i) {
    const std::size_t si = static_cast<std::size_t>(i);
    const Vec5 ref =
        reference_state(scene_.lane, ego[si][0], scene_.target_speed);
    const Vec5 err = ego[si] - ref;
    e.objective += (scene_.weights.state.array() * err.array().square()).sum();
    if (derivs) {
      const double slope = scene_.lane.centerline_slope(ego[si][0]);
      for (int c = 0; c < 5; ++c) {
        const double w = scene_.weights.state[c];
        if (w == 0.0) {
          continue;
        }
        Eigen::RowVectorXd derr = ego_sens[si].row(c);
        if (c == 1) {
          derr -= slope * ego_sens[si].row(0);  // reference rides m(x)
        }
        e.objective_gradient += (2.0 * w * err[c]) * derr.transpose();
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    const Vec2 u = inputs.segment<2>(2 * i);
    const Vec2 u_prev = i == 0 ? scene_.previous_input.vector()
                               : inputs.segment<2>(2 * (i - 1)).eval();
    const Vec2 du = u - u_prev;
    e.objective += (scene_.weights.input.array() * u.array().square()).sum();
    e.objective +=
        (scene_.weights.input_rate.array() * du.array().square()).sum();
    if (derivs) {
      const Vec2 gu = 2.0 * scene_.weights.input.cwiseProduct(u) +
                      2.0 * scene_.weights.input_rate.cwiseProduct(du);
      e.objective_gradient.segment<2>(2 * i) += gu;
      if (i > 0) {
        e.objective_gradient.segment<2>(2 * (i - 1)) -=
            2.0 * scene_.weights.input_rate.cwiseProduct(du);
      }
    }
  }

  // ---- hard rows: road boundaries + state box, steps 1..n ------------------
  // The right edge follows the closing merge lane; the left edge of the
  // target lane is a constant ceiling on the lateral position.
  const double road_offset =
      0.5 * (scene_.vehicle.width - scene_.lane.lane_width);
  const double left_edge_y = scene_.lane.target_center_y +
                             0.5 * (scene_.lane.lane_width -
                                    scene_.vehicle.width);
  e.hard.resize(hard_count());
  if (derivs) {
    e.hard_jacobian.setZero(hard_count(), nu);
  }
  for (int i = 1; i <= n; ++i) {
    const std::size_t si = static_cast<std::size_t>(i);
    const int r = 7 * (i - 1);
    const double x = ego[si][0];
    e.hard[r + 0] = scene_.lane.centerline(x) - ego[si][1] + road_offset;
    e.hard[r + 1] = ego[si][1] - left_edge_y;
    e.hard[r + 2] = ego[si][2] - scene_.bounds.speed_max;
    e.hard[r + 3] = ego[si][3] - scene_.bounds.heading_max;
    e.hard[r + 4] = -ego[si][3] - scene_.bounds.heading_max;
    e.hard[r + 5] = ego[si][4] - scene_.bounds.steer_max;
    e.hard[r + 6] = -ego[si][4] - scene_.bounds.steer_max;
    if (derivs) {
      const double slope = scene_.lane.centerline_slope(x);
      e.hard_jacobian.row(r + 0) =
          slope * ego_sens[si].row(0) - ego_sens[si].row(1);
      e.hard_jacobian.row(r + 1) = ego_sens[si].row(1);
      e.hard_jacobian.row(r + 2) = ego_sens[si].row(2);
      e.hard_jacobian.row(r + 3) = ego_sens[si].row(3);
      e.hard_jacobian.row(r + 4) = -ego_sens[si].row(3);
      e.hard_jacobian.row(r + 5) = ego_sens[si].row(4);
      e.hard_jacobian.row(r + 6) = -ego_sens[si].row(4);
    }
  }

  // ---- soft rows: tightened separation from follower and leader -----------
  const double half_len = 0.5 * scene_.vehicle.length;
  e.soft.resize(soft_count());
  if (derivs) {
    e.soft_jacobian.setZero(soft_count(), nu);
  }
  const double eb2 =
      scene_.ellipse.semi_minor * scene_.ellipse.semi_minor;
  for (int i = 1; i <= n; ++i) {
    const std::size_t si = static_cast<std::size_t>(i);
    const double cpsi = std::cos(ego[si][3]);
    const double spsi = std::sin(ego[si][3]);
    const double ex = ego[si][0] + half_len * cpsi;
    const double ey = ego[si][1] + half_len * spsi;

    for (int target = 0; target < 2; ++target) {
      const Vec5& other = target == 0 ? fol[si] : leader_[si];
      const double var = target == 0 ? cov[si](0, 0) : 0.0;
      const double ox = other[0] + half_len * std::cos(other[3]);
      const double oy = other[1] + half_len * std::sin(other[3]);
      const double dcx = ex - ox;
      const double dcy = ey - oy;
      const double root = std::sqrt(var + kVarEps);
      const double major = scene_.ellipse.semi_major + scene_.ellipse.sigma * root;
      const double value =
          1.0 - dcx * dcx / (major * major) - dcy * dcy / eb2;
      const int row = 2 * (i - 1) + target;
      e.soft[row] = value;
      if (!derivs) {
        continue;
      }
      // d ego centroid / d inputs
      const Eigen::RowVectorXd dex =
          ego_sens[si].row(0) - half_len * spsi * ego_sens[si].row(3);
      const Eigen::RowVectorXd dey =
          ego_sens[si].row(1) + half_len * cpsi * ego_sens[si].row(3);
      Eigen::RowVectorXd ddcx = dex;
      Eigen::RowVectorXd ddcy = dey;
      if (target == 0) {
        const double ospsi = std::sin(other[3]);
        const double ocpsi = std::cos(other[3]);
        ddcx -= fol_sens[si].row(0) - half_len * ospsi * fol_sens[si].row(3);
        ddcy -= fol_sens[si].row(1) + half_len * ocpsi * fol_sens[si].row(3);
      }
      Eigen::RowVectorXd drow = (-2.0 * dcx / (major * major)) * ddcx +
                                (-2.0 * dcy / eb2) * ddcy;
      if (target == 0) {
        const Eigen::RowVectorXd dvar = cov_sens[si].row(0);  // element (0,0)
        const Eigen::RowVectorXd dmajor =
            (scene_.ellipse.sigma / (2.0 * root)) * dvar;
        drow += (2.0 * dcx * dcx / (major * major * major)) * dmajor;
      }
      e.soft_jacobian.row(row) = drow;
    }
  }
}

}  // namespace

double MergeLaneGeometry::centerline(double x) const {
  const double t =
      std::clamp((x - merge_start_x) / (merge_end_x - merge_start_x), 0.0, 1.0);
  const double blend = t * t * (3.0 - 2.0 * t);
  return merge_center_y + (target_center_y - merge_center_y) * blend;
}

double MergeLaneGeometry::centerline_slope(double x) const {
  const double span = merge_end_x - merge_start_x;
  const double t = (x - merge_start_x) / span;
  if (t <= 0.0 || t >= 1.0) {
    return 0.0;
  }
  return (target_center_y - merge_center_y) * 6.0 * t * (1.0 - t) / span;
}

double road_boundary_value(const MergeLaneGeometry& lane,
                           const VehicleGeometry& vehicle,
                           const AgentState& state) {
  return lane.centerline(state.x) - state.y +
         0.5 * (vehicle.width - lane.lane_width);
}

double tightened_collision_value(const CollisionEllipse& ellipse, double dcx,
                                 double dcy, double position_variance) {
  if (!(position_variance >= 0.0)) {
    throw std::invalid_argument("position variance must be >= 0");
  }
  const double major =
      ellipse.semi_major + ellipse.sigma * std::sqrt(position_variance + kVarEps);
  return 1.0 - dcx * dcx / (major * major) -
         dcy * dcy / (ellipse.semi_minor * ellipse.semi_minor);
}

Eigen::Vector2d body_centroid(const AgentState& state,
                              const VehicleGeometry& vehicle) {
  const double half_len = 0.5 * vehicle.length;
  return Eigen::Vector2d(state.x + half_len * std::cos(state.heading),
                         state.y + half_len * std::sin(state.heading));
}

Vec5 reference_state(const MergeLaneGeometry& lane, double x,
                     double target_speed) {
  Vec5 ref;
  ref << 0.0, lane.centerline(x), target_speed, 0.0, 0.0;
  return ref;
}

Eigen::VectorXd joint_input(const Vec5& ego, const Vec5& follower,
                            const Vec5& leader, const Vec2& input) {
  Eigen::VectorXd z(kJointDim);
  z << ego, follower, leader, input;
  return z;
}

Eigen::MatrixXd joint_feature_map() {
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(6, kJointDim);
  c(0, 2) = 1.0;                    // ego speed
  c(1, 7) = 1.0;                    // follower speed
  c(2, 12) = 1.0;                   // leader speed
  c(3, 5) = 1.0; c(3, 0) = -1.0;    // follower-to-ego longitudinal offset
  c(4, 5) = 1.0; c(4, 10) = -1.0;   // follower-to-leader longitudinal offset
  c(5, 6) = 1.0; c(5, 1) = -1.0;    // follower-to-ego lateral offset
  return c;
}

namespace {

nlp::OcpSpec make_spec(const MergeScene& scene,
                       std::shared_ptr<const gp::SparseGpModel> model) {
  validate_scene(scene);
  auto cache = std::make_shared<RolloutCache>(scene, std::move(model));
  const int n = scene.horizon;

  nlp::OcpSpec spec;
  spec.num_inputs = 2 * n;
  spec.input_lower.resize(2 * n);
  spec.input_upper.resize(2 * n);
  for (int i = 0; i < n; ++i) {
    spec.input_lower[2 * i] = -scene.bounds.accel_max;
    spec.input_upper[2 * i] = scene.bounds.accel_max;
    spec.input_lower[2 * i + 1] = -scene.bounds.steer_rate_max;
    spec.input_upper[2 * i + 1] = scene.bounds.steer_rate_max;
  }
  spec.soft_penalty = scene.weights.collision_penalty;

  spec.objective = [cache](const Eigen::VectorXd& u, Eigen::VectorXd* grad) {
    const auto& e = cache->ensure(u, grad != nullptr);
    if (grad != nullptr) {
      *grad = e.objective_gradient;
    }
    return e.objective;
  };
  spec.hard.count = cache->hard_count();
  spec.hard.eval = [cache](const Eigen::VectorXd& u, Eigen::VectorXd& v,
                           Eigen::MatrixXd* jac) {
    const auto& e = cache->ensure(u, jac != nullptr);
    v = e.hard;
    if (jac != nullptr) {
      *jac = e.hard_jacobian;
    }
  };
  spec.soft.count = cache->soft_count();
  spec.soft.eval = [cache](const Eigen::VectorXd& u, Eigen::VectorXd& v,
                           Eigen::MatrixXd* jac) {
    const auto& e = cache->ensure(u, jac != nullptr);
    v = e.soft;
    if (jac != nullptr) {
      *jac = e.soft_jacobian;
    }
  };
  return spec;
}

}  // namespace

nlp::OcpSpec assemble_gp_mpc(const MergeScene& scene,
                             std::shared_ptr<const gp::SparseGpModel> model) {
  if (model == nullptr) {
    throw std::invalid_argument("assemble_gp_mpc: residual model is null");
  }
  if (model->params().input_dim() != kJointDim) {
    throw std::invalid_argument(
        "assemble_gp_mpc: residual model input dimension mismatch");
  }
  return make_spec(scene, std::move(model));
}

nlp::OcpSpec assemble_cv_mpc(const MergeScene& scene) {
  return make_spec(scene, nullptr);
}

belief::PosteriorFn prior_posterior(double variance) {
  if (!(variance >= 0.0)) {
    throw std::invalid_argument("prior variance must be >= 0");
  }
  return [variance](const Eigen::VectorXd& z) {
    gp::PosteriorEval e;
    e.mean = 0.0;
    e.variance = variance;
    e.mean_gradient = Eigen::VectorXd::Zero(z.size());
    return e;
  };
}

std::vector<AgentState> rollout_ego(const MergeScene& scene,
                                    const Eigen::VectorXd& inputs) {
  validate_scene(scene);
  if (inputs.size() != 2 * scene.horizon) {
    throw std::invalid_argument("input sequence length mismatch");
  }
  std::vector<AgentState> out;
  out.reserve(static_cast<std::size_t>(scene.horizon) + 1);
  out.push_back(scene.ego);
  for (int i = 0; i < scene.horizon; ++i) {
    out.push_back(dyn::rk4_step(out.back(),
                                AgentInput::from_vector(inputs.segment<2>(2 * i)),
                                scene.vehicle, scene.dt));
  }
  return out;
}

std::vector<AgentState> rollout_leader(const MergeScene& scene, int steps) {
  std::vector<AgentState> out;
  out.reserve(static_cast<std::size_t>(steps) + 1);
  out.push_back(scene.leader);
  for (int i = 0; i < steps; ++i) {
    out.push_back(dyn::cv_predict(out.back(), scene.dt));
  }
  return out;
}

std::vector<belief::GaussianBelief> predict_follower(
    const MergeScene& scene, const belief::PosteriorFn& posterior,
    const Eigen::VectorXd& inputs) {
  const std::vector<AgentState> ego = rollout_ego(scene, inputs);
  const std::vector<AgentState> leader = rollout_leader(scene, scene.horizon);
  const Mat5 a = dyn::cv_transition(scene.dt);
  const belief::NominalModel nominal = [a](const Vec5& mean) {
    return belief::NominalStep{a * mean, a};
  };
  const belief::JointInputBuilder builder = [&](int step, const Vec5& mean) {
    return joint_input(ego[static_cast<std::size_t>(step)].vector(), mean,
                       leader[static_cast<std::size_t>(step)].vector(),
                       inputs.segment<2>(2 * step));
  };
  return belief::propagate_horizon(posterior, nominal,
                                   belief::ResidualChannel::speed(),
                                   scene.follower.vector(), scene.horizon,
                                   builder, kFollowerBlock);
}

std::vector<Eigen::VectorXd> joint_trajectory(
    const MergeScene& scene, const belief::PosteriorFn& posterior,
    const Eigen::VectorXd& inputs) {
  const std::vector<AgentState> ego = rollout_ego(scene, inputs);
  const std::vector<AgentState> leader = rollout_leader(scene, scene.horizon);
  const std::vector<belief::GaussianBelief> fol =
      predict_follower(scene, posterior, inputs);
  std::vector<Eigen::VectorXd> out;
  out.reserve(static_cast<std::size_t>(scene.horizon) + 1);
  for (int i = 0; i <= scene.horizon; ++i) {
    const std::size_t si = static_cast<std::size_t>(i);
    const Vec2 u = i < scene.horizon
                       ? Vec2(inputs.segment<2>(2 * i))
                       : Vec2(inputs.segment<2>(2 * (scene.horizon - 1)));
    out.push_back(joint_input(ego[si].vector(), fol[si].mean,
                              leader[si].vector(), u));
  }
  return out;
}

std::vector<Eigen::VectorXd> select_inducing(
    const std::vector<Eigen::VectorXd>& trajectory, int count) {
  if (trajectory.empty()) {
    throw std::invalid_argument("inducing selection needs a non-empty trajectory");
  }
  if (count < 1) {
    throw std::invalid_argument("inducing count must be >= 1");
  }
  const int len = static_cast<int>(trajectory.size());
  std::vector<int> indices;
  if (count == 1) {
    indices.push_back((len - 1) / 2);
  } else if (count >= len) {
    for (int i = 0; i < len; ++i) {
      indices.push_back(i);
    }
  } else {
    for (int j = 0; j < count; ++j) {
      const double pos =
          static_cast<double>(j) * static_cast<double>(len - 1) /
          static_cast<double>(count - 1);
      const int idx = static_cast<int>(std::lround(pos));
      if (indices.empty() || idx != indices.back()) {
        indices.push_back(idx);
      }
    }
  }
  std::vector<Eigen::VectorXd> out;
  out.reserve(indices.size());
  for (const int idx : indices) {
    out.push_back(trajectory[static_cast<std::size_t>(idx)]);
  }
  return out;
}

}  // namespace dmpc::plan
