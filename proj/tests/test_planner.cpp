#include <chrono>
#include <cmath>
#include <memory>
#include <random>
#include <stdexcept>
#include <vector>

#include <doctest.h>

#include "dualmpc/gp.hpp"
#include "dualmpc/planner.hpp"
#include "dualmpc/solver.hpp"
#include "dualmpc/vehicle.hpp"

using namespace dmpc;
using namespace dmpc::plan;

namespace {

MergeScene small_scene(int horizon) {
  MergeScene scene;
  scene.ego = AgentState{-85.0, 0.0, 31.0, 0.0, 0.0};
  scene.follower = AgentState{-75.0, 3.5, 31.0, 0.0, 0.0};
  scene.leader = AgentState{0.0, 3.5, 25.0, 0.0, 0.0};
  scene.horizon = horizon;
  return scene;
}

gp::KernelParams interaction_kernel() {
  gp::KernelParams params;
  params.prior_variance = 0.3;
  params.length_scales.resize(6);
  params.length_scales << 3.0, 3.0, 3.0, 17.0, 17.0, 5.0;
  params.noise_variance = 0.0;
  params.feature_map = joint_feature_map();
  return params;
}

std::shared_ptr<const gp::SparseGpModel> empty_model() {
  // No training pairs: the posterior is the prior no matter where the
  // (required) inducing point sits.
  return std::make_shared<gp::SparseGpModel>(gp::SparseGpModel::fit(
      interaction_kernel(), gp::TrainingSet(),
      {Eigen::VectorXd::Zero(kJointDim)}));
}

std::shared_ptr<const gp::SparseGpModel> one_point_model(
    const MergeScene& scene, double residual) {
  const Eigen::VectorXd z =
      joint_input(scene.ego.vector(), scene.follower.vector(),
                  scene.leader.vector(), Vec2::Zero());
  gp::TrainingSet data;
  data.append(z, residual);
  return std::make_shared<gp::SparseGpModel>(
      gp::SparseGpModel::fit(interaction_kernel(), data, {z}));
}

belief::PosteriorFn wrap(std::shared_ptr<const gp::SparseGpModel> model) {
  return [model](const Eigen::VectorXd& z) { return model->posterior(z); };
}

Eigen::VectorXd random_inputs(std::mt19937& rng, const MergeScene& scene) {
  std::uniform_real_distribution<double> accel(-scene.bounds.accel_max,
                                               scene.bounds.accel_max);
  std::uniform_real_distribution<double> rate(-scene.bounds.steer_rate_max,
                                              scene.bounds.steer_rate_max);
  Eigen::VectorXd u(2 * scene.horizon);
  for (int i = 0; i < scene.horizon; ++i) {
    u[2 * i] = accel(rng);
    u[2 * i + 1] = rate(rng);
  }
  return u;
}

}  // namespace

TEST_CASE("the centerline ramps between the lane centers with a smooth blend") {
  const MergeLaneGeometry lane;
  CHECK(lane.centerline(-10.0) == 0.0);
  CHECK(lane.centerline(20.0) == 0.0);
  CHECK(lane.centerline(60.0) == 3.5);
  CHECK(lane.centerline(150.0) == 3.5);
  CHECK(lane.centerline(40.0) == doctest::Approx(1.75).epsilon(1e-14));
  CHECK(lane.centerline(30.0) == doctest::Approx(0.546875).epsilon(1e-14));

  double prev = lane.centerline(-20.0);
  for (double x = -20.0; x <= 100.0; x += 0.25) {
    const double y = lane.centerline(x);
    CHECK(y >= prev - 1e-15);
    CHECK(y >= 0.0);
    CHECK(y <= 3.5);
    prev = y;
  }
}

TEST_CASE("the centerline slope matches a finite difference and dies at the ends") {
  const MergeLaneGeometry lane;
  CHECK(lane.centerline_slope(10.0) == 0.0);
  CHECK(lane.centerline_slope(20.0) == 0.0);
  CHECK(lane.centerline_slope(60.0) == 0.0);
  CHECK(lane.centerline_slope(75.0) == 0.0);
  const double h = 1e-6;
  for (const double x : {22.0, 30.0, 40.0, 51.5, 59.0}) {
    const double fd = (lane.centerline(x + h) - lane.centerline(x - h)) / (2 * h);
    CHECK(lane.centerline_slope(x) == doctest::Approx(fd).epsilon(1e-7));
  }
  // Steepest in the middle of the ramp.
  CHECK(lane.centerline_slope(40.0) >= lane.centerline_slope(25.0));
  CHECK(lane.centerline_slope(40.0) >= lane.centerline_slope(55.0));
}

TEST_CASE("the reference rides the centerline at the target speed") {
  const MergeLaneGeometry lane;
  const Vec5 ref = reference_state(lane, 40.0, 31.0);
  CHECK(ref[1] == doctest::Approx(1.75).epsilon(1e-14));
  CHECK(ref[2] == 31.0);
  CHECK(ref[3] == 0.0);
  CHECK(ref[4] == 0.0);
}

TEST_CASE("the road boundary leaves exactly the half-width margin") {
  const MergeLaneGeometry lane;
  const VehicleGeometry vehicle;  // width 1.8, lane 3.5 -> margin 0.85
  for (const double x : {-50.0, 30.0, 80.0}) {
    const double m = lane.centerline(x);
    CHECK(road_boundary_value(lane, vehicle, AgentState{x, m, 30.0}) ==
          doctest::Approx(-0.85).epsilon(1e-14));
    // Exactly on the allowed edge.
    CHECK(std::abs(road_boundary_value(
              lane, vehicle, AgentState{x, m - 0.85, 30.0})) < 1e-14);
    // A hair beyond it is flagged.
    CHECK(road_boundary_value(lane, vehicle, AgentState{x, m - 0.9, 30.0}) ==
          doctest::Approx(0.05).epsilon(1e-12));
  }
}

TEST_CASE("the tightened separation constraint matches its closed form") {
  SUBCASE("no uncertainty reduces to the plain ellipse") {
    CollisionEllipse e;  // 6.5 x 2.2, sigma 2
    e.sigma = 0.0;
    const double v = tightened_collision_value(e, 3.0, 1.0, 0.0);
    CHECK(v == doctest::Approx(1.0 - 9.0 / (6.5 * 6.5) - 1.0 / (2.2 * 2.2))
                   .epsilon(1e-14));
  }
  SUBCASE("scripted values") {
    CollisionEllipse wide;
    wide.semi_major = 8.0;
    wide.semi_minor = 2.2;
    wide.sigma = 2.0;
    CHECK(std::abs(tightened_collision_value(wide, 10.0, 0.0, 1.0) -
                   2.000000165480742e-10) < 1e-19);
    CollisionEllipse e;
    CHECK(std::abs(tightened_collision_value(e, 7.0, 1.0, 0.6) -
                   0.03709319904778219) < 1e-15);
  }
  SUBCASE("more position variance never loosens the constraint") {
    std::mt19937 rng(71);
    std::uniform_real_distribution<double> pos(-30.0, 30.0);
    std::uniform_real_distribution<double> var(0.0, 25.0);
    const CollisionEllipse e;
    for (int i = 0; i < 2000; ++i) {
      const double dcx = pos(rng);
      const double dcy = 0.3 * pos(rng);
      double v1 = var(rng);
      double v2 = var(rng);
      if (v1 > v2) {
        std::swap(v1, v2);
      }
      CHECK(tightened_collision_value(e, dcx, dcy, v2) >=
            tightened_collision_value(e, dcx, dcy, v1) - 1e-15);
    }
  }
  SUBCASE("far apart is deeply feasible") {
    const CollisionEllipse e;
    CHECK(tightened_collision_value(e, 500.0, 0.0, 0.0) < -5000.0);
  }
  SUBCASE("negative variance is rejected") {
    const CollisionEllipse e;
    CHECK_THROWS_AS(tightened_collision_value(e, 1.0, 1.0, -0.5),
                    std::invalid_argument);
  }
}

TEST_CASE("the body centroid sits half a length ahead of the rear axle") {
  const VehicleGeometry vehicle;  // length 4.5
  const Eigen::Vector2d straight =
      body_centroid(AgentState{3.0, -1.0, 20.0, 0.0, 0.0}, vehicle);
  CHECK(straight.x() == doctest::Approx(5.25).epsilon(1e-14));
  CHECK(straight.y() == doctest::Approx(-1.0).epsilon(1e-14));

  const Eigen::Vector2d sideways =
      body_centroid(AgentState{3.0, -1.0, 20.0, kPi / 2.0, 0.0}, vehicle);
  CHECK(std::abs(sideways.x() - 3.0) < 1e-12);
  CHECK(sideways.y() == doctest::Approx(1.25).epsilon(1e-12));
}

TEST_CASE("the joint input stacks ego, follower, leader, input") {
  Vec5 ego, fol, led;
  ego << 1, 2, 3, 4, 5;
  fol << 6, 7, 8, 9, 10;
  led << 11, 12, 13, 14, 15;
  const Eigen::VectorXd z = joint_input(ego, fol, led, Vec2(16, 17));
  REQUIRE(z.size() == kJointDim);
  for (int i = 0; i < 17; ++i) {
    CHECK(z[i] == static_cast<double>(i + 1));
  }
}

TEST_CASE("the feature map extracts speeds and relative offsets") {
  const Eigen::MatrixXd c = joint_feature_map();
  REQUIRE(c.rows() == 6);
  REQUIRE(c.cols() == kJointDim);
  std::mt19937 rng(72);
  std::normal_distribution<double> gauss(0.0, 10.0);
  Eigen::VectorXd z(kJointDim);
  for (int i = 0; i < kJointDim; ++i) {
    z[i] = gauss(rng);
  }
  const Eigen::VectorXd f = c * z;
  CHECK(f[0] == z[2]);              // ego speed
  CHECK(f[1] == z[7]);              // follower speed
  CHECK(f[2] == z[12]);             // leader speed
  CHECK(f[3] == z[5] - z[0]);       // follower ahead of ego
  CHECK(f[4] == z[5] - z[10]);      // follower behind leader
  CHECK(f[5] == z[6] - z[1]);       // lateral gap to ego
}

TEST_CASE("the ego rollout is the recursive integrator chain") {
  const MergeScene scene = small_scene(5);
  std::mt19937 rng(73);
  const Eigen::VectorXd u = random_inputs(rng, scene);
  const std::vector<AgentState> traj = rollout_ego(scene, u);
  REQUIRE(traj.size() == 6);
  AgentState state = scene.ego;
  CHECK(traj[0].x == state.x);
  for (int i = 0; i < 5; ++i) {
    state = dyn::rk4_step(state, AgentInput::from_vector(u.segment<2>(2 * i)),
                          scene.vehicle, scene.dt);
    CHECK(std::abs(traj[static_cast<std::size_t>(i) + 1].x - state.x) < 1e-15);
    CHECK(std::abs(traj[static_cast<std::size_t>(i) + 1].y - state.y) < 1e-15);
    CHECK(std::abs(traj[static_cast<std::size_t>(i) + 1].speed - state.speed) <
          1e-15);
  }
  CHECK_THROWS_AS(rollout_ego(scene, Eigen::VectorXd::Zero(7)),
                  std::invalid_argument);
}

TEST_CASE("the leader rolls out at constant speed") {
  const MergeScene scene = small_scene(3);
  const std::vector<AgentState> traj = rollout_leader(scene, 12);
  REQUIRE(traj.size() == 13);
  for (int i = 0; i <= 12; ++i) {
    const auto& s = traj[static_cast<std::size_t>(i)];
    CHECK(s.x == doctest::Approx(0.0 + 25.0 * 0.25 * i).epsilon(1e-14));
    CHECK(s.y == 3.5);
    CHECK(s.speed == 25.0);
    CHECK(s.heading == 0.0);
  }
}

TEST_CASE("an empty residual model reproduces the fixed-variance baseline") {
  const MergeScene scene = small_scene(6);
  std::mt19937 rng(74);
  const Eigen::VectorXd u = random_inputs(rng, scene);

  const auto model = empty_model();
  const std::vector<belief::GaussianBelief> learned =
      predict_follower(scene, wrap(model), u);
  const std::vector<belief::GaussianBelief> fixed =
      predict_follower(scene, prior_posterior(0.3), u);
  REQUIRE(learned.size() == fixed.size());
  for (std::size_t i = 0; i < learned.size(); ++i) {
    CHECK((learned[i].mean - fixed[i].mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((learned[i].covariance - fixed[i].covariance).cwiseAbs().maxCoeff() <
          1e-12);
  }

  // The assembled problems agree at the same inputs, objective and all rows.
  const nlp::OcpSpec gp_spec = assemble_gp_mpc(scene, model);
  const nlp::OcpSpec cv_spec = assemble_cv_mpc(scene);
  CHECK(gp_spec.objective(u, nullptr) ==
        doctest::Approx(cv_spec.objective(u, nullptr)).epsilon(1e-12));
  Eigen::VectorXd gp_rows, cv_rows;
  gp_spec.hard.eval(u, gp_rows, nullptr);
  cv_spec.hard.eval(u, cv_rows, nullptr);
  CHECK((gp_rows - cv_rows).cwiseAbs().maxCoeff() < 1e-10);
  gp_spec.soft.eval(u, gp_rows, nullptr);
  cv_spec.soft.eval(u, cv_rows, nullptr);
  CHECK((gp_rows - cv_rows).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("planned inputs shape the follower covariance once data arrives") {
  const MergeScene scene = small_scene(8);
  const auto model = one_point_model(scene, 0.5);

  Eigen::VectorXd push = Eigen::VectorXd::Zero(16);
  Eigen::VectorXd brake = Eigen::VectorXd::Zero(16);
  for (int i = 0; i < 8; ++i) {
    push[2 * i] = scene.bounds.accel_max;
    brake[2 * i] = -scene.bounds.accel_max;
  }

  const auto learned_push = predict_follower(scene, wrap(model), push);
  const auto learned_brake = predict_follower(scene, wrap(model), brake);
  const double learned_gap =
      (learned_push.back().covariance - learned_brake.back().covariance)
          .cwiseAbs()
          .maxCoeff();
  CHECK(learned_gap > 1e-12);

  const auto fixed_push = predict_follower(scene, prior_posterior(0.3), push);
  const auto fixed_brake = predict_follower(scene, prior_posterior(0.3), brake);
  for (std::size_t i = 0; i < fixed_push.size(); ++i) {
    CHECK((fixed_push[i].covariance - fixed_brake[i].covariance)
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
}

TEST_CASE("inducing points are spread evenly over the previous plan") {
  std::vector<Eigen::VectorXd> trajectory;
  for (int i = 0; i < 13; ++i) {
    trajectory.push_back(Eigen::VectorXd::Constant(1, static_cast<double>(i)));
  }
  SUBCASE("four over thirteen") {
    const auto picked = select_inducing(trajectory, 4);
    REQUIRE(picked.size() == 4);
    CHECK(picked[0][0] == 0.0);
    CHECK(picked[1][0] == 4.0);
    CHECK(picked[2][0] == 8.0);
    CHECK(picked[3][0] == 12.0);
  }
  SUBCASE("a single point takes the middle") {
    const auto picked = select_inducing(trajectory, 1);
    REQUIRE(picked.size() == 1);
    CHECK(picked[0][0] == 6.0);
  }
  SUBCASE("asking for more than available returns everything") {
    CHECK(select_inducing(trajectory, 13).size() == 13);
    CHECK(select_inducing(trajectory, 40).size() == 13);
  }
  SUBCASE("bad arguments throw") {
    CHECK_THROWS_AS(select_inducing({}, 3), std::invalid_argument);
    CHECK_THROWS_AS(select_inducing(trajectory, 0), std::invalid_argument);
  }
}

TEST_CASE("the joint trajectory repeats the last input at the terminal point") {
  const MergeScene scene = small_scene(4);
  std::mt19937 rng(75);
  const Eigen::VectorXd u = random_inputs(rng, scene);
  const auto traj = joint_trajectory(scene, prior_posterior(0.3), u);
  REQUIRE(traj.size() == 5);
  for (const auto& z : traj) {
    CHECK(z.size() == kJointDim);
  }
  CHECK(traj[0][15] == u[0]);
  CHECK(traj[3][16] == u[7]);
  CHECK(traj[4][15] == u[6]);  // terminal reuses step 3's input
  CHECK(traj[4][16] == u[7]);
}

TEST_CASE("the tracking objective vanishes on the reference trajectory") {
  MergeScene scene = small_scene(12);
  scene.ego = AgentState{-100.0, 0.0, 31.0, 0.0, 0.0};
  const nlp::OcpSpec spec = assemble_cv_mpc(scene);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(24);
  CHECK(std::abs(spec.objective(zero, nullptr)) < 1e-12);

  std::mt19937 rng(76);
  const Eigen::VectorXd u = random_inputs(rng, scene);
  CHECK(spec.objective(u, nullptr) > 1e-4);
}

TEST_CASE("the objective is the scripted tracking + effort sum") {
  MergeScene scene = small_scene(3);
  scene.previous_input = AgentInput{1.0, 0.01};
  std::mt19937 rng(77);
  for (int round = 0; round < 5; ++round) {
    const Eigen::VectorXd u = random_inputs(rng, scene);
    const std::vector<AgentState> ego = rollout_ego(scene, u);

    double expected = 0.0;
    for (int i = 1; i <= 3; ++i) {
      const Vec5 state = ego[static_cast<std::size_t>(i)].vector();
      const Vec5 ref = reference_state(scene.lane, state[0], scene.target_speed);
      const Vec5 err = state - ref;
      expected += (scene.weights.state.array() * err.array().square()).sum();
    }
    Vec2 prev = scene.previous_input.vector();
    for (int i = 0; i < 3; ++i) {
      const Vec2 ui = u.segment<2>(2 * i);
      expected += (scene.weights.input.array() * ui.array().square()).sum();
      expected += (scene.weights.input_rate.array() *
                   (ui - prev).array().square())
                      .sum();
      prev = ui;
    }

    const nlp::OcpSpec spec = assemble_cv_mpc(scene);
    CHECK(spec.objective(u, nullptr) ==
          doctest::Approx(expected).epsilon(1e-10));
    const nlp::OcpSpec gp_spec = assemble_gp_mpc(scene, empty_model());
    CHECK(gp_spec.objective(u, nullptr) ==
          doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("the assembled problem has the documented shape") {
  const MergeScene scene = small_scene(12);
  const nlp::OcpSpec spec = assemble_cv_mpc(scene);
  CHECK(spec.num_inputs == 24);
  CHECK(spec.hard.count == 7 * 12);
  CHECK(spec.soft.count == 2 * 12);
  CHECK(spec.soft_penalty == 1e4);
  for (int i = 0; i < 12; ++i) {
    CHECK(spec.input_lower[2 * i] == -5.0);
    CHECK(spec.input_upper[2 * i] == 5.0);
    CHECK(spec.input_lower[2 * i + 1] ==
          doctest::Approx(-deg_to_rad(5.0)).epsilon(1e-14));
    CHECK(spec.input_upper[2 * i + 1] ==
          doctest::Approx(deg_to_rad(5.0)).epsilon(1e-14));
  }
}

TEST_CASE("assembled derivatives survive an independent finite-difference audit") {
  // Start inside the merge ramp so the centerline slope terms are live.
  MergeScene scene = small_scene(3);
  scene.ego = AgentState{15.0, 0.2, 31.0, 0.01, 0.005};
  const auto model = one_point_model(scene, 0.4);
  const nlp::OcpSpec spec = assemble_gp_mpc(scene, model);

  std::mt19937 rng(78);
  const Eigen::VectorXd u = 0.5 * random_inputs(rng, scene);
  const double h = 1e-6;

  Eigen::VectorXd grad;
  const double f0 = spec.objective(u, &grad);
  CHECK(std::isfinite(f0));
  for (int p = 0; p < u.size(); ++p) {
    Eigen::VectorXd up = u, um = u;
    up[p] += h;
    um[p] -= h;
    const double fd =
        (spec.objective(up, nullptr) - spec.objective(um, nullptr)) / (2 * h);
    CHECK(grad[p] == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
  }

  Eigen::VectorXd values;
  Eigen::MatrixXd jac;
  spec.hard.eval(u, values, &jac);
  Eigen::MatrixXd soft_jac;
  Eigen::VectorXd soft_values;
  spec.soft.eval(u, soft_values, &soft_jac);
  for (int p = 0; p < u.size(); ++p) {
    Eigen::VectorXd up = u, um = u;
    up[p] += h;
    um[p] -= h;
    Eigen::VectorXd vp, vm;
    spec.hard.eval(up, vp, nullptr);
    spec.hard.eval(um, vm, nullptr);
    const Eigen::VectorXd fd = (vp - vm) / (2 * h);
    CHECK((jac.col(p) - fd).cwiseAbs().maxCoeff() < 1e-5);
    spec.soft.eval(up, vp, nullptr);
    spec.soft.eval(um, vm, nullptr);
    const Eigen::VectorXd soft_fd = (vp - vm) / (2 * h);
    CHECK((soft_jac.col(p) - soft_fd).cwiseAbs().maxCoeff() < 1e-5);
  }

  // The canonical problem assembly runs its own directional self-check.
  CHECK_NOTHROW(nlp::OcpProblem::build(spec, Eigen::VectorXd::Zero(6), true));
}

TEST_CASE("malformed scenes and models are rejected") {
  SUBCASE("zero horizon") {
    MergeScene scene = small_scene(3);
    scene.horizon = 0;
    CHECK_THROWS_AS(assemble_cv_mpc(scene), std::invalid_argument);
  }
  SUBCASE("negative sampling time") {
    MergeScene scene = small_scene(3);
    scene.dt = -0.25;
    CHECK_THROWS_AS(assemble_cv_mpc(scene), std::invalid_argument);
  }
  SUBCASE("null residual model") {
    CHECK_THROWS_AS(assemble_gp_mpc(small_scene(3), nullptr),
                    std::invalid_argument);
  }
  SUBCASE("residual model over the wrong input space") {
    gp::KernelParams params;
    params.prior_variance = 0.3;
    params.length_scales = Eigen::VectorXd::Constant(5, 2.0);
    params.feature_map = Eigen::MatrixXd::Identity(5, 5);
    const auto model = std::make_shared<gp::SparseGpModel>(
        gp::SparseGpModel::fit(params, gp::TrainingSet(),
                               {Eigen::VectorXd::Zero(5)}));
    CHECK_THROWS_AS(assemble_gp_mpc(small_scene(3), model),
                    std::invalid_argument);
  }
}

TEST_CASE("one full evaluation with derivatives stays well under budget") {
  MergeScene scene = small_scene(12);
  std::mt19937 rng(79);

  // A realistically sized residual model: 80 pairs, 4 inducing points.
  gp::TrainingSet data;
  std::normal_distribution<double> jitter(0.0, 1.0);
  std::vector<Eigen::VectorXd> pool;
  for (int i = 0; i < 80; ++i) {
    Eigen::VectorXd z =
        joint_input(scene.ego.vector(), scene.follower.vector(),
                    scene.leader.vector(), Vec2::Zero());
    for (int d = 0; d < kJointDim; ++d) {
      z[d] += jitter(rng);
    }
    data.append(z, 0.1 * jitter(rng));
    pool.push_back(z);
  }
  const auto model = std::make_shared<gp::SparseGpModel>(gp::SparseGpModel::fit(
      interaction_kernel(), data, select_inducing(pool, 4)));
  const nlp::OcpSpec spec = assemble_gp_mpc(scene, model);

  const auto begin = std::chrono::steady_clock::now();
  const int evals = 50;
  double checksum = 0.0;
  for (int i = 0; i < evals; ++i) {
    Eigen::VectorXd u = random_inputs(rng, scene);  // distinct: defeats caching
    Eigen::VectorXd grad;
    checksum += spec.objective(u, &grad);
    Eigen::VectorXd values;
    Eigen::MatrixXd jac;
    spec.hard.eval(u, values, &jac);
    spec.soft.eval(u, values, &jac);
  }
  const double ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - begin)
                        .count() /
                    evals;
  CHECK(std::isfinite(checksum));
  CHECK(ms < 10.0);
}
