#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "dualmpc/belief.hpp"
#include "dualmpc/config.hpp"
#include "dualmpc/driver.hpp"
#include "dualmpc/gp.hpp"
#include "dualmpc/harness.hpp"
#include "dualmpc/planner.hpp"
#include "dualmpc/qp.hpp"
#include "dualmpc/solver.hpp"
#include "dualmpc/vehicle.hpp"

namespace dmpc::sim {

namespace {

/// One named check; failures append the measured/expected detail.
class Checker {
 public:
  explicit Checker(std::vector<std::string>& log) : log_(log) {}

  void expect(bool ok, const std::string& name, const std::string& detail = "") {
    std::string line = ok ? "ok:   " + name : "FAIL: " + name;
    if (!ok && !detail.empty()) {
      line += " (" + detail + ")";
    }
    log_.push_back(std::move(line));
    all_ok_ = all_ok_ && ok;
  }

  void expect_near(double got, double want, double tol, const std::string& name) {
    std::ostringstream detail;
    detail.precision(17);
    detail << "got " << got << ", want " << want << " +- " << tol;
    expect(std::isfinite(got) && std::abs(got - want) <= tol, name, detail.str());
  }

  bool all_ok() const { return all_ok_; }

 private:
  std::vector<std::string>& log_;
  bool all_ok_ = true;
};

Eigen::VectorXd canonical_joint(double shift) {
  Eigen::VectorXd z(plan::kJointDim);
  z << -90.0, 0.0, 31.0, 0.0, 0.0,      // ego
      -75.0, 3.5, 31.0, 0.0, 0.0,       // follower
      0.0, 3.5, 25.0, 0.0, 0.0,         // leader
      0.5, 0.01;                        // input
  z[0] += shift;
  return z;
}

}  // namespace

bool run_selftest(std::vector<std::string>& log) {
  Checker check(log);
  const cfg::ScenarioConfig config = cfg::default_config();

  // Dynamics: constant acceleration on a straight line integrates exactly.
  {
    const AgentState s0{0.0, 0.0, 30.0, 0.0, 0.0};
    const AgentState s1 =
        dyn::rk4_step(s0, AgentInput{2.0, 0.0}, config.vehicle, 0.25);
    check.expect_near(s1.x, 7.5625, 1e-15, "rk4 straight-line position");
    check.expect_near(s1.speed, 30.5, 1e-15, "rk4 straight-line speed");
    check.expect_near(
        dyn::bicycle_derivative((Vec5() << 0, 0, 20, 0, 0.05).finished(),
                                Vec2(0.0, 0.0), VehicleGeometry{})[3],
        0.37067932130028736, 1e-15, "bicycle yaw rate");
  }

  // Kernel and exact regressor against frozen references.
  {
    const gp::KernelParams kernel = kernel_params(config);
    const Eigen::VectorXd za = canonical_joint(0.0);
    Eigen::VectorXd zb = za;
    zb[2] += 3.0;  // one ego-speed length scale away
    check.expect_near(gp::kernel_eval(kernel, za, za), 0.3, 1e-15,
                      "kernel at zero distance");
    check.expect_near(gp::kernel_eval(kernel, za, zb), 0.18195919791379003,
                      1e-15, "kernel one length scale away");

    gp::TrainingSet single;
    single.append(za, 0.5);
    const gp::GpModel model = gp::GpModel::fit(kernel, single);
    const gp::PosteriorEval at = model.posterior(za);
    check.expect_near(at.mean, 0.49999999995, 1e-12, "single-point mean");
    check.expect_near(at.variance, 3.000000248221113e-11, 1e-15,
                      "single-point variance");
  }

  // Sparse regressor with no data reproduces the prior exactly.
  {
    const gp::KernelParams kernel = kernel_params(config);
    const gp::SparseGpModel empty = gp::SparseGpModel::fit(
        kernel, gp::TrainingSet(), {canonical_joint(0.0), canonical_joint(5.0)});
    const gp::PosteriorEval at = empty.posterior(canonical_joint(-2.0));
    check.expect(at.mean == 0.0 && at.variance == kernel.prior_variance &&
                     at.mean_gradient.isZero(0.0),
                 "empty sparse model equals the prior");
  }

  // QP: projection onto a half-space.
  {
    qp::QpProblem p;
    p.hessian = Eigen::MatrixXd::Identity(2, 2);
    p.linear = Eigen::VectorXd::Zero(2);
    p.ineq = Eigen::MatrixXd::Zero(1, 2);
    p.ineq(0, 0) = -1.0;  // -x0 <= -1
    p.ineq_rhs = Eigen::VectorXd::Constant(1, -1.0);
    p.eq = Eigen::MatrixXd::Zero(0, 2);
    p.eq_rhs = Eigen::VectorXd::Zero(0);
    const qp::QpResult r = qp::solve_qp(p);
    check.expect(r.feasible, "qp half-space projection feasible");
    check.expect_near(r.x[0], 1.0, 1e-12, "qp half-space projection solution");
    check.expect_near(r.ineq_multipliers[0], 1.0, 1e-12,
                      "qp half-space projection multiplier");
  }

  // Driver model: hard braking in the collision regime, mild braking far out.
  {
    check.expect_near(driver::idm_accel(config.follower_driver.idm, 31.0, -1.0,
                                        6.0),
                      -config.follower_driver.hard_decel, 1e-15,
                      "car-following collision regime");
    check.expect_near(driver::idm_accel(config.follower_driver.idm, 31.0, 80.0,
                                        6.0),
                      -1.92, 1e-10, "car-following closing response");
  }

  // Planner: with no residual pairs, the learned branch matches the baseline
  // bit for bit (objective and every constraint row).
  {
    plan::MergeScene scene =
        make_scene(config, AgentState{-90.0, 0.0, 31.0, 0.0, 0.0},
                   AgentState{-75.0, 3.5, 31.0, 0.0, 0.0},
                   AgentState{0.0, 3.5, 25.0, 0.0, 0.0}, AgentInput{});
    scene.horizon = 6;
    const gp::KernelParams kernel = kernel_params(config);
    auto empty_model = std::make_shared<const gp::SparseGpModel>(
        gp::SparseGpModel::fit(kernel, gp::TrainingSet(),
                               {canonical_joint(0.0), canonical_joint(4.0)}));
    nlp::OcpSpec learned = plan::assemble_gp_mpc(scene, empty_model);
    nlp::OcpSpec baseline = plan::assemble_cv_mpc(scene);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(2 * scene.horizon);
    for (int i = 0; i < scene.horizon; ++i) {
      u[2 * i] = 0.3 - 0.05 * i;
      u[2 * i + 1] = 0.002 * i;
    }
    const double fg = learned.objective(u, nullptr);
    const double fc = baseline.objective(u, nullptr);
    Eigen::VectorXd sg, sc;
    learned.soft.eval(u, sg, nullptr);
    baseline.soft.eval(u, sc, nullptr);
    check.expect(fg == fc && (sg.array() == sc.array()).all(),
                 "prior-equivalent branches agree exactly");
  }

  // Closed-loop smoke: a short baseline trial finishes, applies bounded
  // inputs and accumulates one residual pair per step.
  {
    cfg::ScenarioConfig small = config;
    small.timing.trial_duration_s = 2.0;
    small.horizon = 8;
    small.ego.trial_count = 1;
    const TrialResult trial = run_trial(
        small, ControllerKind::ConstantVelocity, 0, gp::TrainingSet());
    bool bounded = trial.steps.size() == 8;
    int expected_size = 0;
    for (const StepRecord& rec : trial.steps) {
      bounded = bounded && std::abs(rec.applied.accel) <= small.bounds.accel_max + 1e-9 &&
                std::abs(rec.applied.steer_rate) <=
                    small.bounds.steer_rate_max + 1e-9 &&
                rec.training_size == expected_size;
      ++expected_size;
    }
    check.expect(bounded, "short baseline trial runs within bounds");
  }

  // Scenario round trip.
  {
    const cfg::ScenarioConfig parsed =
        cfg::parse_config(cfg::config_to_json(config));
    check.expect(parsed.horizon == config.horizon &&
                     parsed.timing.dt == config.timing.dt &&
                     parsed.bounds.steer_max == config.bounds.steer_max &&
                     parsed.residual.length_scales ==
                         config.residual.length_scales,
                 "scenario JSON round trip");
  }

  return check.all_ok();
}

}  // namespace dmpc::sim
