#include "dualmpc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <utility>

#include <json.hpp>

#include "dualmpc/belief.hpp"
#include "dualmpc/csv.hpp"
#include "dualmpc/driver.hpp"
#include "dualmpc/planner.hpp"
#include "dualmpc/solver.hpp"
#include "dualmpc/vehicle.hpp"

namespace dmpc::sim {

namespace {
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
}

const char* controller_name(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::LearnedResidual:
      return "gp";
    case ControllerKind::ConstantVelocity:
      return "cv";
  }
  return "?";
}

const char* outcome_name(MergeOutcome outcome) {
  switch (outcome) {
    case MergeOutcome::MergedBetween:
      return "merged_between";
    case MergeOutcome::MergedBehind:
      return "merged_behind";
    case MergeOutcome::Failed:
      return "failed";
  }
  return "?";
}

bool bodies_overlap(const AgentState& a, const AgentState& b,
                    const VehicleGeometry& geom) {
  const Eigen::Vector2d ca = plan::body_centroid(a, geom);
  const Eigen::Vector2d cb = plan::body_centroid(b, geom);
  const Eigen::Vector2d half(0.5 * geom.length, 0.5 * geom.width);

  const Eigen::Vector2d axes[4] = {
      {std::cos(a.heading), std::sin(a.heading)},
      {-std::sin(a.heading), std::cos(a.heading)},
      {std::cos(b.heading), std::sin(b.heading)},
      {-std::sin(b.heading), std::cos(b.heading)},
  };
  const Eigen::Vector2d d = cb - ca;
  for (const Eigen::Vector2d& axis : axes) {
    const double ra =
        half[0] * std::abs(axis.dot(axes[0])) + half[1] * std::abs(axis.dot(axes[1]));
    const double rb =
        half[0] * std::abs(axis.dot(axes[2])) + half[1] * std::abs(axis.dot(axes[3]));
    if (std::abs(axis.dot(d)) > ra + rb) {
      return false;  // separating axis found
    }
  }
  return true;
}

double trial_start_x(const cfg::ScenarioConfig& config, int trial_index) {
  if (trial_index < 0 || trial_index >= config.ego.trial_count) {
    throw std::invalid_argument("trial index out of range");
  }
  if (config.ego.trial_count == 1) {
    return config.ego.start_x_min;
  }
  const double span = config.ego.start_x_max - config.ego.start_x_min;
  return config.ego.start_x_min +
         span * static_cast<double>(trial_index) /
             static_cast<double>(config.ego.trial_count - 1);
}

gp::KernelParams kernel_params(const cfg::ScenarioConfig& config) {
  gp::KernelParams params;
  params.prior_variance = config.residual.prior_variance;
  params.length_scales = config.residual.length_scales;
  params.noise_variance = config.residual.noise_variance;
  params.feature_map = plan::joint_feature_map();
  params.validate();
  return params;
}

plan::MergeScene make_scene(const cfg::ScenarioConfig& config,
                            const AgentState& ego, const AgentState& follower,
                            const AgentState& leader,
                            const AgentInput& previous_input) {
  plan::MergeScene scene;
  scene.ego = ego;
  scene.follower = follower;
  scene.leader = leader;
  scene.previous_input = previous_input;
  scene.horizon = config.horizon;
  scene.dt = config.timing.dt;
  scene.target_speed = config.ego.target_speed;
  scene.residual_prior_variance = config.residual.prior_variance;
  scene.vehicle = config.vehicle;
  scene.lane = config.lane;
  scene.weights = config.weights;
  scene.ellipse = config.ellipse;
  scene.bounds = config.bounds;
  return scene;
}

TrialResult run_trial(const cfg::ScenarioConfig& config, ControllerKind kind,
                      int trial_index, const gp::TrainingSet& pretraining) {
  const int total_steps = config.steps_per_trial();
  const double dt = config.timing.dt;
  const int horizon = config.horizon;

  TrialResult out;
  out.trial_index = trial_index;
  out.controller = kind;
  out.ego_start_x = trial_start_x(config, trial_index);

  AgentState ego{out.ego_start_x, config.ego.start_y, config.ego.start_speed,
                 0.0, 0.0};
  AgentState fol{config.follower.start_x, config.follower.start_y,
                 config.follower.start_speed, 0.0, 0.0};
  AgentState lead{config.leader.start_x, config.leader.start_y,
                  config.leader.start_speed, 0.0, 0.0};

  gp::TrainingSet data(static_cast<std::size_t>(config.residual.window_capacity));
  for (std::size_t i = 0; i < pretraining.size(); ++i) {
    data.append(pretraining.input(i), pretraining.output(i));
  }
  const gp::KernelParams kernel = kernel_params(config);

  nlp::SolveOptions solve_options;
  solve_options.kkt_tolerance = config.solver.kkt_tolerance;
  solve_options.max_iterations = config.solver.max_iterations;

  AgentInput previous_input{};
  Eigen::VectorXd previous_plan;
  std::vector<Eigen::VectorXd> previous_traj;

  const double band = config.outcome.lane_fraction * config.lane.lane_width;
  const int settle_steps =
      std::max(1, static_cast<int>(std::lround(config.outcome.settle_s / dt)));
  int inband_count = 0;

  out.steps.reserve(static_cast<std::size_t>(total_steps));
  for (int k = 0; k < total_steps; ++k) {
    const plan::MergeScene scene =
        make_scene(config, ego, fol, lead, previous_input);

    Eigen::VectorXd warm = Eigen::VectorXd::Zero(2 * horizon);
    if (previous_plan.size() == 2 * horizon) {
      warm.head(2 * (horizon - 1)) = previous_plan.tail(2 * (horizon - 1));
      warm.tail<2>() = previous_plan.tail<2>();
    }

    StepRecord rec;
    rec.step = k;
    rec.time_s = k * dt;
    rec.ego = ego;
    rec.follower = fol;
    rec.leader = lead;
    rec.training_size = static_cast<int>(data.size());

    belief::PosteriorFn posterior =
        plan::prior_posterior(config.residual.prior_variance);
    Eigen::VectorXd solution;
    bool plan_ok = false;
    try {
      nlp::OcpSpec spec;
      if (kind == ControllerKind::LearnedResidual) {
        std::vector<Eigen::VectorXd> pool = previous_traj;
        if (pool.empty()) {
          // First step: no previous plan, so seed the pool from a zero-input
          // rollout under the prior.
          pool = plan::joint_trajectory(scene, posterior, warm);
        }
        const std::vector<Eigen::VectorXd> inducing =
            plan::select_inducing(pool, config.residual.inducing_count);
        auto model = std::make_shared<const gp::SparseGpModel>(
            gp::SparseGpModel::fit(kernel, data, inducing));
        posterior = [model](const Eigen::VectorXd& z) {
          return model->posterior(z);
        };
        spec = plan::assemble_gp_mpc(scene, model);
      } else {
        spec = plan::assemble_cv_mpc(scene);
      }
      const nlp::OcpProblem problem =
          nlp::OcpProblem::build(std::move(spec), warm,
                                 /*verify_derivatives=*/false);
      const nlp::SolveResult res = nlp::solve(problem, solve_options);
      rec.solve_ms = res.solve_time_ms;
      rec.iterations = res.iterations;
      if (res.status != nlp::SolveStatus::NumericalFailure) {
        // An iteration-capped solve still returns its best iterate; apply it.
        solution = res.inputs;
        plan_ok = true;
        rec.solver_status =
            res.status == nlp::SolveStatus::Converged ? 0 : 1;
        if (res.status == nlp::SolveStatus::MaxIterations) {
          ++out.solver_iteration_caps;
        }
      }
    } catch (const NumericalError&) {
      // fall through to the shifted-plan fallback
    }
    if (!plan_ok) {
      rec.solver_status = 2;
      ++out.solver_failures;
      solution = warm;  // shifted previous plan (zero inputs on the first step)
    }
    const AgentInput applied = AgentInput::from_vector(solution.head<2>());
    rec.applied = applied;

    const std::vector<belief::GaussianBelief> prediction =
        plan::predict_follower(scene, posterior, solution);
    rec.predicted_follower_speeds.resize(static_cast<std::size_t>(horizon));
    for (int i = 1; i <= horizon; ++i) {
      rec.predicted_follower_speeds[static_cast<std::size_t>(i - 1)] =
          prediction[static_cast<std::size_t>(i)].mean[2];
    }
    const belief::GaussianBelief& terminal = prediction.back();
    rec.predicted_terminal_follower_x = terminal.mean[0];
    rec.predicted_terminal_follower_sigma =
        std::sqrt(std::max(0.0, terminal.covariance(0, 0)));

    const Eigen::VectorXd z = plan::joint_input(
        ego.vector(), fol.vector(), lead.vector(), applied.vector());
    const gp::PosteriorEval at_z = posterior(z);
    rec.residual_pred_mean = at_z.mean;
    rec.residual_pred_var = at_z.variance;

    // World step: ego follows the plan, follower reacts, leader cruises.
    const double fol_accel = driver::mr_idm_accel(
        config.follower_driver, fol, ego, lead, applied.accel, config.vehicle);
    rec.follower_accel = fol_accel;
    const AgentState ego_next = dyn::rk4_step(ego, applied, config.vehicle, dt);
    const AgentState fol_next =
        dyn::rk4_step(fol, AgentInput{fol_accel, 0.0}, config.vehicle, dt);
    const AgentState lead_next = dyn::cv_predict(lead, dt);

    rec.residual = fol_next.speed - fol.speed;
    data.append(z, rec.residual);
    out.steps.push_back(std::move(rec));

    ego = ego_next;
    fol = fol_next;
    lead = lead_next;
    previous_input = applied;
    previous_plan = solution;
    if (kind == ControllerKind::LearnedResidual) {
      previous_traj = plan::joint_trajectory(scene, posterior, solution);
    }

    if (bodies_overlap(ego, fol, config.vehicle) ||
        bodies_overlap(ego, lead, config.vehicle)) {
      out.collided = true;
      break;
    }
    if (std::abs(ego.y - config.lane.target_center_y) <= band) {
      ++inband_count;
    } else {
      inband_count = 0;
    }
    if (out.merge_step < 0 && inband_count >= settle_steps) {
      // State index k+1 closes the settled window.
      out.merge_step = std::max(0, k + 2 - settle_steps);
      out.outcome = (lead.x > ego.x && ego.x > fol.x)
                        ? MergeOutcome::MergedBetween
                        : MergeOutcome::MergedBehind;
    }
  }
  out.final_ego = ego;
  out.final_follower = fol;
  out.final_leader = lead;
  if (out.collided || out.merge_step < 0) {
    out.outcome = MergeOutcome::Failed;
    if (out.collided) {
      out.merge_step = -1;
    }
  }

  // Windowed speed-prediction error per step, truncated at the trial end.
  const int executed = static_cast<int>(out.steps.size());
  const auto realized_speed = [&](int state_index) {
    return state_index < executed
               ? out.steps[static_cast<std::size_t>(state_index)].follower.speed
               : out.final_follower.speed;
  };
  for (int k = 0; k < executed; ++k) {
    StepRecord& rec = out.steps[static_cast<std::size_t>(k)];
    const int window = std::min(horizon, executed - k);
    double acc = 0.0;
    for (int i = 1; i <= window; ++i) {
      acc += std::abs(rec.predicted_follower_speeds[static_cast<std::size_t>(i - 1)] -
                      realized_speed(k + i));
    }
    rec.prediction_error = acc / window;
  }

  // Aggregates.
  const int premerge_end = out.merge_step < 0 ? executed
                                              : std::min(out.merge_step, executed);
  double err_acc = 0.0;
  int err_count = 0;
  double ms_acc = 0.0;
  int realtime = 0;
  out.max_solve_ms = 0.0;
  for (int k = 0; k < executed; ++k) {
    const StepRecord& rec = out.steps[static_cast<std::size_t>(k)];
    if (k < premerge_end && std::isfinite(rec.prediction_error)) {
      err_acc += rec.prediction_error;
      ++err_count;
    }
    ms_acc += rec.solve_ms;
    out.max_solve_ms = std::max(out.max_solve_ms, rec.solve_ms);
    if (rec.solve_ms <= dt * 1000.0) {
      ++realtime;
    }
  }
  out.premerge_mean_error = err_count > 0 ? err_acc / err_count : kNan;
  out.mean_solve_ms = executed > 0 ? ms_acc / executed : kNan;
  out.realtime_fraction =
      executed > 0 ? static_cast<double>(realtime) / executed : 0.0;
  return out;
}

gp::TrainingSet collect_pretraining(const cfg::ScenarioConfig& config) {
  cfg::ScenarioConfig bootstrap = config;
  bootstrap.ego.start_x_min = config.pretrain.run_start_x;
  bootstrap.ego.start_x_max = config.pretrain.run_start_x;
  bootstrap.ego.trial_count = 1;
  const TrialResult run = run_trial(bootstrap, ControllerKind::ConstantVelocity,
                                    0, gp::TrainingSet());
  gp::TrainingSet out;
  const int keep = std::min<int>(config.pretrain.points,
                                 static_cast<int>(run.steps.size()));
  for (int k = 0; k < keep; ++k) {
    const StepRecord& rec = run.steps[static_cast<std::size_t>(k)];
    const Eigen::VectorXd z =
        plan::joint_input(rec.ego.vector(), rec.follower.vector(),
                          rec.leader.vector(), rec.applied.vector());
    out.append(z, rec.residual);
  }
  return out;
}

void write_pretraining_csv(const std::string& path,
                           const gp::TrainingSet& data) {
  std::vector<std::string> columns;
  for (int i = 0; i < plan::kJointDim; ++i) {
    columns.push_back("z" + std::to_string(i));
  }
  columns.push_back("y");
  io::CsvWriter csv(std::move(columns));
  for (std::size_t i = 0; i < data.size(); ++i) {
    Eigen::VectorXd row(plan::kJointDim + 1);
    row.head(plan::kJointDim) = data.input(i);
    row[plan::kJointDim] = data.output(i);
    csv.append_numeric(row);
  }
  csv.write(path);
}

gp::TrainingSet read_pretraining_csv(const std::string& path) {
  const io::CsvTable table = io::read_csv(path);
  if (table.columns.size() != plan::kJointDim + 1 ||
      table.columns.front() != "z0" || table.columns.back() != "y") {
    throw std::invalid_argument("pre-training fixture has unexpected columns: " +
                                path);
  }
  gp::TrainingSet out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    Eigen::VectorXd z(plan::kJointDim);
    for (Eigen::Index i = 0; i < plan::kJointDim; ++i) {
      z[i] = table.number(r, static_cast<std::size_t>(i));
    }
    out.append(z, table.number(r, static_cast<std::size_t>(plan::kJointDim)));
  }
  return out;
}

BatchResult run_batch(const cfg::ScenarioConfig& config,
                      const BatchOptions& options) {
  if (options.controllers.empty()) {
    throw std::invalid_argument("run_batch: no controllers requested");
  }
  BatchResult result;
  result.config = config;
  if (options.trial_override > 0) {
    result.config.ego.trial_count = options.trial_override;
  }
  const cfg::ScenarioConfig& cfg = result.config;

  gp::TrainingSet pretraining;
  if (options.pretrain) {
    pretraining = cfg.pretrain.source.empty()
                      ? collect_pretraining(cfg)
                      : read_pretraining_csv(cfg.pretrain.source);
    result.pretrained = true;
    result.pretrain_points = static_cast<int>(pretraining.size());
  }

  struct Task {
    ControllerKind kind;
    int trial;
  };
  std::vector<Task> tasks;
  for (const ControllerKind kind : options.controllers) {
    for (int t = 0; t < cfg.ego.trial_count; ++t) {
      tasks.push_back(Task{kind, t});
    }
  }
  result.trials.resize(tasks.size());

  const int jobs = std::clamp<int>(options.jobs, 1, static_cast<int>(tasks.size()));
  std::atomic<std::size_t> next{0};
  std::atomic<int> done{0};
  std::mutex progress_mutex;
  std::exception_ptr failure;
  std::mutex failure_mutex;

  const auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) {
        return;
      }
      try {
        result.trials[i] =
            run_trial(cfg, tasks[i].kind, tasks[i].trial, pretraining);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) {
          failure = std::current_exception();
        }
        return;
      }
      if (options.progress) {
        const std::lock_guard<std::mutex> lock(progress_mutex);
        options.progress(++done, static_cast<int>(tasks.size()));
      } else {
        ++done;
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(jobs));
    for (int j = 0; j < jobs; ++j) {
      pool.emplace_back(worker);
    }
    for (std::thread& t : pool) {
      t.join();
    }
  }
  if (failure) {
    std::rethrow_exception(failure);
  }

  // Aggregate per controller, in grid order.
  for (const ControllerKind kind : options.controllers) {
    ControllerSummary s;
    s.controller = kind;
    double err_acc = 0.0;
    int err_trials = 0;
    double ms_acc = 0.0;
    double steps_acc = 0.0;
    double realtime_acc = 0.0;
    for (const TrialResult& trial : result.trials) {
      if (trial.controller != kind) {
        continue;
      }
      ++s.trials;
      switch (trial.outcome) {
        case MergeOutcome::MergedBetween:
          ++s.merged_between;
          break;
        case MergeOutcome::MergedBehind:
          ++s.merged_behind;
          break;
        case MergeOutcome::Failed:
          ++s.failed;
          break;
      }
      if (trial.collided) {
        ++s.collisions;
      }
      if (std::isfinite(trial.premerge_mean_error)) {
        err_acc += trial.premerge_mean_error;
        ++err_trials;
      }
      const double steps = static_cast<double>(trial.steps.size());
      ms_acc += trial.mean_solve_ms * steps;
      realtime_acc += trial.realtime_fraction * steps;
      steps_acc += steps;
      s.max_solve_ms = std::max(s.max_solve_ms, trial.max_solve_ms);
      s.solver_failures += trial.solver_failures;
    }
    s.successes = s.merged_between + s.merged_behind;
    s.mean_abs_error = err_trials > 0 ? err_acc / err_trials : kNan;
    s.mean_solve_ms = steps_acc > 0.0 ? ms_acc / steps_acc : kNan;
    s.realtime_fraction = steps_acc > 0.0 ? realtime_acc / steps_acc : 0.0;
    result.summaries.push_back(s);
  }
  return result;
}

namespace {

nlohmann::json summary_payload(const BatchResult& result) {
  nlohmann::json root;
  root["config"] = nlohmann::json::parse(cfg::config_to_json(result.config));
  root["pretrained"] = result.pretrained;
  root["pretrain_points"] = result.pretrain_points;
  root["controllers"] = nlohmann::json::array();
  for (const ControllerSummary& s : result.summaries) {
    root["controllers"].push_back(
        {{"controller", controller_name(s.controller)},
         {"trials", s.trials},
         {"successes", s.successes},
         {"merged_between", s.merged_between},
         {"merged_behind", s.merged_behind},
         {"failed", s.failed},
         {"collisions", s.collisions},
         {"mean_abs_error", s.mean_abs_error},
         {"mean_solve_ms", s.mean_solve_ms},
         {"max_solve_ms", s.max_solve_ms},
         {"realtime_fraction", s.realtime_fraction},
         {"solver_failures", s.solver_failures}});
  }
  root["trials"] = nlohmann::json::array();
  for (const TrialResult& t : result.trials) {
    root["trials"].push_back(
        {{"controller", controller_name(t.controller)},
         {"trial", t.trial_index},
         {"start_x", t.ego_start_x},
         {"outcome", outcome_name(t.outcome)},
         {"collided", t.collided},
         {"merge_time_s",
          t.merge_step >= 0 ? t.merge_step * result.config.timing.dt : kNan},
         {"premerge_mean_error", t.premerge_mean_error},
         {"mean_solve_ms", t.mean_solve_ms},
         {"max_solve_ms", t.max_solve_ms},
         {"realtime_fraction", t.realtime_fraction},
         {"solver_failures", t.solver_failures},
         {"solver_iteration_caps", t.solver_iteration_caps},
         {"steps", t.steps.size()}});
  }
  return root;
}

std::string trial_csv_name(ControllerKind kind, int trial_index) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "trial_%s_%02d.csv", controller_name(kind),
                trial_index);
  return buf;
}

void write_trial_table(const TrialResult& trial, const std::string& path) {
  io::CsvWriter csv({"k",          "t",           "ego_x",
                     "ego_y",      "ego_speed",   "ego_heading",
                     "ego_steer",  "fol_x",       "fol_y",
                     "fol_speed",  "lead_x",      "lead_y",
                     "lead_speed", "u_accel",     "u_steer_rate",
                     "fol_accel",  "residual",    "resid_pred_mean",
                     "resid_pred_var", "train_size", "solve_ms",
                     "iterations", "status",      "pred_err",
                     "pred_term_fol_x", "pred_term_fol_sigma"});
  for (const StepRecord& r : trial.steps) {
    Eigen::VectorXd row(26);
    row << r.step, r.time_s, r.ego.x, r.ego.y, r.ego.speed, r.ego.heading,
        r.ego.steer, r.follower.x, r.follower.y, r.follower.speed, r.leader.x,
        r.leader.y, r.leader.speed, r.applied.accel, r.applied.steer_rate,
        r.follower_accel, r.residual, r.residual_pred_mean, r.residual_pred_var,
        r.training_size, r.solve_ms, r.iterations, r.solver_status,
        r.prediction_error, r.predicted_terminal_follower_x,
        r.predicted_terminal_follower_sigma;
    csv.append_numeric(row);
  }
  csv.write(path);
}

}  // namespace

std::string summary_json(const BatchResult& result) {
  return summary_payload(result).dump(2) + "\n";
}

std::string write_batch_outputs(const BatchResult& result,
                                const std::string& out_dir,
                                bool write_trial_csv) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const fs::path base(out_dir);
  const fs::path summary_path = base / "summary.json";
  {
    std::FILE* f = std::fopen(summary_path.string().c_str(), "w");
    if (f == nullptr) {
      throw std::runtime_error("cannot write " + summary_path.string());
    }
    const std::string payload = summary_json(result);
    std::fwrite(payload.data(), 1, payload.size(), f);
    std::fclose(f);
  }
  if (write_trial_csv) {
    for (const TrialResult& trial : result.trials) {
      write_trial_table(
          trial,
          (base / trial_csv_name(trial.controller, trial.trial_index)).string());
    }
  }
  return summary_path.string();
}

}  // namespace dmpc::sim
