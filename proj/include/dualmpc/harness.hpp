#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dualmpc/config.hpp"
#include "dualmpc/gp.hpp"
#include "dualmpc/types.hpp"

namespace dmpc::sim {

/// Which follower model the planner runs with.
enum class ControllerKind {
  LearnedResidual,   ///< sparse GP speed-residual model, updated online
  ConstantVelocity,  ///< fixed residual variance, no learning
};
const char* controller_name(ControllerKind kind);  // "gp" / "cv"

enum class MergeOutcome {
  MergedBetween,  ///< settled in the target lane ahead of the follower
  MergedBehind,   ///< settled in the target lane behind the follower
  Failed,         ///< never settled, or collided
};
const char* outcome_name(MergeOutcome outcome);

/// One closed-loop controller step. States are those *before* the step; the
/// inputs/accelerations are what was applied during it.
struct StepRecord {
  int step = 0;
  double time_s = 0.0;
  AgentState ego;
  AgentState follower;
  AgentState leader;
  AgentInput applied;
  double follower_accel = 0.0;
  double residual = 0.0;            ///< observed follower speed change
  double residual_pred_mean = 0.0;  ///< model prediction at the visited input
  double residual_pred_var = 0.0;
  int training_size = 0;            ///< pairs available when planning this step
  double solve_ms = 0.0;
  int iterations = 0;
  int solver_status = 0;  ///< 0 converged, 1 iteration cap, 2 numerical failure
  double prediction_error = 0.0;  ///< windowed speed-prediction error
                                  ///< (window truncated near the trial end)
  std::vector<double> predicted_follower_speeds;  ///< plan steps 1..horizon
  double predicted_terminal_follower_x = 0.0;
  double predicted_terminal_follower_sigma = 0.0;  ///< sqrt of terminal X variance
};

struct TrialResult {
  int trial_index = 0;
  ControllerKind controller = ControllerKind::LearnedResidual;
  double ego_start_x = 0.0;
  MergeOutcome outcome = MergeOutcome::Failed;
  bool collided = false;
  int merge_step = -1;  ///< first step of the settled window, -1 when failed
  std::vector<StepRecord> steps;
  AgentState final_ego;
  AgentState final_follower;
  AgentState final_leader;
  // Aggregates (NaN when undefined for this trial):
  double premerge_mean_error = 0.0;  ///< mean prediction error before the merge
  double mean_solve_ms = 0.0;
  double max_solve_ms = 0.0;
  double realtime_fraction = 0.0;  ///< share of solves finishing within dt
  int solver_failures = 0;
  int solver_iteration_caps = 0;
};

/// Axis-aligned-free oriented-rectangle overlap test (separating axes) of two
/// vehicle bodies centered at their body centroids.
bool bodies_overlap(const AgentState& a, const AgentState& b,
                    const VehicleGeometry& geom);

/// Ego starting abscissa of one grid trial.
double trial_start_x(const cfg::ScenarioConfig& config, int trial_index);

/// Kernel hyperparameters assembled from the scenario (feature map included).
gp::KernelParams kernel_params(const cfg::ScenarioConfig& config);

/// Planning scene for the current world state.
plan::MergeScene make_scene(const cfg::ScenarioConfig& config,
                            const AgentState& ego, const AgentState& follower,
                            const AgentState& leader,
                            const AgentInput& previous_input);

/// Runs one closed-loop trial. `pretraining` seeds the residual data set
/// (ignored by the constant-velocity controller, which still records
/// residuals). Deterministic.
TrialResult run_trial(const cfg::ScenarioConfig& config, ControllerKind kind,
                      int trial_index, const gp::TrainingSet& pretraining);

/// Bootstrap data collection: one constant-velocity-controller run from
/// config.pretrain.run_start_x, keeping the first config.pretrain.points
/// (input, residual) pairs.
gp::TrainingSet collect_pretraining(const cfg::ScenarioConfig& config);

/// Fixture round-trip (columns z0..z16,y).
void write_pretraining_csv(const std::string& path, const gp::TrainingSet& data);
gp::TrainingSet read_pretraining_csv(const std::string& path);

struct BatchOptions {
  std::vector<ControllerKind> controllers = {ControllerKind::LearnedResidual,
                                             ControllerKind::ConstantVelocity};
  bool pretrain = false;  ///< seed trials with pre-collected residual pairs
  int trial_override = 0; ///< > 0 replaces config.ego.trial_count
  int jobs = 1;
  std::function<void(int done, int total)> progress;  ///< optional, serialized
};

struct ControllerSummary {
  ControllerKind controller = ControllerKind::LearnedResidual;
  int trials = 0;
  int successes = 0;  ///< merged (either slot)
  int merged_between = 0;
  int merged_behind = 0;
  int failed = 0;
  int collisions = 0;
  double mean_abs_error = 0.0;  ///< mean over trials of the pre-merge error
  double mean_solve_ms = 0.0;
  double max_solve_ms = 0.0;
  double realtime_fraction = 0.0;
  int solver_failures = 0;
};

struct BatchResult {
  cfg::ScenarioConfig config;
  bool pretrained = false;
  int pretrain_points = 0;
  std::vector<TrialResult> trials;  ///< grouped by controller, grid order
  std::vector<ControllerSummary> summaries;
};

/// Runs the full trial grid for every requested controller. With jobs > 1 the
/// trials run on a thread pool; results are aggregated in grid order, so the
/// output is identical for any job count.
BatchResult run_batch(const cfg::ScenarioConfig& config,
                      const BatchOptions& options);

/// summary.json payload: configuration echo, per-controller aggregates and
/// the per-trial outcome table.
std::string summary_json(const BatchResult& result);

/// Writes summary.json plus per-trial CSVs (trial_<controller>_<index>.csv)
/// into `out_dir` (created if missing). Returns the summary path.
std::string write_batch_outputs(const BatchResult& result,
                                const std::string& out_dir,
                                bool write_trial_csv = true);

/// Derived plot tables from a previous run directory: per-trial time-lapse
/// poses (plot_timelapse_<controller>_<index>.csv) and the prediction-error
/// traces grouped by merge outcome (plot_error_<outcome>.csv). Groups with no
/// finished trials emit a warning line to `warnings` instead of a file.
void write_plot_tables(const std::string& run_dir, const std::string& out_dir,
                       std::vector<std::string>* warnings = nullptr);

/// Fast end-to-end invariant sweep (used by the library self-test entry
/// point): returns true when every check passes, appending one line per check
/// to `log`.
bool run_selftest(std::vector<std::string>& log);

}  // namespace dmpc::sim
