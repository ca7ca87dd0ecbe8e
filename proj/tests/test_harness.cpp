#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <doctest.h>
#include <json.hpp>

#include "dualmpc/config.hpp"
#include "dualmpc/harness.hpp"
#include "dualmpc/planner.hpp"

using namespace dmpc;
using namespace dmpc::sim;

namespace {

cfg::ScenarioConfig smoke_config() {
  cfg::ScenarioConfig c = cfg::default_config();
  c.timing.trial_duration_s = 3.0;  // 12 controller steps
  c.ego.trial_count = 1;
  c.ego.start_x_min = -85.0;
  c.ego.start_x_max = -85.0;
  c.horizon = 8;
  c.pretrain.points = 10;
  return c;
}

std::filesystem::path fresh_temp_dir(const std::string& tag) {
  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / ("dualmpc_test_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

gp::TrainingSet synthetic_pretraining(int count) {
  gp::TrainingSet data;
  std::mt19937 rng(81);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < count; ++i) {
    Vec5 ego, fol, lead;
    ego << -85.0 + 2.0 * i + gauss(rng), 0.0, 31.0 + 0.2 * gauss(rng), 0.0, 0.0;
    fol << -75.0 + 2.0 * i + gauss(rng), 3.5, 31.0 + 0.2 * gauss(rng), 0.0, 0.0;
    lead << 2.0 * i, 3.5, 25.0, 0.0, 0.0;
    data.append(plan::joint_input(ego, fol, lead, Vec2(0.1 * gauss(rng), 0.0)),
                0.05 * gauss(rng));
  }
  return data;
}

}  // namespace

TEST_CASE("trial starts cover the grid at even spacing") {
  const cfg::ScenarioConfig config = cfg::default_config();
  REQUIRE(config.ego.trial_count == 11);
  for (int i = 0; i < 11; ++i) {
    CHECK(trial_start_x(config, i) ==
          doctest::Approx(-100.0 + 2.5 * i).epsilon(1e-14));
  }
  CHECK(trial_start_x(config, 0) == -100.0);
  CHECK(trial_start_x(config, 10) == -75.0);

  cfg::ScenarioConfig single = config;
  single.ego.trial_count = 1;
  CHECK(trial_start_x(single, 0) == -100.0);

  CHECK_THROWS_AS(trial_start_x(config, -1), std::invalid_argument);
  CHECK_THROWS_AS(trial_start_x(config, 11), std::invalid_argument);
}

TEST_CASE("kernel hyperparameters come straight from the scenario") {
  const gp::KernelParams params = kernel_params(cfg::default_config());
  CHECK(params.prior_variance == 0.3);
  CHECK(params.noise_variance == 0.0);
  REQUIRE(params.length_scales.size() == 6);
  CHECK(params.length_scales[0] == 3.0);
  CHECK(params.length_scales[3] == 17.0);
  CHECK(params.length_scales[5] == 5.0);
  CHECK(params.feature_map == plan::joint_feature_map());
}

TEST_CASE("the planning scene mirrors the current world state") {
  const cfg::ScenarioConfig config = cfg::default_config();
  const AgentState ego{-42.0, 0.5, 30.0, 0.01, 0.002};
  const AgentState fol{-30.0, 3.5, 31.0, 0.0, 0.0};
  const AgentState lead{5.0, 3.5, 25.0, 0.0, 0.0};
  const AgentInput prev{1.5, -0.01};
  const plan::MergeScene scene = make_scene(config, ego, fol, lead, prev);
  CHECK(scene.ego.x == -42.0);
  CHECK(scene.follower.x == -30.0);
  CHECK(scene.leader.x == 5.0);
  CHECK(scene.previous_input.accel == 1.5);
  CHECK(scene.horizon == 12);
  CHECK(scene.dt == 0.25);
  CHECK(scene.target_speed == 31.0);
  CHECK(scene.residual_prior_variance == 0.3);
  CHECK(scene.bounds.accel_max == 5.0);
}

TEST_CASE("body overlap keys on the oriented rectangles") {
  const VehicleGeometry geom;  // 4.5 long, 1.8 wide
  const AgentState origin{0.0, 0.0, 30.0, 0.0, 0.0};
  CHECK(bodies_overlap(origin, origin, geom));

  SUBCASE("nose to tail") {
    CHECK(bodies_overlap(origin, AgentState{4.4, 0.0, 30.0, 0.0, 0.0}, geom));
    CHECK_FALSE(
        bodies_overlap(origin, AgentState{4.6, 0.0, 30.0, 0.0, 0.0}, geom));
  }
  SUBCASE("side by side") {
    CHECK(bodies_overlap(origin, AgentState{0.0, 1.7, 30.0, 0.0, 0.0}, geom));
    CHECK_FALSE(
        bodies_overlap(origin, AgentState{0.0, 1.9, 30.0, 0.0, 0.0}, geom));
  }
  SUBCASE("crossing at right angles") {
    // The crossing body is centered 2.25 ahead of its rear axle along +y.
    const AgentState crossing{2.25, 0.8, 10.0, kPi / 2.0, 0.0};
    CHECK(bodies_overlap(origin, crossing, geom));
    const AgentState clear{2.25, 1.1, 10.0, kPi / 2.0, 0.0};
    CHECK_FALSE(bodies_overlap(origin, clear, geom));
  }
  SUBCASE("symmetry") {
    const AgentState a{3.0, 1.0, 30.0, 0.2, 0.0};
    const AgentState b{5.5, 0.0, 30.0, -0.1, 0.0};
    CHECK(bodies_overlap(a, b, geom) == bodies_overlap(b, a, geom));
  }
}

TEST_CASE("a learned-model trial grows its data set one pair per step") {
  const cfg::ScenarioConfig config = smoke_config();
  const TrialResult trial = run_trial(config, ControllerKind::LearnedResidual,
                                      0, gp::TrainingSet());
  REQUIRE(trial.steps.size() == 12);
  CHECK_FALSE(trial.collided);

  for (std::size_t k = 0; k < trial.steps.size(); ++k) {
    const StepRecord& rec = trial.steps[k];
    CHECK(rec.step == static_cast<int>(k));
    CHECK(rec.training_size == static_cast<int>(k));
    CHECK(std::abs(rec.applied.accel) <= config.bounds.accel_max + 1e-9);
    CHECK(std::abs(rec.applied.steer_rate) <=
          config.bounds.steer_rate_max + 1e-9);
    REQUIRE(rec.predicted_follower_speeds.size() ==
            static_cast<std::size_t>(config.horizon));

    // The logged residual is exactly the follower's speed change.
    const double next_speed = k + 1 < trial.steps.size()
                                  ? trial.steps[k + 1].follower.speed
                                  : trial.final_follower.speed;
    CHECK(std::abs(rec.residual - (next_speed - rec.follower.speed)) < 1e-15);
  }
  CHECK(trial.mean_solve_ms > 0.0);
  CHECK(trial.max_solve_ms >= trial.mean_solve_ms);
  CHECK(trial.realtime_fraction >= 0.0);
  CHECK(trial.realtime_fraction <= 1.0);
}

TEST_CASE("pre-training pairs seed the data set") {
  const cfg::ScenarioConfig config = smoke_config();
  const gp::TrainingSet pre = synthetic_pretraining(5);
  const TrialResult trial =
      run_trial(config, ControllerKind::LearnedResidual, 0, pre);
  REQUIRE(trial.steps.size() == 12);
  for (std::size_t k = 0; k < trial.steps.size(); ++k) {
    CHECK(trial.steps[k].training_size == static_cast<int>(5 + k));
  }
}

TEST_CASE("the baseline controller still logs residual pairs") {
  const cfg::ScenarioConfig config = smoke_config();
  const TrialResult trial = run_trial(config, ControllerKind::ConstantVelocity,
                                      0, gp::TrainingSet());
  REQUIRE(trial.steps.size() == 12);
  for (std::size_t k = 0; k < trial.steps.size(); ++k) {
    const StepRecord& rec = trial.steps[k];
    CHECK(rec.training_size == static_cast<int>(k));
    const double next_speed = k + 1 < trial.steps.size()
                                  ? trial.steps[k + 1].follower.speed
                                  : trial.final_follower.speed;
    CHECK(std::abs(rec.residual - (next_speed - rec.follower.speed)) < 1e-15);
    // The fixed-variance branch predicts a zero-mean residual.
    CHECK(rec.residual_pred_mean == 0.0);
    CHECK(rec.residual_pred_var == 0.3);
  }
}

TEST_CASE("the windowed prediction error is recomputable from the log") {
  const cfg::ScenarioConfig config = smoke_config();
  const TrialResult trial = run_trial(config, ControllerKind::LearnedResidual,
                                      0, gp::TrainingSet());
  const int executed = static_cast<int>(trial.steps.size());
  const auto realized = [&](int index) {
    return index < executed
               ? trial.steps[static_cast<std::size_t>(index)].follower.speed
               : trial.final_follower.speed;
  };
  for (int k = 0; k < executed; ++k) {
    const StepRecord& rec = trial.steps[static_cast<std::size_t>(k)];
    const int window = std::min(config.horizon, executed - k);
    double acc = 0.0;
    for (int i = 1; i <= window; ++i) {
      acc += std::abs(
          rec.predicted_follower_speeds[static_cast<std::size_t>(i - 1)] -
          realized(k + i));
    }
    CHECK(rec.prediction_error ==
          doctest::Approx(acc / window).epsilon(1e-12));
  }

  const int premerge_end =
      trial.merge_step < 0 ? executed : std::min(trial.merge_step, executed);
  double err_acc = 0.0;
  int err_count = 0;
  for (int k = 0; k < premerge_end; ++k) {
    const double e = trial.steps[static_cast<std::size_t>(k)].prediction_error;
    if (std::isfinite(e)) {
      err_acc += e;
      ++err_count;
    }
  }
  if (err_count > 0) {
    CHECK(trial.premerge_mean_error ==
          doctest::Approx(err_acc / err_count).epsilon(1e-12));
  } else {
    CHECK_FALSE(std::isfinite(trial.premerge_mean_error));
  }
}

TEST_CASE("bootstrap collection keeps the requested number of pairs") {
  const cfg::ScenarioConfig config = smoke_config();
  const gp::TrainingSet data = collect_pretraining(config);
  REQUIRE(data.size() == 10);
  for (std::size_t i = 0; i < data.size(); ++i) {
    REQUIRE(data.input(i).size() == plan::kJointDim);
    CHECK(data.input(i).allFinite());
    CHECK(std::isfinite(data.output(i)));
  }
  // Deterministic: a second collection is identical.
  const gp::TrainingSet again = collect_pretraining(config);
  REQUIRE(again.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK((data.input(i) - again.input(i)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(data.output(i) == again.output(i));
  }
}

TEST_CASE("pre-training fixtures round-trip through CSV exactly") {
  const gp::TrainingSet data = synthetic_pretraining(7);
  const std::filesystem::path dir = fresh_temp_dir("csv_roundtrip");
  const std::string path = (dir / "fixture.csv").string();
  write_pretraining_csv(path, data);

  const gp::TrainingSet loaded = read_pretraining_csv(path);
  REQUIRE(loaded.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK((loaded.input(i) - data.input(i)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(loaded.output(i) == data.output(i));
  }

  SUBCASE("a missing fixture names its path") {
    const std::string missing = (dir / "nope.csv").string();
    CHECK_THROWS_AS(read_pretraining_csv(missing), std::exception);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("closed-loop trials are deterministic") {
  const cfg::ScenarioConfig config = smoke_config();
  const TrialResult first = run_trial(config, ControllerKind::LearnedResidual,
                                      0, gp::TrainingSet());
  const TrialResult second = run_trial(config, ControllerKind::LearnedResidual,
                                       0, gp::TrainingSet());
  REQUIRE(first.steps.size() == second.steps.size());
  for (std::size_t k = 0; k < first.steps.size(); ++k) {
    CHECK(first.steps[k].applied.accel == second.steps[k].applied.accel);
    CHECK(first.steps[k].applied.steer_rate ==
          second.steps[k].applied.steer_rate);
  }
  CHECK(first.final_ego.x == second.final_ego.x);
  CHECK(first.final_follower.speed == second.final_follower.speed);
  CHECK(first.outcome == second.outcome);
}

TEST_CASE("with no data the learned and baseline branches start out aligned") {
  const cfg::ScenarioConfig config = smoke_config();
  BatchOptions options;
  options.jobs = 1;
  const BatchResult result = run_batch(config, options);
  REQUIRE(result.trials.size() == 2);
  const TrialResult& learned = result.trials[0];
  const TrialResult& baseline = result.trials[1];
  REQUIRE(learned.controller == ControllerKind::LearnedResidual);
  REQUIRE(baseline.controller == ControllerKind::ConstantVelocity);

  // Before the first observation the two problems are equivalent, so the
  // first applied input must agree to solver accuracy.
  CHECK(std::abs(learned.steps[0].applied.accel -
                 baseline.steps[0].applied.accel) < 1e-6);
  CHECK(std::abs(learned.steps[0].applied.steer_rate -
                 baseline.steps[0].applied.steer_rate) < 1e-6);

  REQUIRE(result.summaries.size() == 2);
  for (const ControllerSummary& s : result.summaries) {
    CHECK(s.trials == 1);
    CHECK(s.successes == s.merged_between + s.merged_behind);
    CHECK(s.successes + s.failed == s.trials);
    CHECK(s.mean_solve_ms > 0.0);
  }
}

TEST_CASE("the batch output is independent of the job count") {
  cfg::ScenarioConfig config = smoke_config();
  config.ego.start_x_max = -80.0;
  BatchOptions serial;
  serial.trial_override = 3;
  serial.jobs = 1;
  BatchOptions parallel = serial;
  parallel.jobs = 3;

  const BatchResult a = run_batch(config, serial);
  const BatchResult b = run_batch(config, parallel);
  REQUIRE(a.trials.size() == 6);
  REQUIRE(b.trials.size() == 6);
  for (std::size_t i = 0; i < a.trials.size(); ++i) {
    CHECK(a.trials[i].trial_index == b.trials[i].trial_index);
    CHECK(a.trials[i].controller == b.trials[i].controller);
    CHECK(a.trials[i].final_ego.x == b.trials[i].final_ego.x);
    CHECK(a.trials[i].outcome == b.trials[i].outcome);
  }
  // Solve timings differ run to run, so compare everything but those.
  nlohmann::json ja = nlohmann::json::parse(summary_json(a));
  nlohmann::json jb = nlohmann::json::parse(summary_json(b));
  for (nlohmann::json* j : {&ja, &jb}) {
    for (auto& c : (*j)["controllers"]) {
      c.erase("mean_solve_ms");
      c.erase("max_solve_ms");
      c.erase("realtime_fraction");
    }
    for (auto& t : (*j)["trials"]) {
      t.erase("mean_solve_ms");
      t.erase("max_solve_ms");
      t.erase("realtime_fraction");
    }
  }
  CHECK(ja == jb);
}

TEST_CASE("batch outputs land on disk and feed the plot tables") {
  const cfg::ScenarioConfig config = smoke_config();
  BatchOptions options;
  options.jobs = 2;
  const BatchResult result = run_batch(config, options);

  const std::filesystem::path run_dir = fresh_temp_dir("batch_outputs");
  const std::string summary_path =
      write_batch_outputs(result, run_dir.string());
  CHECK(std::filesystem::exists(summary_path));
  CHECK(std::filesystem::exists(run_dir / "summary.json"));
  CHECK(std::filesystem::exists(run_dir / "trial_gp_00.csv"));
  CHECK(std::filesystem::exists(run_dir / "trial_cv_00.csv"));

  // The summary parses and echoes the scenario.
  std::ifstream in(summary_path);
  nlohmann::json summary;
  in >> summary;
  CHECK(summary.at("config").at("planner").at("horizon").get<int>() == 8);
  CHECK(summary.at("pretrained").get<bool>() == false);
  REQUIRE(summary.at("controllers").size() == 2);
  CHECK(summary.at("controllers")[0].at("controller").get<std::string>() ==
        "gp");
  CHECK(summary.at("trials").size() == 2);

  // Plot tables: time-lapse per trial; the 3 s smoke trial never settles, so
  // both merged-outcome error traces are skipped with a warning.
  const std::filesystem::path plot_dir = fresh_temp_dir("plot_tables");
  std::vector<std::string> warnings;
  write_plot_tables(run_dir.string(), plot_dir.string(), &warnings);
  CHECK(std::filesystem::exists(plot_dir / "plot_timelapse_gp_00.csv"));
  CHECK(std::filesystem::exists(plot_dir / "plot_timelapse_cv_00.csv"));
  CHECK(warnings.size() == 2);
  CHECK_FALSE(std::filesystem::exists(plot_dir / "plot_error_merged_between.csv"));

  std::filesystem::remove_all(run_dir);
  std::filesystem::remove_all(plot_dir);
}

TEST_CASE("the library self-test sweeps green") {
  std::vector<std::string> log;
  CHECK(run_selftest(log));
  CHECK_FALSE(log.empty());
  for (const std::string& line : log) {
    CAPTURE(line);
    CHECK(line.find("FAIL") == std::string::npos);
  }
}

TEST_CASE("scenario parsing is strict and round-trips") {
  SUBCASE("defaults equal the empty document") {
    const cfg::ScenarioConfig parsed = cfg::parse_config("{}");
    CHECK(cfg::config_to_json(parsed) ==
          cfg::config_to_json(cfg::default_config()));
  }
  SUBCASE("unknown keys are named") {
    CHECK_THROWS_WITH_AS(cfg::parse_config(R"({"typo_key": 1})"),
                         doctest::Contains("typo_key"), cfg::ConfigError);
    CHECK_THROWS_WITH_AS(cfg::parse_config(R"({"timing": {"dtt": 0.1}})"),
                         doctest::Contains("timing.dtt"), cfg::ConfigError);
  }
  SUBCASE("type errors are named") {
    CHECK_THROWS_WITH_AS(cfg::parse_config(R"({"timing": {"dt": "fast"}})"),
                         doctest::Contains("timing.dt"), cfg::ConfigError);
  }
  SUBCASE("angles are stated in degrees") {
    const cfg::ScenarioConfig parsed = cfg::parse_config(
        R"({"planner": {"bounds": {"steer_rate_max_deg": 10.0}}})");
    CHECK(parsed.bounds.steer_rate_max ==
          doctest::Approx(deg_to_rad(10.0)).epsilon(1e-14));
  }
  SUBCASE("values out of range are rejected") {
    CHECK_THROWS_AS(cfg::parse_config(R"({"timing": {"dt": -0.25}})"),
                    cfg::ConfigError);
    CHECK_THROWS_AS(cfg::parse_config(R"({"planner": {"horizon": 0}})"),
                    cfg::ConfigError);
  }
  SUBCASE("missing files are reported") {
    CHECK_THROWS_AS(cfg::load_config("/nonexistent/scenario.json"),
                    cfg::ConfigError);
  }
  SUBCASE("serialization round-trips") {
    cfg::ScenarioConfig config = cfg::default_config();
    config.horizon = 9;
    config.ego.start_speed = 29.5;
    const cfg::ScenarioConfig reparsed =
        cfg::parse_config(cfg::config_to_json(config));
    CHECK(cfg::config_to_json(reparsed) == cfg::config_to_json(config));
    CHECK(reparsed.horizon == 9);
    CHECK(reparsed.ego.start_speed == 29.5);
  }
}
