// Command-line front end. Talks to the library exclusively through the C API.
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dualmpc.h"

namespace {

int status_to_exit_code(dmpc_status status) {
  switch (status) {
    case DMPC_OK:
      return 0;
    case DMPC_CONFIG_ERROR:
      return 1;
    case DMPC_SELFTEST_FAILURE:
      return 3;
    case DMPC_RUNTIME_ERROR:
    case DMPC_INVALID_ARGUMENT:
      return 2;
  }
  return 2;
}

int fail(dmpc_status status) {
  std::fprintf(stderr, "error: %s\n", dmpc_last_error());
  return status_to_exit_code(status);
}

void print_progress(int done, int total, void*) {
  std::fprintf(stderr, "  trial %d/%d finished\n", done, total);
}

std::string cell(const nlohmann::json& value) {
  if (value.is_null()) {
    return "-";
  }
  if (value.is_number_float()) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", value.get<double>());
    return buf;
  }
  return value.dump();
}

void print_summary_table(const std::string& json_text) {
  const nlohmann::json summary = nlohmann::json::parse(json_text);
  std::printf("%-4s %6s %8s %8s %7s %7s %13s %14s %13s\n", "ctrl", "trials",
              "success", "between", "behind", "failed", "mean_abs_err",
              "mean_solve_ms", "pct_realtime");
  for (const nlohmann::json& c : summary.at("controllers")) {
    const double realtime = c.at("realtime_fraction").is_number()
                                ? c.at("realtime_fraction").get<double>()
                                : 0.0;
    std::printf("%-4s %6d %8d %8d %7d %7d %13s %14s %12.1f%%\n",
                c.at("controller").get<std::string>().c_str(),
                c.at("trials").get<int>(), c.at("successes").get<int>(),
                c.at("merged_between").get<int>(),
                c.at("merged_behind").get<int>(), c.at("failed").get<int>(),
                cell(c.at("mean_abs_error")).c_str(),
                cell(c.at("mean_solve_ms")).c_str(), 100.0 * realtime);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lane-merge planner with a learned follower-response model"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(dmpc_version()));

  // --- run ----------------------------------------------------------------
  std::string run_config;
  std::string controller = "both";
  bool pretrain = false;
  int trials = 0;
  std::string out_dir;
  int jobs = 1;
  long seed = -1;
  bool quiet = false;
  CLI::App* run = app.add_subcommand(
      "run", "Run the closed-loop trial grid and print the summary table");
  run->add_option("--config", run_config, "Scenario JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  run->add_option("--controller", controller,
                  "Which planner(s) to run: gp, cv or both")
      ->check(CLI::IsMember({"gp", "cv", "both"}));
  run->add_flag("--pretrain", pretrain,
                "Seed each trial with pre-collected residual pairs");
  run->add_option("--trials", trials,
                  "Override the scenario trial count (>= 1)")
      ->check(CLI::PositiveNumber);
  run->add_option("--out", out_dir,
                  "Directory for summary.json and per-trial CSV tables");
  run->add_option("--jobs", jobs, "Parallel trial workers")
      ->check(CLI::PositiveNumber);
  run->add_option("--seed", seed, "Override the scenario seed (>= 0)");
  run->add_flag("--quiet", quiet, "Suppress per-trial progress lines");

  // --- plotdata -------------------------------------------------------------
  std::string plot_in;
  std::string plot_out;
  CLI::App* plotdata = app.add_subcommand(
      "plotdata", "Derive plot-ready tables from a previous run directory");
  plotdata->add_option("--in", plot_in, "Run directory (with summary.json)")
      ->required()
      ->check(CLI::ExistingDirectory);
  plotdata->add_option("--out", plot_out, "Output directory for the tables")
      ->required();

  // --- selftest -------------------------------------------------------------
  CLI::App* selftest =
      app.add_subcommand("selftest", "Run the library's fast invariant suite");

  // --- pretrain-fixture -------------------------------------------------------
  std::string fixture_config;
  std::string fixture_out;
  CLI::App* fixture = app.add_subcommand(
      "pretrain-fixture",
      "Collect the scenario's pre-training pairs and write the fixture CSV");
  fixture->add_option("--config", fixture_config, "Scenario JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  fixture->add_option("--out", fixture_out, "Fixture CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) {
    dmpc_scenario* scenario = nullptr;
    dmpc_status status = dmpc_scenario_load(run_config.c_str(), &scenario);
    if (status != DMPC_OK) {
      return fail(status);
    }
    dmpc_run_options options;
    dmpc_run_options_init(&options);
    options.run_learned = controller != "cv" ? 1 : 0;
    options.run_baseline = controller != "gp" ? 1 : 0;
    options.pretrain = pretrain ? 1 : 0;
    options.trials = trials;
    options.jobs = jobs;
    options.seed = seed;
    options.out_dir = out_dir.empty() ? nullptr : out_dir.c_str();
    if (!quiet) {
      options.progress = print_progress;
    }

    dmpc_batch_result* result = nullptr;
    status = dmpc_run_batch(scenario, &options, &result);
    dmpc_scenario_free(scenario);
    if (status != DMPC_OK) {
      return fail(status);
    }
    char* summary = nullptr;
    status = dmpc_batch_result_summary_json(result, &summary);
    dmpc_batch_result_free(result);
    if (status != DMPC_OK) {
      return fail(status);
    }
    print_summary_table(summary);
    dmpc_free(summary);
    if (!out_dir.empty()) {
      std::printf("outputs written to %s\n", out_dir.c_str());
    }
    return 0;
  }

  if (plotdata->parsed()) {
    char* warnings = nullptr;
    const dmpc_status status =
        dmpc_plotdata(plot_in.c_str(), plot_out.c_str(), &warnings);
    if (status != DMPC_OK) {
      return fail(status);
    }
    if (warnings != nullptr && warnings[0] != '\0') {
      std::fprintf(stderr, "warning:\n%s", warnings);
    }
    dmpc_free(warnings);
    std::printf("plot tables written to %s\n", plot_out.c_str());
    return 0;
  }

  if (selftest->parsed()) {
    char* log = nullptr;
    const dmpc_status status = dmpc_selftest(&log);
    if (log != nullptr) {
      std::printf("%s", log);
      dmpc_free(log);
    }
    if (status != DMPC_OK) {
      std::fprintf(stderr, "self-test failed\n");
      return status_to_exit_code(status);
    }
    std::printf("self-test passed\n");
    return 0;
  }

  if (fixture->parsed()) {
    dmpc_scenario* scenario = nullptr;
    dmpc_status status = dmpc_scenario_load(fixture_config.c_str(), &scenario);
    if (status != DMPC_OK) {
      return fail(status);
    }
    int points = 0;
    status = dmpc_pretrain_fixture(scenario, fixture_out.c_str(), &points);
    dmpc_scenario_free(scenario);
    if (status != DMPC_OK) {
      return fail(status);
    }
    std::printf("wrote %d pre-training pairs to %s\n", points,
                fixture_out.c_str());
    return 0;
  }

  return 2;  // unreachable: require_subcommand(1)
}
