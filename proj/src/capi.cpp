#include "dualmpc.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dualmpc/config.hpp"
#include "dualmpc/harness.hpp"

struct dmpc_scenario {
  dmpc::cfg::ScenarioConfig config;
};

struct dmpc_batch_result {
  dmpc::sim::BatchResult result;
};

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& message) { g_last_error = message; }

/// Copies a std::string into a malloc'd buffer (released by dmpc_free).
char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out != nullptr) {
    std::memcpy(out, s.c_str(), s.size() + 1);
  }
  return out;
}

/// Runs `body` and maps C++ exceptions onto status codes.
template <typename Body>
dmpc_status guarded(Body&& body) {
  try {
    return body();
  } catch (const dmpc::cfg::ConfigError& e) {
    set_error(e.what());
    return DMPC_CONFIG_ERROR;
  } catch (const std::invalid_argument& e) {
    set_error(e.what());
    return DMPC_INVALID_ARGUMENT;
  } catch (const std::exception& e) {
    set_error(e.what());
    return DMPC_RUNTIME_ERROR;
  } catch (...) {
    set_error("unknown failure");
    return DMPC_RUNTIME_ERROR;
  }
}

}  // namespace

extern "C" {

const char* dmpc_version(void) { return "1.0.0"; }

const char* dmpc_last_error(void) { return g_last_error.c_str(); }

void dmpc_free(char* buffer) { std::free(buffer); }

dmpc_status dmpc_scenario_load(const char* path, dmpc_scenario** out) {
  if (path == nullptr || out == nullptr) {
    set_error("dmpc_scenario_load: null argument");
    return DMPC_INVALID_ARGUMENT;
  }
  return guarded([&] {
    auto scenario = new dmpc_scenario{dmpc::cfg::load_config(path)};
    *out = scenario;
    return DMPC_OK;
  });
}

dmpc_status dmpc_scenario_parse(const char* json_text, dmpc_scenario** out) {
  if (json_text == nullptr || out == nullptr) {
    set_error("dmpc_scenario_parse: null argument");
    return DMPC_INVALID_ARGUMENT;
  }
  return guarded([&] {
    auto scenario = new dmpc_scenario{dmpc::cfg::parse_config(json_text)};
    *out = scenario;
    return DMPC_OK;
  });
}

dmpc_status dmpc_scenario_default_json(char** out_json) {
  if (out_json == nullptr) {
    set_error("dmpc_scenario_default_json: null argument");
    return DMPC_INVALID_ARGUMENT;
  }
  return guarded([&] {
    *out_json = dup_string(dmpc::cfg::config_to_json(dmpc::cfg::default_config()));
    return *out_json != nullptr ? DMPC_OK : DMPC_RUNTIME_ERROR;
  });
}

void dmpc_scenario_free(dmpc_scenario* scenario) { delete scenario; }

void dmpc_run_options_init(dmpc_run_options* options) {
  if (options == nullptr) {
    return;
  }
  options->run_learned = 1;
  options->run_baseline = 1;
  options->pretrain = 0;
  options->trials = 0;
  options->jobs = 1;
  options->seed = -1;
  options->out_dir = nullptr;
  options->write_trial_csv = 1;
  options->progress = nullptr;
  options->progress_data = nullptr;
}

dmpc_status dmpc_run_batch(const dmpc_scenario* scenario,
                           const dmpc_run_options* options,
                           dmpc_batch_result** out) {
  if (scenario == nullptr || options == nullptr || out == nullptr) {
    set_error("dmpc_run_batch: null argument");
    return DMPC_INVALID_ARGUMENT;
  }
  if (options->run_learned == 0 && options->run_baseline == 0) {
    set_error("dmpc_run_batch: no controller selected");
    return DMPC_INVALID_ARGUMENT;
  }
  return guarded([&] {
    dmpc::cfg::ScenarioConfig config = scenario->config;
    if (options->seed >= 0) {
      config.seed = static_cast<unsigned int>(options->seed);
    }

    dmpc::sim::BatchOptions batch;
    batch.controllers.clear();
    if (options->run_learned != 0) {
      batch.controllers.push_back(dmpc::sim::ControllerKind::LearnedResidual);
    }
    if (options->run_baseline != 0) {
      batch.controllers.push_back(dmpc::sim::ControllerKind::ConstantVelocity);
    }
    batch.pretrain = options->pretrain != 0;
    batch.trial_override = options->trials;
    batch.jobs = options->jobs >= 1 ? options->jobs : 1;
    if (options->progress != nullptr) {
      dmpc_progress_fn fn = options->progress;
      void* data = options->progress_data;
      batch.progress = [fn, data](int done, int total) { fn(done, total, data); };
    }

    auto result =
        new dmpc_batch_result{dmpc::sim::run_batch(config, batch)};
    if (options->out_dir != nullptr && options->out_dir[0] != '\0') {
      try {
        dmpc::sim::write_batch_outputs(result->result, options->out_dir,
                                       options->write_trial_csv != 0);
      } catch (...) {
        delete result;
        throw;
      }
    }
    *out = result;
    return DMPC_OK;
  });
}

dmpc_status dmpc_batch_result_summary_json(const dmpc_batch_result* result,
                                           char** out_json) {
  if (result == nullptr || out_json == nullptr) {
    set_error("dmpc_batch_result_summary_json: null argument");
    return DMPC_INVALID_ARGUMENT;
  }
  return guarded([&] {
    *out_json = dup_string(dmpc::sim::summary_json(result->result));
    return *out_json != nullptr ? DMPC_OK : DMPC_RUNTIME_ERROR;
  });
}

void dmpc_batch_result_free(dmpc_batch_result* result) { delete result; }

dmpc_status dmpc_plotdata(const char* run_dir, const char* out_dir,
                          char** out_warnings) {
  if (run_dir == nullptr || out_dir == nullptr) {
    set_error("dmpc_plotdata: null argument");
    return DMPC_INVALID_ARGUMENT;
  }
  return guarded([&] {
    std::vector<std::string> warnings;
    dmpc::sim::write_plot_tables(run_dir, out_dir, &warnings);
    if (out_warnings != nullptr) {
      std::ostringstream joined;
      for (const std::string& w : warnings) {
        joined << w << '\n';
      }
      *out_warnings = dup_string(joined.str());
      if (*out_warnings == nullptr) {
        return DMPC_RUNTIME_ERROR;
      }
    }
    return DMPC_OK;
  });
}

dmpc_status dmpc_selftest(char** out_log) {
  return guarded([&] {
    std::vector<std::string> log;
    const bool ok = dmpc::sim::run_selftest(log);
    if (out_log != nullptr) {
      std::ostringstream joined;
      for (const std::string& line : log) {
        joined << line << '\n';
      }
      *out_log = dup_string(joined.str());
      if (*out_log == nullptr) {
        return DMPC_RUNTIME_ERROR;
      }
    }
    if (!ok) {
      set_error("self-test checks failed");
      return DMPC_SELFTEST_FAILURE;
    }
    return DMPC_OK;
  });
}

dmpc_status dmpc_pretrain_fixture(const dmpc_scenario* scenario,
                                  const char* out_csv_path, int* out_points) {
  if (scenario == nullptr || out_csv_path == nullptr) {
    set_error("dmpc_pretrain_fixture: null argument");
    return DMPC_INVALID_ARGUMENT;
  }
  return guarded([&] {
    const dmpc::gp::TrainingSet data =
        dmpc::sim::collect_pretraining(scenario->config);
    dmpc::sim::write_pretraining_csv(out_csv_path, data);
    if (out_points != nullptr) {
      *out_points = static_cast<int>(data.size());
    }
    return DMPC_OK;
  });
}

}  // extern "C"
