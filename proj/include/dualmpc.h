/* C interface to the merge-planner library: opaque handles + status codes.
 * Every function that can fail returns a dmpc_status; the corresponding
 * human-readable message is available from dmpc_last_error() on the calling
 * thread until the next failing call. Strings returned through char** output
 * parameters are heap-allocated and must be released with dmpc_free(). */
#ifndef DUALMPC_H
#define DUALMPC_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dmpc_status {
  DMPC_OK = 0,
  DMPC_CONFIG_ERROR = 1,     /* malformed or inconsistent scenario */
  DMPC_RUNTIME_ERROR = 2,    /* I/O or numerical failure while running */
  DMPC_SELFTEST_FAILURE = 3, /* one or more self-test checks failed */
  DMPC_INVALID_ARGUMENT = 4, /* null handles, bad flags, out-of-range values */
} dmpc_status;

/* Library version, "major.minor.patch". Static storage; do not free. */
const char* dmpc_version(void);

/* Message of this thread's most recent failure ("" when none). Static
 * storage; do not free; overwritten by the next failing call. */
const char* dmpc_last_error(void);

/* Releases any buffer returned through a char** output parameter. */
void dmpc_free(char* buffer);

/* ----------------------------------------------------------------------- */
/* Scenario handling                                                        */
/* ----------------------------------------------------------------------- */

typedef struct dmpc_scenario dmpc_scenario;

/* Parses a scenario from a JSON file / JSON text. On success *out owns the
 * scenario and must be released with dmpc_scenario_free(). */
dmpc_status dmpc_scenario_load(const char* path, dmpc_scenario** out);
dmpc_status dmpc_scenario_parse(const char* json_text, dmpc_scenario** out);

/* Default scenario serialized as JSON (documents every available key). */
dmpc_status dmpc_scenario_default_json(char** out_json);

void dmpc_scenario_free(dmpc_scenario* scenario);

/* ----------------------------------------------------------------------- */
/* Batch simulation                                                         */
/* ----------------------------------------------------------------------- */

typedef struct dmpc_batch_result dmpc_batch_result;

typedef void (*dmpc_progress_fn)(int done, int total, void* user_data);

typedef struct dmpc_run_options {
  int run_learned;   /* nonzero: run the learned-residual controller */
  int run_baseline;  /* nonzero: run the constant-velocity baseline */
  int pretrain;      /* nonzero: seed each trial with pre-collected pairs */
  int trials;        /* > 0 overrides the scenario's trial count */
  int jobs;          /* parallel trial workers, clamped to >= 1 */
  long seed;         /* >= 0 overrides the scenario seed (recorded in outputs) */
  const char* out_dir;      /* optional: directory for summary.json + CSVs */
  int write_trial_csv;      /* nonzero: also write per-trial CSV tables */
  dmpc_progress_fn progress; /* optional, called as trials finish */
  void* progress_data;
} dmpc_run_options;

/* Fills *options with the defaults: both controllers, no pretraining, the
 * scenario trial count, one job, no output directory, trial CSVs enabled. */
void dmpc_run_options_init(dmpc_run_options* options);

/* Runs the configured trial grid. On success *out owns the results and must
 * be released with dmpc_batch_result_free(). When options->out_dir is set,
 * summary.json (and per-trial CSVs unless disabled) are written there. */
dmpc_status dmpc_run_batch(const dmpc_scenario* scenario,
                           const dmpc_run_options* options,
                           dmpc_batch_result** out);

/* Full results (configuration echo, per-controller aggregates, per-trial
 * outcome list) serialized as JSON. */
dmpc_status dmpc_batch_result_summary_json(const dmpc_batch_result* result,
                                           char** out_json);

void dmpc_batch_result_free(dmpc_batch_result* result);

/* ----------------------------------------------------------------------- */
/* Derived outputs and maintenance entry points                             */
/* ----------------------------------------------------------------------- */

/* Reads a previous run directory (summary.json + trial CSVs) and writes the
 * plot-ready tables into out_dir: per-trial pose time-lapses and the
 * prediction-error traces grouped by merge outcome. Non-fatal issues (e.g.
 * an outcome group with no trials) are reported through *out_warnings as
 * newline-separated text when the pointer is non-null. */
dmpc_status dmpc_plotdata(const char* run_dir, const char* out_dir,
                          char** out_warnings);

/* Runs the library's fast invariant suite. The newline-separated check log
 * is returned through *out_log (when non-null) regardless of the verdict. */
dmpc_status dmpc_selftest(char** out_log);

/* Collects the scenario's pre-training residual pairs with a bootstrap run
 * and writes them as a fixture CSV (columns z0..z16,y). *out_points (when
 * non-null) receives the number of pairs written. */
dmpc_status dmpc_pretrain_fixture(const dmpc_scenario* scenario,
                                  const char* out_csv_path, int* out_points);

#ifdef __cplusplus
}
#endif

#endif /* DUALMPC_H */
