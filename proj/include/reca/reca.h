/* Copyright 2026 The ReCA Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the ReCA long-video controller.
 *
 * Conventions:
 *  - Every fallible call returns reca_status_t. On failure, reca_last_error()
 *    describes the most recent failure on the calling thread.
 *  - Strings returned through char** are heap-allocated by the library and
 *    must be released with reca_string_free().
 *  - Handles are opaque and released with their matching *_free function;
 *    passing NULL to a *_free function is a no-op.
 *  - Handles are not synchronised; use one handle per thread or lock.
 */
#ifndef RECA_RECA_H_
#define RECA_RECA_H_

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(RECA_BUILDING_LIBRARY)
#define RECA_API __attribute__((visibility("default")))
#else
#define RECA_API
#endif

typedef enum reca_status {
    RECA_OK = 0,
    RECA_INVALID_ARG = 1,   /* bad argument or configuration */
    RECA_PARSE = 2,         /* malformed or schema-invalid document */
    RECA_PRECONDITION = 3,  /* call made in a state that forbids it */
    RECA_CAPABILITY = 4,    /* request exceeds the backend's declared limits */
    RECA_PLANNING = 5,      /* no valid plan; run exit code 3 */
    RECA_BACKEND = 6,       /* unrecoverable backend failure; run exit code 4 */
    RECA_IO = 7,
    RECA_PARTIAL = 8,       /* run finished with leaves that gave up; exit code 2 */
    RECA_INTERNAL = 9
} reca_status_t;

typedef struct reca_config reca_config_t;
typedef struct reca_state reca_state_t;
typedef struct reca_run reca_run_t;

RECA_API const char* reca_version(void);
RECA_API const char* reca_status_name(reca_status_t status);
/* Valid until the next failing call on this thread; never NULL. */
RECA_API const char* reca_last_error(void);
RECA_API void reca_string_free(char* s);

/* ---- configuration ------------------------------------------------------ */

/* Resolves defaults < RECA_* environment < config file (may be NULL). */
RECA_API reca_status_t reca_config_create(const char* file_path, reca_config_t** out);
/* Sets a key at flag precedence; unknown keys fail here, cross-key checks
 * run in reca_config_validate and before every use. */
RECA_API reca_status_t reca_config_set(reca_config_t* config, const char* key, const char* value);
RECA_API reca_status_t reca_config_validate(const reca_config_t* config);
RECA_API reca_status_t reca_config_get(const reca_config_t* config, const char* key, char** out_value);
/* Resolved configuration as a flat JSON object. */
RECA_API reca_status_t reca_config_to_json(const reca_config_t* config, char** out_json);
/* Every key with its default, one per line. */
RECA_API reca_status_t reca_config_describe(char** out_text);
RECA_API void reca_config_free(reca_config_t* config);

/* ---- external state ----------------------------------------------------- */

RECA_API reca_status_t reca_state_from_json(const char* json, reca_state_t** out);
RECA_API reca_status_t reca_state_to_json(const reca_state_t* state, char** out_json);
/* Admission gate for one record document; *out_accepted is 1 or 0. */
RECA_API reca_status_t reca_state_admit(reca_state_t* state, const char* record_json, double epsilon,
                                        int* out_accepted);
/* exp(-alpha * (step - last_refresh)) for the record under key. */
RECA_API reca_status_t reca_state_freshness(const reca_state_t* state, const char* key, int64_t step,
                                            double alpha, double* out);
RECA_API void reca_state_free(reca_state_t* state);

/* ---- plan and run ------------------------------------------------------- */

/* reca-plan/1 document for the anchor, intent and duration in seconds. */
RECA_API reca_status_t reca_plan(const reca_config_t* config, const reca_state_t* anchor, const char* intent,
                                 int total_duration, char** out_plan_json);

/* Plans (or executes plan_json verbatim when non-NULL) and runs every leaf.
 * *out is set whenever execution produced a result, including the
 * RECA_PARTIAL, RECA_PLANNING and RECA_BACKEND outcomes. */
RECA_API reca_status_t reca_run(const reca_config_t* config, const reca_state_t* anchor, const char* intent,
                                int total_duration, const char* plan_json, reca_run_t** out);
RECA_API int reca_run_exit_code(const reca_run_t* run);
RECA_API size_t reca_run_leaf_count(const reca_run_t* run);
RECA_API reca_status_t reca_run_plan_json(const reca_run_t* run, char** out);
RECA_API reca_status_t reca_run_timeline_json(const reca_run_t* run, char** out);
RECA_API reca_status_t reca_run_trace_json(const reca_run_t* run, char** out);
RECA_API reca_status_t reca_run_state_json(const reca_run_t* run, char** out);
RECA_API reca_status_t reca_run_report_json(const reca_run_t* run, char** out);
RECA_API reca_status_t reca_run_manifest_jsonl(const reca_run_t* run, char** out);
/* Writes the run directory layout under dir (created if missing). */
RECA_API reca_status_t reca_run_write_artifacts(const reca_run_t* run, const char* dir);
/* Re-executes a leaf with a fresh seed plus its descendants. */
RECA_API reca_status_t reca_run_repair(reca_run_t* run, const char* leaf_id);
RECA_API void reca_run_free(reca_run_t* run);

/* Default run directory name: UTC timestamp plus configuration digest. */
RECA_API reca_status_t reca_run_id(const reca_config_t* config, char** out);

/* ---- replay, simulation, scoring ---------------------------------------- */

/* Re-executes a run directory from its manifest. *out_live_calls counts
 * requests the manifest could not serve; *out_match is 1 when every
 * segment checksum equals the recorded one. */
RECA_API reca_status_t reca_replay(const char* run_dir, reca_run_t** out, size_t* out_live_calls,
                                   int* out_match);

/* Controller sweep over durations and seeds 1..n_seeds. Any output pointer
 * may be NULL. */
RECA_API reca_status_t reca_simulate(const reca_config_t* config, const int* durations, size_t n_durations,
                                     size_t n_seeds, char** out_csv, char** out_summary_json, char** out_svg);

/* Scores an msve-instance/1 document. With answers_json NULL the http
 * backend judges the instance remotely. */
RECA_API reca_status_t reca_score(const reca_config_t* config, const char* instance_json, const char* answers_json,
                                  char** out_report_json);

/* Decay-rate fixture recomputed from its calibration anchors. */
RECA_API reca_status_t reca_calibrate_decay(char** out_fixture_json);

#ifdef __cplusplus
}
#endif

#endif /* RECA_RECA_H_ */
