/* Copyright 2026 The dynbit Authors
 * Licensed under the Apache License, Version 2.0
 *
 * C interface to the dynbit quantized-training engine. All heap objects are
 * opaque handles released with the matching *_free call; every entry point
 * reports failure through a status code, with a thread-local message
 * available from dynbit_last_error().
 */

#ifndef DYNBIT_H
#define DYNBIT_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dynbit_status {
  DYNBIT_OK = 0,
  DYNBIT_ERR_INVALID_ARG = 1, /* null handle, domain error, bad value */
  DYNBIT_ERR_PARSE = 2,       /* config or input file failed to parse */
  DYNBIT_ERR_IO = 3,          /* filesystem failure writing artifacts */
  DYNBIT_ERR_INTERNAL = 4
} dynbit_status;

typedef struct dynbit_config dynbit_config;
typedef struct dynbit_report dynbit_report;

const char* dynbit_version(void);

/* Message for the most recent failure on the calling thread; "" if none. */
const char* dynbit_last_error(void);

dynbit_status dynbit_config_from_json(const char* json_text, dynbit_config** out);
dynbit_status dynbit_config_from_file(const char* path, dynbit_config** out);
dynbit_status dynbit_config_set_seed(dynbit_config* cfg, uint64_t seed);

/* Freeze bitwidths at the initial value: the policy thresholds are set to a
 * band that never fires. */
dynbit_status dynbit_config_disable_policy(dynbit_config* cfg);
void dynbit_config_free(dynbit_config* cfg);

/* Runs the training loop described by the config and writes report.json and
 * bitwidth_history.csv under out_dir (created if missing). out_report may be
 * NULL when only the artifacts are wanted. */
dynbit_status dynbit_train(const dynbit_config* cfg, const char* out_dir,
                           dynbit_report** out_report);

dynbit_status dynbit_report_to_json(const dynbit_report* report, char** out_json);
double dynbit_report_test_accuracy(const dynbit_report* report);
double dynbit_report_train_accuracy(const dynbit_report* report);
double dynbit_report_weighted_avg_bitwidth(const dynbit_report* report);
double dynbit_report_wall_clock_seconds(const dynbit_report* report);
void dynbit_report_free(dynbit_report* report);

/* Releases strings returned through char** out parameters. */
void dynbit_string_free(char* s);

/* Sweeps run n_seeds seeded runs per value (jobs in parallel) and write
 * sweep.csv under out_dir. */
dynbit_status dynbit_sweep_tmin(const dynbit_config* cfg, const double* values,
                                size_t n_values, int n_seeds, int jobs,
                                const char* out_dir);
dynbit_status dynbit_sweep_init_bitwidth(const dynbit_config* cfg, const int* values,
                                         size_t n_values, int n_seeds, int jobs,
                                         const char* out_dir);
dynbit_status dynbit_sweep_batch_size(const dynbit_config* cfg,
                                      const int64_t* values, size_t n_values,
                                      int n_seeds, int jobs, const char* out_dir);

/* Max relative error between analytic gradients and central finite
 * differences on the config's model. */
dynbit_status dynbit_gradcheck(const dynbit_config* cfg, double* max_rel_error);

/* Human-readable summary of a finished run directory (reads report.json). */
dynbit_status dynbit_run_summary(const char* run_dir, char** out_text);

#ifdef __cplusplus
}
#endif

#endif /* DYNBIT_H */
