#ifndef STEERTEST_H
#define STEERTEST_H

/* Generated from src/lib.rs by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every call.
typedef enum SteertestStatus {
  STEERTEST_STATUS_OK = 0,
  // A required pointer argument was null.
  STEERTEST_STATUS_NULL_POINTER = 1,
  // An argument was out of range or malformed.
  STEERTEST_STATUS_INVALID_ARGUMENT = 2,
  // A string argument was not valid UTF-8.
  STEERTEST_STATUS_INVALID_UTF8 = 3,
  // The configuration was rejected.
  STEERTEST_STATUS_CONFIG_ERROR = 4,
  // A stage needs an artifact an earlier stage has not produced.
  STEERTEST_STATUS_MISSING_ARTIFACT = 5,
  // A stage failed while running.
  STEERTEST_STATUS_STAGE_FAILED = 6,
  // The requested value is undefined for the given input.
  STEERTEST_STATUS_UNDEFINED = 7,
  // The library panicked; the handle involved should be discarded.
  STEERTEST_STATUS_PANIC = 8,
} SteertestStatus;

// Verdict of a candidate test from its runs on the defective and fixed
// versions.
typedef enum SteertestClassification {
  STEERTEST_CLASSIFICATION_TRUE_POSITIVE = 0,
  STEERTEST_CLASSIFICATION_FALSE_POSITIVE = 1,
  STEERTEST_CLASSIFICATION_TRUE_NEGATIVE = 2,
  STEERTEST_CLASSIFICATION_FALSE_NEGATIVE = 3,
  STEERTEST_CLASSIFICATION_INVALID = 4,
} SteertestClassification;

// Outcome of one test run, as reported by a runner.
typedef enum SteertestRunResult {
  STEERTEST_RUN_RESULT_PASS = 0,
  STEERTEST_RUN_RESULT_FAIL = 1,
  STEERTEST_RUN_RESULT_COMPILE_ERROR = 2,
  STEERTEST_RUN_RESULT_TIMEOUT = 3,
} SteertestRunResult;

// A loaded pipeline configuration.
typedef struct SteertestConfig SteertestConfig;

// A trained method-level defect detector.
typedef struct SteertestDetector SteertestDetector;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *steertest_version(void);

// Copy the calling thread's last error message into `buf` (truncated and
// always NUL-terminated when `len > 0`). Returns the full message length
// in bytes, excluding the terminator; 0 after a successful call.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t steertest_last_error_message(char *buf, size_t len);

// Load a TOML configuration; relative paths inside it resolve against the
// file's directory. On success `*out` owns a new handle.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum SteertestStatus steertest_config_load(const char *path, struct SteertestConfig **out);

// Release a configuration handle. Null is ignored.
//
// # Safety
// `config` must be null or a handle from [`steertest_config_load`] that has
// not been freed.
void steertest_config_free(struct SteertestConfig *config);

// Redirect every artifact of later stage calls to `dir`.
//
// # Safety
// `config` must be a live handle and `dir` a NUL-terminated string.
enum SteertestStatus steertest_config_set_output_dir(struct SteertestConfig *config,
                                                     const char *dir);

// Set the test runner program used by the validate stage.
//
// # Safety
// `config` must be a live handle and `runner` a NUL-terminated string.
enum SteertestStatus steertest_config_set_runner(struct SteertestConfig *config,
                                                 const char *runner);

// Set the steering coefficient; must lie in `[0, 1]`.
//
// # Safety
// `config` must be a live handle.
enum SteertestStatus steertest_config_set_alpha(struct SteertestConfig *config, double alpha);

// Set the root seed.
//
// # Safety
// `config` must be a live handle.
enum SteertestStatus steertest_config_set_seed(struct SteertestConfig *config, uint64_t seed);

// Run one stage by name (`detect`, `locate`, `train-decoder`, `profile`,
// `generate`, `validate`, `metrics`) or every stage (`pipeline`).
// Artifacts are written to the configured output directory.
//
// # Safety
// `config` must be a live handle and `stage` a NUL-terminated string.
enum SteertestStatus steertest_run_stage(const struct SteertestConfig *config, const char *stage);

// Load a detector checkpoint written by the detect stage.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum SteertestStatus steertest_detector_load(const char *path, struct SteertestDetector **out);

// Release a detector handle. Null is ignored.
//
// # Safety
// `detector` must be null or a handle from [`steertest_detector_load`]
// that has not been freed.
void steertest_detector_free(struct SteertestDetector *detector);

// Probability that the single method in `method_source` is defective.
//
// # Safety
// `detector` must be a live handle, `method_source` a NUL-terminated
// string and `prob_defective` a valid pointer.
enum SteertestStatus steertest_detector_predict(const struct SteertestDetector *detector,
                                                const char *method_source,
                                                double *prob_defective);

// Reweight one attention row toward the positions in `highlighted`:
// highlighted entries keep their weight, the rest are scaled by `alpha`,
// and the row is renormalized. `out` receives `len` values.
//
// # Safety
// `row` and `out` must point to `len` doubles, `highlighted` to
// `n_highlighted` indices.
enum SteertestStatus steertest_reweight_row(const double *row,
                                            size_t len,
                                            const size_t *highlighted,
                                            size_t n_highlighted,
                                            double alpha,
                                            double *out);

// Harmonic mean of precision and recall; `Undefined` when both are 0.
//
// # Safety
// `out` must be a valid pointer.
enum SteertestStatus steertest_f1(double precision, double recall, double *out);

// Area under the precision-recall step curve. `labels[i]` is nonzero for a
// positive example.
//
// # Safety
// `scores` and `labels` must point to `len` elements; `out` must be valid.
enum SteertestStatus steertest_pr_auc(const double *scores,
                                      const uint8_t *labels,
                                      size_t len,
                                      double *out);

// Classify a candidate from its defective-version and fixed-version runs.
enum SteertestClassification steertest_classify(enum SteertestRunResult defective,
                                                enum SteertestRunResult fixed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STEERTEST_H */
