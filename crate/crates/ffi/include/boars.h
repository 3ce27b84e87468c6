#ifndef BOARS_H
#define BOARS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BoarsMapKind {
  BOARS_MAP_KIND_MEAN = 0,
  BOARS_MAP_KIND_VARIANCE = 1,
  /**
   * Only after the target is frozen.
   */
  BOARS_MAP_KIND_TRUTH = 2,
  BOARS_MAP_KIND_ERROR = 3,
} BoarsMapKind;

typedef enum BoarsPendingKind {
  BOARS_PENDING_KIND_NONE = 0,
  BOARS_PENDING_KIND_VOTE = 1,
  BOARS_PENDING_KIND_SATISFACTION = 2,
} BoarsPendingKind;

typedef enum BoarsRunStatus {
  BOARS_RUN_STATUS_RUNNING = 0,
  BOARS_RUN_STATUS_AWAITING_HUMAN = 1,
  BOARS_RUN_STATUS_FINISHED = 2,
  BOARS_RUN_STATUS_ABORTED = 3,
} BoarsRunStatus;

typedef enum BoarsStatus {
  BOARS_STATUS_OK = 0,
  BOARS_STATUS_NULL_POINTER = 1,
  BOARS_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The call is not valid in the current run state.
   */
  BOARS_STATUS_STATE = 3,
  BOARS_STATUS_IO = 4,
  BOARS_STATUS_FORMAT = 5,
  /**
   * Factorization, training or other numerical failure.
   */
  BOARS_STATUS_NUMERIC = 6,
  BOARS_STATUS_BUFFER_TOO_SMALL = 7,
  BOARS_STATUS_VOTER_ABORT = 8,
  BOARS_STATUS_CANDIDATES_EXHAUSTED = 9,
  BOARS_STATUS_PANIC = 10,
} BoarsStatus;

typedef struct BoarsExperiment BoarsExperiment;

typedef struct BoarsGrid BoarsGrid;

typedef struct BoarsPending {
  enum BoarsPendingKind kind;
  uint64_t id;
  size_t row;
  size_t col;
} BoarsPending;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next `boars_` call on this thread.
 */
const char *boars_last_error(void);

/**
 * Static NUL-terminated crate version.
 */
const char *boars_version(void);

/**
 * Generates the default synthetic grid with the given seed. `size` and
 * `correlation` override the defaults when positive / non-negative.
 *
 * # Safety
 * `grid_out` must be valid for writes; it is set to NULL on failure.
 */
enum BoarsStatus boars_grid_synthetic(uint64_t seed,
                                      size_t size,
                                      double correlation,
                                      struct BoarsGrid **grid_out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `grid_out` valid for writes.
 */
enum BoarsStatus boars_grid_load(const char *path, struct BoarsGrid **grid_out);

/**
 * # Safety
 * `grid` must be a live handle; `path` a NUL-terminated string.
 */
enum BoarsStatus boars_grid_save(const struct BoarsGrid *grid, const char *path);

/**
 * # Safety
 * `grid` must be a live handle; the out pointers valid for writes.
 */
enum BoarsStatus boars_grid_dims(const struct BoarsGrid *grid,
                                 size_t *height,
                                 size_t *width,
                                 size_t *spectrum_len);

/**
 * # Safety
 * `grid` must be NULL or a handle not yet freed.
 */
void boars_grid_free(struct BoarsGrid *grid);

/**
 * Creates an experiment over `grid`. `config_json` is a JSON run
 * configuration; NULL or missing fields take the defaults. The grid handle
 * may be freed afterwards.
 *
 * # Safety
 * `grid` must be a live handle; `config_json` NULL or NUL-terminated;
 * `exp_out` valid for writes.
 */
enum BoarsStatus boars_experiment_new(const struct BoarsGrid *grid,
                                      const char *config_json,
                                      struct BoarsExperiment **exp_out);

/**
 * # Safety
 * `exp` must be NULL or a handle not yet freed.
 */
void boars_experiment_free(struct BoarsExperiment *exp);

/**
 * Does one unit of work. `status_out` may be NULL.
 *
 * # Safety
 * `exp` must be a live handle.
 */
enum BoarsStatus boars_experiment_step(struct BoarsExperiment *exp,
                                       enum BoarsRunStatus *status_out);

/**
 * Steps until a human answer is needed or the run ends.
 *
 * # Safety
 * `exp` must be a live handle.
 */
enum BoarsStatus boars_experiment_advance(struct BoarsExperiment *exp,
                                          enum BoarsRunStatus *status_out);

/**
 * # Safety
 * `exp` must be a live handle; `pending_out` valid for writes.
 */
enum BoarsStatus boars_experiment_pending(const struct BoarsExperiment *exp,
                                          struct BoarsPending *pending_out);

/**
 * Copies the spectrum awaiting a vote into `buf`.
 *
 * # Safety
 * `exp` must be a live handle; `buf` valid for `len` writes or NULL;
 * `needed` NULL or valid for writes.
 */
enum BoarsStatus boars_experiment_pending_spectrum(const struct BoarsExperiment *exp,
                                                   double *buf,
                                                   size_t len,
                                                   size_t *needed);

/**
 * Answers the pending vote. `pending_id` must match the pending
 * interaction, so a repeated call fails instead of voting twice.
 *
 * # Safety
 * `exp` must be a live handle.
 */
enum BoarsStatus boars_experiment_vote(struct BoarsExperiment *exp,
                                       uint64_t pending_id,
                                       int32_t vote,
                                       double preference);

/**
 * # Safety
 * `exp` must be a live handle.
 */
enum BoarsStatus boars_experiment_satisfaction(struct BoarsExperiment *exp,
                                               uint64_t pending_id,
                                               bool satisfied);

/**
 * # Safety
 * `exp` must be a live handle.
 */
enum BoarsStatus boars_experiment_abort(struct BoarsExperiment *exp);

/**
 * # Safety
 * `exp` must be a live handle; `n_out` valid for writes.
 */
enum BoarsStatus boars_experiment_explored_count(const struct BoarsExperiment *exp, size_t *n_out);

/**
 * Copies the current target into `buf`; `State` while none exists.
 *
 * # Safety
 * As for [`boars_experiment_pending_spectrum`].
 */
enum BoarsStatus boars_experiment_target(const struct BoarsExperiment *exp,
                                         double *buf,
                                         size_t len,
                                         size_t *needed);

/**
 * Copies the latest map of `kind` (row-major over the candidate lattice).
 *
 * # Safety
 * `exp` must be a live handle; `buf` valid for `len` writes or NULL;
 * `rows`, `cols` and `needed` NULL or valid for writes.
 */
enum BoarsStatus boars_experiment_map(const struct BoarsExperiment *exp,
                                      enum BoarsMapKind kind,
                                      double *buf,
                                      size_t len,
                                      size_t *rows,
                                      size_t *cols,
                                      size_t *needed);

/**
 * Final whole-map MSE; `State` until the run has finished with a frozen
 * target.
 *
 * # Safety
 * `exp` must be a live handle; `mse_out` valid for writes.
 */
enum BoarsStatus boars_experiment_mse(const struct BoarsExperiment *exp, double *mse_out);

/**
 * Writes the run record directory.
 *
 * # Safety
 * `exp` must be a live handle; `dir` NUL-terminated.
 */
enum BoarsStatus boars_experiment_export(const struct BoarsExperiment *exp, const char *dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BOARS_H */
