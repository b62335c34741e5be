#ifndef VQM_H
#define VQM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VqmStatus {
  VQM_STATUS_OK = 0,
  VQM_STATUS_NULL_POINTER = 1,
  VQM_STATUS_INVALID_ARGUMENT = 2,
  VQM_STATUS_DOMAIN = 3,
  VQM_STATUS_NUMERIC = 4,
  VQM_STATUS_PARSE = 5,
  VQM_STATUS_IO = 6,
  VQM_STATUS_PANIC = 7,
} VqmStatus;

// Opaque trained merging model.
typedef struct VqmModel VqmModel;

// Mixture-fitting options. `bic_penalty` is 0 for `(6K-1) ln N` and 1 for `K ln N`.
typedef struct VqmFitOptions {
  uint32_t k_max;
  double em_tolerance;
  uint32_t max_iterations;
  uint32_t n_restarts;
  double regularization;
  uint64_t seed;
  uint32_t bic_penalty;
} VqmFitOptions;

// `m` clusters after merging `k_star` components.
typedef struct VqmScore {
  uint32_t m;
  uint32_t k_star;
} VqmScore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or NULL.
// The pointer stays valid until the next `vqm_*` call on the same thread.
const char *vqm_last_error_message(void);

// NUL-terminated library version; static storage.
const char *vqm_version(void);

// # Safety
// `out` must be NULL or valid for writes.
enum VqmStatus vqm_fit_options_default(struct VqmFitOptions *out);

// Load a model from its JSON envelope. Free the result with [`vqm_model_free`].
//
// # Safety
// `bytes` must point to `len` readable bytes; `out` must be valid for writes.
enum VqmStatus vqm_model_from_json(const uint8_t *bytes, size_t len, struct VqmModel **out);

// # Safety
// `model` must be NULL or a handle from [`vqm_model_from_json`] not yet freed.
void vqm_model_free(struct VqmModel *model);

// Predict one aligned 8-feature pair `(tau, mu, sxu, syu, sxv, syv, thu, thv)`.
// `out_merge` receives 1 for merge, 0 otherwise; `out_vote_fraction` may be NULL.
//
// # Safety
// `model` must be a live handle, `features` must point to 8 readable doubles,
// `out_merge` must be valid for writes and `out_vote_fraction` NULL or valid.
enum VqmStatus vqm_model_predict(const struct VqmModel *model,
                                 const double *features,
                                 uint8_t *out_merge,
                                 double *out_vote_fraction);

// Score a scatterplot given as parallel coordinate arrays.
// `options` may be NULL for defaults.
//
// # Safety
// `model` must be a live handle, `xs` and `ys` must each point to `n`
// readable doubles, `options` NULL or readable and `out` valid for writes.
enum VqmStatus vqm_score_points(const struct VqmModel *model,
                                const double *xs,
                                const double *ys,
                                size_t n,
                                const struct VqmFitOptions *options,
                                struct VqmScore *out);

// Writes -1, 0 or 1 to `out` as `a` is simpler than, tied with or more complex than `b`.
//
// # Safety
// `out` must be valid for writes.
enum VqmStatus vqm_compare(struct VqmScore a, struct VqmScore b, int32_t *out);

// # Safety
// `out` must be valid for writes.
enum VqmStatus vqm_scalar_score(struct VqmScore s, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VQM_H */
