#ifndef NPN_H
#define NPN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define NPN_MISSING_LABEL 2

typedef enum NpnStatus {
  NPN_STATUS_OK = 0,
  // Invalid argument or option value.
  NPN_STATUS_USAGE = 1,
  // Unusable input data.
  NPN_STATUS_DATA = 2,
  // Numerical failure while fitting.
  NPN_STATUS_NUMERIC = 3,
  // File could not be read or written.
  NPN_STATUS_IO = 4,
  // Model file is malformed or of another version.
  NPN_STATUS_MODEL_FORMAT = 5,
  // A required pointer argument was null.
  NPN_STATUS_NULL_POINTER = 6,
  // Internal panic; the library state is otherwise unaffected.
  NPN_STATUS_PANIC = 7,
} NpnStatus;

// Opaque fitted model.
typedef struct NpnModel NpnModel;

// Fit options. Defaults come from `npn_fit_options_default`.
typedef struct NpnFitOptions {
  // Smallest and largest candidate basis sizes (inclusive).
  size_t j_min;
  size_t j_max;
  size_t pilot_iterations;
  size_t final_iterations;
  // Burn-in of the final chain; negative for half of it.
  int64_t burn_in;
  // Boundary ratio bound of the selection criterion.
  double m;
  // Fixed λ₀ in (0, 1); any other value learns λ₀ under Beta(beta_a, beta_b).
  double lambda0;
  double beta_a;
  double beta_b;
  uint64_t seed;
  // Nonzero to run pilot chains on a thread pool.
  uint8_t parallel;
} NpnFitOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *npn_version(void);

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next failing call on the same thread.
const char *npn_last_error(void);

// Writes the default fit options to `out`.
//
// # Safety
// `out` must be null or point to writable memory for one `NpnFitOptions`.
enum NpnStatus npn_fit_options_default(struct NpnFitOptions *out);

// Fits a model. `options` may be null for the defaults. On success `*out`
// receives a new handle owned by the caller.
//
// # Safety
// `x` must point to `n_rows * n_cols` doubles, `labels` to `n_rows` bytes,
// `options` to a valid `NpnFitOptions` or be null, and `out` to writable
// storage for one pointer.
enum NpnStatus npn_fit(const double *x,
                       size_t n_rows,
                       size_t n_cols,
                       const uint8_t *labels,
                       const struct NpnFitOptions *options,
                       struct NpnModel **out);

// Classifies `n_rows` rows. `out_labels` receives 0 or 1 per row;
// `out_p_class1`, if not null, the posterior probability of class 1.
//
// # Safety
// `model` must be a live handle, `x` must point to `n_rows * n_cols`
// doubles, `out_labels` to `n_rows` writable bytes and `out_p_class1` to
// `n_rows` writable doubles or be null.
enum NpnStatus npn_model_predict(const struct NpnModel *model,
                                 const double *x,
                                 size_t n_rows,
                                 size_t n_cols,
                                 uint8_t *out_labels,
                                 double *out_p_class1);

// Loads a model file. On success `*out` receives a new handle.
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable storage for one
// pointer.
enum NpnStatus npn_model_load(const char *path, struct NpnModel **out);

// Writes a model file.
//
// # Safety
// `model` must be a live handle and `path` a NUL-terminated string.
enum NpnStatus npn_model_save(const struct NpnModel *model, const char *path);

// Number of feature columns the model expects; 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t npn_model_num_features(const struct NpnModel *model);

// Selected spline basis size; 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t npn_model_num_basis(const struct NpnModel *model);

// Releases a handle. Null is ignored.
//
// # Safety
// `model` must be null or a handle not yet freed.
void npn_model_free(struct NpnModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NPN_H */
