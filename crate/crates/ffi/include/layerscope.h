#ifndef LAYERSCOPE_H
#define LAYERSCOPE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LsMethod {
  LS_METHOD_PEARSON = 0,
  LS_METHOD_SPEARMAN = 1,
} LsMethod;

typedef enum LsStatus {
  LS_STATUS_OK = 0,
  LS_STATUS_NULL_ARGUMENT = 1,
  LS_STATUS_NOT_FOUND = 2,
  LS_STATUS_IO = 3,
  // Malformed LAM1, manifest, TSV or CSV input.
  LS_STATUS_FORMAT = 4,
  LS_STATUS_INVALID = 5,
  LS_STATUS_DEGENERATE = 6,
  LS_STATUS_NOT_CONVERGED = 7,
  LS_STATUS_DIVERGED = 8,
  LS_STATUS_PANIC = 9,
} LsStatus;

// GRIDE scale profile of one point set.
typedef struct LsIdProfile LsIdProfile;

// A dense row-major matrix with its manifest.
typedef struct LsMatrix LsMatrix;

typedef struct LsRffMap LsRffMap;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, a static NUL-terminated string.
const char *ls_version(void);

// Message of the last failed call on this thread, or NULL. Valid until the
// next call into the library from the same thread.
const char *ls_last_error_message(void);

// Copies `rows * cols` row-major values into a new matrix.
//
// # Safety
// `values` must point to `rows * cols` doubles; `out` must be writable.
enum LsStatus ls_matrix_from_rows(const double *values,
                                  size_t rows,
                                  size_t cols,
                                  struct LsMatrix **out);

// Reads a LAM1 file and its manifest sidecar, if any.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum LsStatus ls_matrix_read(const char *path, struct LsMatrix **out);

// Writes the matrix as LAM1 plus manifest sidecar.
//
// # Safety
// `m` must be a live handle and `path` a NUL-terminated string.
enum LsStatus ls_matrix_write(const struct LsMatrix *m, const char *path);

// # Safety
// `m` must be a live handle or NULL (returns 0).
size_t ls_matrix_rows(const struct LsMatrix *m);

// # Safety
// `m` must be a live handle or NULL (returns 0).
size_t ls_matrix_cols(const struct LsMatrix *m);

// Layer index from the matrix manifest.
//
// # Safety
// `m` must be a live handle or NULL (returns 0).
uint32_t ls_matrix_layer(const struct LsMatrix *m);

// Copies the row-major values into `out`, which holds `len` doubles.
//
// # Safety
// `m` must be a live handle; `out` must point to `len` writable doubles.
enum LsStatus ls_matrix_copy(const struct LsMatrix *m, double *out, size_t len);

// # Safety
// `m` must be NULL or a handle not yet freed.
void ls_matrix_free(struct LsMatrix *m);

// GRIDE estimate from distance ratios at scale `k`.
//
// # Safety
// `ratios` must point to `n` doubles; `id` and `stderr_out` must be writable.
enum LsStatus ls_gride_mle(const double *ratios,
                           size_t n,
                           size_t k,
                           double d_max,
                           double *id,
                           double *stderr_out);

// Scale profile of the matrix rows; `k = 0` selects the plateau scale.
//
// # Safety
// `m` must be a live handle; `out` must be writable.
enum LsStatus ls_id_profile(const struct LsMatrix *m,
                            uint32_t max_exp,
                            size_t k,
                            size_t bootstraps,
                            uint64_t seed,
                            struct LsIdProfile **out);

// Number of scales in the profile.
//
// # Safety
// `p` must be a live handle or NULL (returns 0).
size_t ls_id_profile_len(const struct LsIdProfile *p);

// Scale `i` of the profile: its k, estimate and standard error.
//
// # Safety
// `p` must be a live handle; the out pointers must be writable.
enum LsStatus ls_id_profile_scale(const struct LsIdProfile *p,
                                  size_t i,
                                  size_t *k,
                                  double *id,
                                  double *stderr_out);

// Chosen scale, its estimate, and the bootstrap mean and standard deviation.
//
// # Safety
// `p` must be a live handle; the out pointers must be writable.
enum LsStatus ls_id_profile_chosen(const struct LsIdProfile *p,
                                   size_t *k,
                                   double *id,
                                   double *bootstrap_mean,
                                   double *bootstrap_sd);

// # Safety
// `p` must be NULL or a handle not yet freed.
void ls_id_profile_free(struct LsIdProfile *p);

// PCA dimension at 99% explained variance and participation ratio.
//
// # Safety
// `m` must be a live handle; the out pointers must be writable.
enum LsStatus ls_linear_dims(const struct LsMatrix *m, size_t *pca_d, double *pr_d);

// Correlation of `x` and `y` with a two-sided permutation p-value.
//
// # Safety
// `x` and `y` must point to `n` doubles; `rho` and `p_value` must be writable.
enum LsStatus ls_permutation_test(const double *x,
                                  const double *y,
                                  size_t n,
                                  enum LsMethod method,
                                  size_t n_permutations,
                                  uint64_t seed,
                                  double *rho,
                                  double *p_value);

// Seeded random Fourier feature map R^d_in -> R^d_out for an RBF kernel of width `sigma`.
//
// # Safety
// `out` must be writable.
enum LsStatus ls_rff_map_new(size_t d_in,
                             size_t d_out,
                             double sigma,
                             uint64_t seed,
                             struct LsRffMap **out);

// Maps one vector; `x` holds d_in values and `out` d_out values.
//
// # Safety
// `map` must be a live handle; `x` and `out` must have the stated lengths.
enum LsStatus ls_rff_apply(const struct LsRffMap *map,
                           const double *x,
                           size_t x_len,
                           double *out,
                           size_t out_len);

// # Safety
// `map` must be NULL or a handle not yet freed.
void ls_rff_map_free(struct LsRffMap *map);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LAYERSCOPE_H */
