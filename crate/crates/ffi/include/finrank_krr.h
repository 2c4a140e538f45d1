/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef FINRANK_KRR_H
#define FINRANK_KRR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FkStatus {
  FK_STATUS_OK = 0,
  FK_STATUS_NULL_POINTER = 1,
  FK_STATUS_INVALID_ARGUMENT = 2,
  FK_STATUS_DOMAIN = 3,
  FK_STATUS_ILL_POSED = 4,
  FK_STATUS_SINGULAR = 5,
  FK_STATUS_CAPABILITY = 6,
  FK_STATUS_DIVERGENT = 7,
  FK_STATUS_NUMERICAL = 8,
  FK_STATUS_MISUSE = 9,
  FK_STATUS_CONFIG = 10,
  FK_STATUS_IO = 11,
  FK_STATUS_PANIC = 12,
} FkStatus;

typedef struct FkDataset FkDataset;

typedef struct FkFit FkFit;

typedef struct FkKernel FkKernel;

typedef struct FkTarget FkTarget;

typedef struct FkErrorReport {
  double bias;
  double variance;
  double test_error;
  double finite_rank_error;
  double fitting_error;
  double delta_norm;
  double error_vector_norm;
} FkErrorReport;

typedef struct FkBounds {
  double bias_lower;
  double bias_upper;
  double variance_lower;
  double variance_upper;
  double test_lower;
  double test_upper;
  double confidence;
  /**
   * Baseline upper bound with τ = 2/N; NaN when it does not apply.
   */
  double baseline_test_upper;
} FkBounds;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *fk_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fk_version(void);

/**
 * # Safety
 * `out` must be a valid pointer to writable storage for a handle.
 */
enum FkStatus fk_kernel_tntk(size_t rank, struct FkKernel **out);

/**
 * # Safety
 * `out` must be a valid pointer to writable storage for a handle.
 */
enum FkStatus fk_kernel_legendre(size_t rank, struct FkKernel **out);

/**
 * Rank of the kernel, or 0 for a null handle.
 *
 * # Safety
 * `kernel` must be null or a live handle.
 */
size_t fk_kernel_rank(const struct FkKernel *kernel);

/**
 * Copy the eigenvalues into `buf`, which must hold at least the rank.
 *
 * # Safety
 * `kernel` must be a live handle and `buf` valid for `len` writes.
 */
enum FkStatus fk_kernel_eigenvalues(const struct FkKernel *kernel, double *buf, size_t len);

/**
 * # Safety
 * `kernel` must be null or a handle not yet freed.
 */
void fk_kernel_free(struct FkKernel *kernel);

/**
 * Target with coefficients `gamma[0..len]` on the kernel basis and
 * complement coefficient `gamma_plus`.
 *
 * # Safety
 * `kernel` must be a live handle, `gamma` valid for `len` reads.
 */
enum FkStatus fk_target_new(const struct FkKernel *kernel,
                            const double *gamma,
                            size_t len,
                            double gamma_plus,
                            struct FkTarget **out);

/**
 * `cos θ` on a circle kernel.
 *
 * # Safety
 * `kernel` must be a live handle.
 */
enum FkStatus fk_target_cosine(const struct FkKernel *kernel, struct FkTarget **out);

/**
 * `x²` on a Legendre kernel.
 *
 * # Safety
 * `kernel` must be a live handle.
 */
enum FkStatus fk_target_x_squared(const struct FkKernel *kernel, struct FkTarget **out);

/**
 * # Safety
 * `target` must be a live handle and `value` writable.
 */
enum FkStatus fk_target_eval(const struct FkTarget *target, double x, double *value);

/**
 * # Safety
 * `target` must be null or a handle not yet freed.
 */
void fk_target_free(struct FkTarget *target);

/**
 * Draw `n` inputs and noisy labels from `target`.
 *
 * # Safety
 * `target` must be a live handle.
 */
enum FkStatus fk_dataset_sample(const struct FkTarget *target,
                                size_t n,
                                double noise_var,
                                uint64_t seed,
                                struct FkDataset **out);

/**
 * Dataset from caller-supplied arrays of length `n`.
 *
 * # Safety
 * `inputs` and `labels` must be valid for `n` reads.
 */
enum FkStatus fk_dataset_new(const double *inputs,
                             const double *labels,
                             size_t n,
                             double noise_var,
                             struct FkDataset **out);

/**
 * Number of samples, or 0 for a null handle.
 *
 * # Safety
 * `data` must be null or a live handle.
 */
size_t fk_dataset_len(const struct FkDataset *data);

/**
 * # Safety
 * `data` must be a live handle and `buf` valid for `len` writes.
 */
enum FkStatus fk_dataset_inputs(const struct FkDataset *data, double *buf, size_t len);

/**
 * # Safety
 * `data` must be a live handle and `buf` valid for `len` writes.
 */
enum FkStatus fk_dataset_labels(const struct FkDataset *data, double *buf, size_t len);

/**
 * # Safety
 * `data` must be null or a handle not yet freed.
 */
void fk_dataset_free(struct FkDataset *data);

/**
 * Fit kernel ridge regression with ridge `lambda`.
 *
 * # Safety
 * `kernel` and `data` must be live handles.
 */
enum FkStatus fk_fit(const struct FkKernel *kernel,
                     const struct FkDataset *data,
                     double lambda,
                     struct FkFit **out);

/**
 * # Safety
 * `fit` must be a live handle and `value` writable.
 */
enum FkStatus fk_fit_predict(const struct FkFit *fit, double x, double *value);

/**
 * # Safety
 * `fit` must be null or a handle not yet freed.
 */
void fk_fit_free(struct FkFit *fit);

/**
 * Exact bias/variance decomposition for the inputs of `data`.
 *
 * # Safety
 * `target` and `data` must be live handles, `out` writable.
 */
enum FkStatus fk_exact_error(const struct FkTarget *target,
                             const struct FkDataset *data,
                             double lambda,
                             double noise_var,
                             struct FkErrorReport *out);

/**
 * Upper and lower bounds on bias, variance and test error. Negative lower
 * bounds are reported as 0.
 *
 * # Safety
 * `target` must be a live handle, `out` writable.
 */
enum FkStatus fk_bounds(const struct FkTarget *target,
                        size_t n,
                        double lambda,
                        double noise_var,
                        bool include_residue,
                        struct FkBounds *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FINRANK_KRR_H */
