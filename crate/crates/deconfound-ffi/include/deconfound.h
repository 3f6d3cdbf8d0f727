#ifndef DECONFOUND_H
#define DECONFOUND_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Score kinds exposed over the ABI.
 */
typedef enum DcfScoreKind {
  DCF_SCORE_KIND_VANILLA_BIC = 0,
  DCF_SCORE_KIND_PCSS_BIC = 1,
  DCF_SCORE_KIND_CAM = 2,
  DCF_SCORE_KIND_CAM_OBS = 3,
  DCF_SCORE_KIND_DECAM_FOUND = 4,
} DcfScoreKind;

/**
 * Status codes mirroring the CLI exit-code contract: 0 success, 2 invalid
 * input, 3 numerical failure.
 */
typedef enum DcfStatus {
  DCF_STATUS_OK = 0,
  DCF_STATUS_NULL_ARGUMENT = 1,
  DCF_STATUS_INVALID_INPUT = 2,
  DCF_STATUS_NUMERICAL_FAILURE = 3,
} DcfStatus;

/**
 * Opaque generated dataset: X plus the optional H and S_true companions.
 */
typedef struct DcfDataset DcfDataset;

/**
 * Opaque spectral-projection result.
 */
typedef struct DcfPcss DcfPcss;

/**
 * Generation settings for `dcf_generate`; a C mirror of the library's SCM
 * configuration plus the graph density and sample count.
 */
typedef struct DcfGenerateParams {
  uintptr_t p;
  uintptr_t k;
  uintptr_t n;
  double sigma_noise_sq;
  double sigma_h_sq;
  /**
   * Non-zero restricts every trend to the linear family.
   */
  uint8_t linear_only;
  /**
   * Non-zero removes the linear family from the non-linear draw.
   */
  uint8_t exclude_linear_trend;
  double attach_prob;
  double expected_neighborhood;
  uintptr_t mc_samples;
  uint64_t seed;
} DcfGenerateParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the message from the most recent failing call on this thread into
 * `buf` (NUL-terminated, truncated to `len`). Returns the full message
 * length in bytes, excluding the terminator.
 */
uintptr_t dcf_last_error(char *buf, uintptr_t len);

enum DcfStatus dcf_generate(const struct DcfGenerateParams *params, struct DcfDataset **out);

uintptr_t dcf_dataset_rows(const struct DcfDataset *dataset);

uintptr_t dcf_dataset_cols(const struct DcfDataset *dataset);

uint8_t dcf_dataset_has_s_true(const struct DcfDataset *dataset);

/**
 * Copies X row-major into `buf` (`len` in f64 elements, at least N*p).
 */
enum DcfStatus dcf_dataset_copy_x(const struct DcfDataset *dataset, double *buf, uintptr_t len);

/**
 * Copies S_true row-major; fails when the generator could not compute it.
 */
enum DcfStatus dcf_dataset_copy_s_true(const struct DcfDataset *dataset,
                                       double *buf,
                                       uintptr_t len);

void dcf_dataset_free(struct DcfDataset *dataset);

/**
 * Runs the spectral projection on a row-major N×p matrix, keeping the top
 * `m` components.
 */
enum DcfStatus dcf_pcss(const double *x,
                        uintptr_t rows,
                        uintptr_t cols,
                        uintptr_t m,
                        struct DcfPcss **out);

enum DcfStatus dcf_pcss_copy_s_hat(const struct DcfPcss *handle, double *buf, uintptr_t len);

uintptr_t dcf_pcss_eigenvalue_count(const struct DcfPcss *handle);

enum DcfStatus dcf_pcss_copy_eigenvalues(const struct DcfPcss *handle, double *buf, uintptr_t len);

void dcf_pcss_free(struct DcfPcss *handle);

/**
 * Worst-per-column mean squared error between two row-major N×p matrices.
 */
enum DcfStatus dcf_max_mse(const double *estimate,
                           const double *truth,
                           uintptr_t rows,
                           uintptr_t cols,
                           double *out);

/**
 * Scores one parent set. `s_hat` is required for PcssBic/DecamFound and
 * `h` (N×k_rows) for CamObs; pass null otherwise. `parents` may be null
 * when `n_parents` is zero.
 */
enum DcfStatus dcf_score_parent_set(enum DcfScoreKind kind,
                                    const double *x,
                                    uintptr_t rows,
                                    uintptr_t cols,
                                    const double *s_hat,
                                    const double *h,
                                    uintptr_t h_cols,
                                    uintptr_t target,
                                    const uintptr_t *parents,
                                    uintptr_t n_parents,
                                    double *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* DECONFOUND_H */
