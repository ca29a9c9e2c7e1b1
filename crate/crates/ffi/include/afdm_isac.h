#ifndef AFDM_ISAC_H
#define AFDM_ISAC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code of every fallible call.
 */
typedef enum AfdmStatus {
  AFDM_STATUS_OK = 0,
  AFDM_STATUS_NULL_POINTER = 1,
  AFDM_STATUS_INVALID_ARGUMENT = 2,
  AFDM_STATUS_NOT_FOUND = 3,
  AFDM_STATUS_PARSE = 4,
  AFDM_STATUS_NUMERICAL = 5,
  AFDM_STATUS_IO = 6,
  AFDM_STATUS_OUT_OF_RANGE = 7,
  AFDM_STATUS_PANIC = 8,
} AfdmStatus;

/**
 * Parameter selector for `afdm_crlb_get`.
 */
typedef enum AfdmParam {
  AFDM_PARAM_THETA = 0,
  AFDM_PARAM_RANGE = 1,
  AFDM_PARAM_DELAY = 2,
  AFDM_PARAM_DOPPLER = 3,
  AFDM_PARAM_PHI = 4,
  AFDM_PARAM_GAMMA = 5,
} AfdmParam;

typedef struct AfdmCrlb AfdmCrlb;

typedef struct AfdmEstimates AfdmEstimates;

typedef struct AfdmScenario AfdmScenario;

typedef struct AfdmTensor AfdmTensor;

/**
 * One estimated target.
 */
typedef struct AfdmTarget {
  /**
   * Angle of arrival, rad.
   */
  double theta;
  /**
   * Angle of departure, rad.
   */
  double phi;
  /**
   * Delay, s.
   */
  double tau;
  /**
   * Doppler shift, Hz.
   */
  double f_d;
  /**
   * Delay in samples.
   */
  double beta;
  /**
   * Doppler in subcarrier spacings.
   */
  double nu;
} AfdmTarget;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *afdm_version(void);

/**
 * Copies the calling thread's last error message into `buf` (truncated,
 * always NUL-terminated) and returns the full message length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
uintptr_t afdm_last_error(char *buf, uintptr_t len);

/**
 * Built-in full-scale scene (N=256, G=101, K=8, three targets).
 *
 * # Safety
 * `out` must be a valid pointer to write a handle into.
 */
enum AfdmStatus afdm_scenario_reference(struct AfdmScenario **out);

/**
 * Built-in small scene (N=64, G=33, K=8, three targets).
 *
 * # Safety
 * `out` must be a valid pointer to write a handle into.
 */
enum AfdmStatus afdm_scenario_desk(struct AfdmScenario **out);

/**
 * Loads and validates a scene file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum AfdmStatus afdm_scenario_load(const char *path, struct AfdmScenario **out);

/**
 * Number of truth targets in the scene, 0 for a null handle.
 *
 * # Safety
 * `sc` must be null or a live scenario handle.
 */
uintptr_t afdm_scenario_num_targets(const struct AfdmScenario *sc);

/**
 * # Safety
 * `sc` must be null or a handle from this library not yet freed.
 */
void afdm_scenario_free(struct AfdmScenario *sc);

/**
 * Synthesizes the received tensor of the scene's frame. A non-finite
 * `snr_db` gives the noise-free tensor.
 *
 * # Safety
 * `sc` must be a live scenario handle; `out` a valid pointer.
 */
enum AfdmStatus afdm_simulate(const struct AfdmScenario *sc,
                              double snr_db,
                              uint64_t seed,
                              struct AfdmTensor **out);

/**
 * Reads a tensor file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum AfdmStatus afdm_tensor_read(const char *path, struct AfdmTensor **out);

/**
 * Writes a tensor file.
 *
 * # Safety
 * `t` must be a live tensor handle; `path` a NUL-terminated string.
 */
enum AfdmStatus afdm_tensor_write(const struct AfdmTensor *t, const char *path);

/**
 * Dimensions `(G, N, K)` of the tensor.
 *
 * # Safety
 * `t` must be a live tensor handle; the outputs valid pointers.
 */
enum AfdmStatus afdm_tensor_dims(const struct AfdmTensor *t,
                                 uintptr_t *g,
                                 uintptr_t *n,
                                 uintptr_t *k);

/**
 * # Safety
 * `t` must be null or a handle from this library not yet freed.
 */
void afdm_tensor_free(struct AfdmTensor *t);

/**
 * Runs the estimator on `t` with the scene's geometry and frame. `rank` 0
 * selects the target count by MDL; `t_outer` 0 uses the default.
 *
 * # Safety
 * `sc` and `t` must be live handles; `out` a valid pointer.
 */
enum AfdmStatus afdm_estimate(const struct AfdmScenario *sc,
                              const struct AfdmTensor *t,
                              uintptr_t rank,
                              uintptr_t t_outer,
                              struct AfdmEstimates **out);

/**
 * Number of estimated targets, 0 for a null handle.
 *
 * # Safety
 * `est` must be null or a live estimates handle.
 */
uintptr_t afdm_estimates_count(const struct AfdmEstimates *est);

/**
 * Copies estimate `index` into `out`.
 *
 * # Safety
 * `est` must be a live estimates handle; `out` a valid pointer.
 */
enum AfdmStatus afdm_estimates_get(const struct AfdmEstimates *est,
                                   uintptr_t index,
                                   struct AfdmTarget *out);

/**
 * # Safety
 * `est` must be null or a handle from this library not yet freed.
 */
void afdm_estimates_free(struct AfdmEstimates *est);

/**
 * Cramer-Rao bounds of the scene at `snr_db`. With `split_gamma` nonzero
 * the reflection coefficient counts as two real parameters.
 *
 * # Safety
 * `sc` must be a live scenario handle; `out` a valid pointer.
 */
enum AfdmStatus afdm_crlb(const struct AfdmScenario *sc,
                          double snr_db,
                          int32_t split_gamma,
                          struct AfdmCrlb **out);

/**
 * Copies the per-target bounds of `param` into `buf` and stores the target
 * count in `count`. Fails with `OUT_OF_RANGE` when `len` is too small
 * (`count` is still set). Range bounds of far-field targets are NaN.
 *
 * # Safety
 * `c` must be a live CRLB handle; `buf` null or `len` writable doubles;
 * `count` a valid pointer.
 */
enum AfdmStatus afdm_crlb_get(const struct AfdmCrlb *c,
                              enum AfdmParam param,
                              double *buf,
                              uintptr_t len,
                              uintptr_t *count);

/**
 * Set when the Fisher information was singular and pseudo-inverted.
 *
 * # Safety
 * `c` must be null or a live CRLB handle.
 */
bool afdm_crlb_is_singular(const struct AfdmCrlb *c);

/**
 * # Safety
 * `c` must be null or a handle from this library not yet freed.
 */
void afdm_crlb_free(struct AfdmCrlb *c);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AFDM_ISAC_H */
