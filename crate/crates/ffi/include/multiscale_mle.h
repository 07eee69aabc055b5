#ifndef MULTISCALE_MLE_H
#define MULTISCALE_MLE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes.
typedef enum MsmleStatus {
  MSMLE_STATUS_OK = 0,
  // A required pointer argument was null.
  MSMLE_STATUS_NULL_POINTER = 1,
  // Invalid parameter, unknown family or unsupported request.
  MSMLE_STATUS_INVALID_ARGUMENT = 2,
  // Simulation blow-up, degenerate quadrature or similar.
  MSMLE_STATUS_NUMERICAL = 3,
  // Caller-provided buffer is too small.
  MSMLE_STATUS_BUFFER_TOO_SMALL = 4,
  // Internal panic caught at the boundary.
  MSMLE_STATUS_PANIC = 99,
} MsmleStatus;

// Catalog families.
typedef enum MsmleFamily {
  MSMLE_FAMILY_AVG_OU_MODULATED = 0,
  MSMLE_FAMILY_LANGEVIN_HIGH_FRICTION = 1,
  MSMLE_FAMILY_MULTISCALE_POTENTIAL1_D = 2,
} MsmleFamily;

// A catalog model: fast/slow system plus its coarse model.
typedef struct MsmleModel MsmleModel;

// A simulated slow trajectory.
typedef struct MsmlePath MsmlePath;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread. Valid until the next failing
// call on the same thread; never null.
const char *msmle_last_error(void);

// Library version as a static NUL-terminated string.
const char *msmle_version(void);

// Builds a catalog model. `p_coeffs` (`a_1..a_n` of `Σ a_k cos(2πky)`) is
// only read for `MultiscalePotential1D`. `beta` is the inverse temperature.
//
// # Safety
// `p_coeffs` must point to `n_coeffs` doubles; `out` must be writable.
enum MsmleStatus msmle_model_new(enum MsmleFamily family,
                                 double theta0,
                                 double epsilon,
                                 double beta,
                                 const double *p_coeffs,
                                 size_t n_coeffs,
                                 struct MsmleModel **out);

// # Safety
// `model` must come from [`msmle_model_new`] and not be used afterwards.
void msmle_model_free(struct MsmleModel *model);

// Homogenized coefficient `K` (1 for the averaging and Langevin entries)
// and the coarse diffusion constant.
//
// # Safety
// Pointers must be valid.
enum MsmleStatus msmle_model_coefficients(const struct MsmleModel *model,
                                          double *out_k,
                                          double *out_diffusion);

// Periodic cell problem for `p(y) = Σ a_k cos(2πky)`.
//
// # Safety
// `p_coeffs` must point to `n_coeffs` doubles; outputs must be writable.
enum MsmleStatus msmle_cell_problem(const double *p_coeffs,
                                    size_t n_coeffs,
                                    double beta,
                                    size_t n_nodes,
                                    double *out_k,
                                    double *out_z_p,
                                    double *out_z_hat_p);

// Simulates a stationary trajectory of length `t_final` at
// `dt = ε²/r` (homogenization) or `ε/r` (averaging).
//
// # Safety
// `model` must be valid; `out` must be writable.
enum MsmleStatus msmle_simulate(const struct MsmleModel *model,
                                double t_final,
                                uint32_t resolution_factor,
                                uint64_t seed,
                                struct MsmlePath **out);

// # Safety
// `path` must come from [`msmle_simulate`] and not be used afterwards.
void msmle_path_free(struct MsmlePath *path);

// Number of stored points and the integrator step.
//
// # Safety
// Pointers must be valid.
enum MsmleStatus msmle_path_info(const struct MsmlePath *path, size_t *out_len, double *out_dt);

// Copies the slow variable into `buf` (capacity `len`).
//
// # Safety
// `buf` must hold `len` doubles.
enum MsmleStatus msmle_path_copy_slow(const struct MsmlePath *path, double *buf, size_t len);

// Closed-form drift estimate. `delta <= 0` uses every point; otherwise the
// path is subsampled at `delta` first. `out_degenerate` may be null.
//
// # Safety
// Pointers must be valid.
enum MsmleStatus msmle_mle_linear(const struct MsmleModel *model,
                                  const struct MsmlePath *path,
                                  double delta,
                                  double *out_theta,
                                  bool *out_degenerate);

// Maximizer of the modified likelihood on data subsampled at `delta`
// (`delta <= 0`: every point).
//
// # Safety
// Pointers must be valid.
enum MsmleStatus msmle_mle_modified(const struct MsmleModel *model,
                                    const struct MsmlePath *path,
                                    double delta,
                                    double *out_theta);

// Closed-form bias term at `theta`: `out_magnitude` is unsigned,
// `out_formula_value` carries the closed form's own sign (0 for averaging).
//
// # Safety
// Pointers must be valid.
enum MsmleStatus msmle_e_infinity(const struct MsmleModel *model,
                                  double theta,
                                  double *out_magnitude,
                                  double *out_formula_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MULTISCALE_MLE_H */
