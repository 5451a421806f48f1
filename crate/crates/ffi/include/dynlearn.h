#ifndef DYNLEARN_H
#define DYNLEARN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. Zero is success.
typedef enum DlStatus {
  DL_STATUS_OK = 0,
  DL_STATUS_NULL_POINTER = 1,
  DL_STATUS_INVALID_ARGUMENT = 2,
  DL_STATUS_DIMENSION_MISMATCH = 3,
  DL_STATUS_UNSUPPORTED = 4,
  DL_STATUS_NUMERICAL_FAILURE = 5,
  DL_STATUS_IO = 6,
  DL_STATUS_PANIC = 7,
} DlStatus;

// One inverse-dynamics GP per joint, loaded from a model directory.
typedef struct DlEnsemble DlEnsemble;

// A rigid-body model (built-in name or robot file).
typedef struct DlRobot DlRobot;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the calling thread's last error message into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length in bytes, excluding
// the terminator.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
uintptr_t dl_last_error_message(char *buf, uintptr_t len);

// Load a robot by built-in name or file path (optionally suffixed `@k`).
//
// # Safety
// `reference` must be a NUL-terminated string; `out` must be writable.
enum DlStatus dl_robot_load(const char *reference, struct DlRobot **out);

// # Safety
// `robot` must be null or a handle from [`dl_robot_load`] not yet freed.
void dl_robot_free(struct DlRobot *robot);

// Number of joints, or 0 for a null handle.
//
// # Safety
// `robot` must be null or a live handle.
uintptr_t dl_robot_dof(const struct DlRobot *robot);

// `τ = ID(q, q̇, q̈)`
//
// # Safety
// Vector arguments must point to `n` doubles.
enum DlStatus dl_inverse_dynamics(const struct DlRobot *robot,
                                  const double *q,
                                  const double *qd,
                                  const double *qdd,
                                  uintptr_t n,
                                  double *tau_out);

// `q̈ = FD(q, q̇, τ)`
//
// # Safety
// Vector arguments must point to `n` doubles.
enum DlStatus dl_forward_dynamics(const struct DlRobot *robot,
                                  const double *q,
                                  const double *qd,
                                  const double *tau,
                                  uintptr_t n,
                                  double *qdd_out);

// Joint-space inertia matrix, row-major into `b_out` (`n × n`).
//
// # Safety
// `q` must point to `n` doubles and `b_out` to `n·n` writable doubles.
enum DlStatus dl_mass_matrix(const struct DlRobot *robot,
                             const double *q,
                             uintptr_t n,
                             double *b_out);

// Load an ensemble saved by `dynlearn fit` (`joint_<i>.json` files).
//
// # Safety
// `dir` must be a NUL-terminated path; `out` must be writable.
enum DlStatus dl_ensemble_load(const char *dir, struct DlEnsemble **out);

// # Safety
// `ens` must be null or a handle from [`dl_ensemble_load`] not yet freed.
void dl_ensemble_free(struct DlEnsemble *ens);

// # Safety
// `ens` must be null or a live handle.
uintptr_t dl_ensemble_dof(const struct DlEnsemble *ens);

// Learned torques `f̂(q, q̇, q̈)`.
//
// # Safety
// Vector arguments must point to `n` doubles.
enum DlStatus dl_ensemble_predict_torques(const struct DlEnsemble *ens,
                                          const double *q,
                                          const double *qd,
                                          const double *qdd,
                                          uintptr_t n,
                                          double *tau_out);

// Forward dynamics from the learned inverse model: `q̈ = B̂⁻¹(τ − n̂)`.
// `probe` is the acceleration probe magnitude (use 1.0); `symmetrize`
// nonzero symmetrizes `B̂` before inversion.
//
// # Safety
// Vector arguments must point to `n` doubles.
enum DlStatus dl_ensemble_predict_acceleration(const struct DlEnsemble *ens,
                                               const double *q,
                                               const double *qd,
                                               const double *tau,
                                               uintptr_t n,
                                               double probe,
                                               int32_t symmetrize,
                                               double *qdd_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DYNLEARN_H */
