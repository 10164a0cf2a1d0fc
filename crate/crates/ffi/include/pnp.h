#ifndef PNP_H
#define PNP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PnpStatus {
  PNP_STATUS_OK = 0,
  PNP_STATUS_NULL_POINTER = 1,
  // Bad grid, parameter, buffer length or configuration.
  PNP_STATUS_INVALID_ARGUMENT = 2,
  // Linear or nonlinear iteration failed to converge.
  PNP_STATUS_SOLVER_FAILURE = 3,
  // Positivity or charge-neutrality violated.
  PNP_STATUS_INVARIANT_VIOLATION = 4,
  PNP_STATUS_PANIC = 5,
} PnpStatus;

typedef enum PnpField {
  PNP_FIELD_N = 0,
  PNP_FIELD_P = 1,
  PNP_FIELD_PHI = 2,
} PnpField;

// Opaque simulation handle.
typedef struct PnpSimulation PnpSimulation;

typedef struct PnpParams {
  double dt;
  double diffusivity;
  double omega_r;
  double picard_tol;
  uint64_t picard_max;
  double linear_tol;
} PnpParams;

typedef struct PnpStepReport {
  double time;
  double energy;
  double mass_n;
  double mass_p;
  double c_min;
  double dissipation;
  uint64_t picard_iters;
  double residual;
} PnpStepReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library defaults: `dt = 1e-3`, `D = 1`, `omega_r = 0.2`,
// `picard_tol = 1e-10`, `picard_max = 500`, `linear_tol = 1e-12`.
struct PnpParams pnp_default_params(void);

// Creates a simulation on `(-half_width, half_width)^dim` with `cells`
// cells per axis and `n = p = 1`. `params` may be null for defaults.
//
// # Safety
// `params` must be null or valid; `out` must be a valid pointer.
enum PnpStatus pnp_simulation_new(uint32_t dim,
                                  uint64_t cells,
                                  double half_width,
                                  const struct PnpParams *params,
                                  struct PnpSimulation **out);

// # Safety
// `sim` must be null or a handle from [`pnp_simulation_new`] not yet freed.
void pnp_simulation_free(struct PnpSimulation *sim);

// Number of cells, `N^dim`; 0 for a null handle.
//
// # Safety
// `sim` must be null or a live handle.
size_t pnp_simulation_len(const struct PnpSimulation *sim);

// Current simulation time; NaN for a null handle.
//
// # Safety
// `sim` must be null or a live handle.
double pnp_simulation_time(const struct PnpSimulation *sim);

// Replaces both concentrations (strictly positive) and recomputes the
// potential. The time is left unchanged.
//
// # Safety
// `n` and `p` must each point to `len` readable doubles.
enum PnpStatus pnp_simulation_set_concentrations(struct PnpSimulation *sim,
                                                 const double *n,
                                                 const double *p,
                                                 size_t len);

// Sets the fixed background charge; a null `rho` removes it. The net
// charge `p - n + rho` must have zero mean.
//
// # Safety
// `rho` must be null or point to `len` readable doubles.
enum PnpStatus pnp_simulation_set_fixed_charge(struct PnpSimulation *sim,
                                               const double *rho,
                                               size_t len);

// Advances `steps` time steps. `report` (may be null) receives the
// diagnostics of the last step taken. On failure the state is that of the
// last successful step.
//
// # Safety
// `report` must be null or valid for writes.
enum PnpStatus pnp_simulation_step(struct PnpSimulation *sim,
                                   uint64_t steps,
                                   struct PnpStepReport *report);

// Copies a field into `out`, which must hold exactly `len = N^dim` doubles.
//
// # Safety
// `out` must point to `len` writable doubles.
enum PnpStatus pnp_simulation_get_field(const struct PnpSimulation *sim,
                                        enum PnpField which,
                                        double *out,
                                        size_t len);

// Discrete free energy of the current state.
//
// # Safety
// `out` must be valid for writes.
enum PnpStatus pnp_simulation_energy(const struct PnpSimulation *sim, double *out);

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next call into this library on the same thread.
const char *pnp_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PNP_H */
