/* C interface to the coherence-lab two-level-system simulator and fitter. */

#ifndef COHERENCE_LAB_H
#define COHERENCE_LAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status code returned by every fallible call.
typedef enum CohStatus {
  COH_STATUS_OK = 0,
  COH_STATUS_NULL_POINTER = 1,
  COH_STATUS_INVALID_ARGUMENT = 2,
  COH_STATUS_INVALID_GRID = 3,
  COH_STATUS_INVALID_TRACE = 4,
  COH_STATUS_DEGENERATE_SCALE = 5,
  COH_STATUS_UNFITTABLE = 6,
  COH_STATUS_IO_ERROR = 7,
  COH_STATUS_PANIC = 8,
} CohStatus;

// Opaque delay trace handle.
typedef struct CohTrace CohTrace;

// Opaque Bloch-vector trajectory handle.
typedef struct CohTrajectory CohTrajectory;

// Fixed-step integration policy.
typedef struct CohIntegratorConfig {
  double step;
  double start_offset;
  double readout_offset;
} CohIntegratorConfig;

// Search region for the fit; delta bounds are in cm^-1.
typedef struct CohFitBounds {
  double omega_r0_lo;
  double omega_r0_hi;
  double t2_star_lo;
  double t2_star_hi;
  double delta_cm_lo;
  double delta_cm_hi;
  double tau_p;
} CohFitBounds;

// Physical parameters of one molecule plus its drive.
typedef struct CohSystemParams {
  // Maximum Rabi frequency, rad/fs.
  double omega_r0;
  // Pure dephasing time, fs; use INFINITY for no dephasing.
  double t2_star;
  // Detuning, rad/fs.
  double delta;
  // Gaussian envelope width parameter, fs.
  double tau_p;
} CohSystemParams;

// The two-pulse sequence and readout rule.
typedef struct CohPulseProgram {
  // Inter-pulse delay, fs.
  double delay;
  // Relative carrier phase, rad.
  double phase;
  // Readout, multiples of tau_p after the delayed pulse peak (>= 3).
  double readout_offset;
} CohPulseProgram;

// Bloch vector components.
typedef struct CohBlochState {
  double u;
  double v;
  double w;
} CohBlochState;

// Best-fit parameters and diagnostics.
typedef struct CohFitSummary {
  double omega_r0;
  double t2_star;
  double delta;
  double delta_cm;
  double scale;
  double sse;
  uint64_t n_evals;
  bool converged;
} CohFitSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Diagnostic text for the most recent failure on this thread, or NULL.
// The pointer stays valid until the next failing call on the same thread.
const char *coh_last_error_message(void);

// Static description of a status code.
const char *coh_status_message(enum CohStatus status);

// Default integration policy (0.05 fs step, window offsets 4 and 3).
struct CohIntegratorConfig coh_default_config(void);

// Default fit bounds for a given envelope width.
struct CohFitBounds coh_default_bounds(double tau_p);

// Convert a wavenumber in cm^-1 to an angular frequency in rad/fs.
double coh_wavenumber_to_angfreq(double nu_tilde);

// Single-pulse area sqrt(2*pi) * omega_r0 * tau_p, rad.
double coh_pulse_area(double omega_r0, double tau_p);

// Field-envelope FWHM (fs) to Gaussian width parameter tau_p (fs).
enum CohStatus coh_fwhm_to_tau(double fwhm, double *out);

// Lower bound on T2* (fs) implied by a Lorentzian line width (FWHM, cm^-1).
enum CohStatus coh_linewidth_to_min_dephasing(double fwhm_wavenumber, double *out);

// Integrate the Bloch equations and return the state at readout.
enum CohStatus coh_evolve(const struct CohSystemParams *params,
                          const struct CohPulseProgram *prog,
                          const struct CohIntegratorConfig *cfg,
                          struct CohBlochState *out);

// Compute the full trajectory; free with `coh_trajectory_free`.
enum CohStatus coh_trajectory_run(const struct CohSystemParams *params,
                                  const struct CohPulseProgram *prog,
                                  const struct CohIntegratorConfig *cfg,
                                  struct CohTrajectory **out);

size_t coh_trajectory_len(const struct CohTrajectory *traj);

// Fetch sample `idx` of a trajectory.
enum CohStatus coh_trajectory_get(const struct CohTrajectory *traj,
                                  size_t idx,
                                  double *t_out,
                                  struct CohBlochState *state_out);

// # Safety
// `traj` must come from `coh_trajectory_run` and not be freed twice.
void coh_trajectory_free(struct CohTrajectory *traj);

// Build a measured (counts/s) trace from parallel arrays.
enum CohStatus coh_trace_measured(const double *delays,
                                  const double *values,
                                  size_t len,
                                  double phase,
                                  struct CohTrace **out);

// Build a simulated (dimensionless) trace from parallel arrays.
enum CohStatus coh_trace_simulated(const double *delays,
                                   const double *values,
                                   size_t len,
                                   double phase,
                                   struct CohTrace **out);

size_t coh_trace_len(const struct CohTrace *trace);

double coh_trace_phase(const struct CohTrace *trace);

// Fetch sample `idx` of a trace.
enum CohStatus coh_trace_get(const struct CohTrace *trace,
                             size_t idx,
                             double *delay_out,
                             double *value_out);

// # Safety
// `trace` must come from this library and not be freed twice.
void coh_trace_free(struct CohTrace *trace);

// Simulate a population delay trace on the given grid.
enum CohStatus coh_delay_trace(const struct CohSystemParams *params,
                               double phase,
                               const double *delays,
                               size_t len,
                               const struct CohIntegratorConfig *cfg,
                               struct CohTrace **out);

// Simulate a coherence (v component) delay trace on the given grid.
enum CohStatus coh_coherence_trace(const struct CohSystemParams *params,
                                   double phase,
                                   const double *delays,
                                   size_t len,
                                   const struct CohIntegratorConfig *cfg,
                                   struct CohTrace **out);

// Rabi-flopping curve: fills `rho11_out[len]` with readout populations for
// the given omega_r0 amplitudes at delay 0, phase 0.
enum CohStatus coh_rabi_curve(double tau_p,
                              double t2_star,
                              double delta,
                              const double *amplitudes,
                              size_t len,
                              const struct CohIntegratorConfig *cfg,
                              double *rho11_out);

// Draw Poisson counts from a simulated trace; deterministic per seed.
enum CohStatus coh_synth_counts(const struct CohTrace *trace,
                                double scale,
                                double dwell,
                                uint64_t seed,
                                struct CohTrace **out);

// Tail-anchored scale factor between a measured and a simulated trace.
enum CohStatus coh_scale_factor(const struct CohTrace *measured,
                                const struct CohTrace *simulated,
                                double *out);

// Residual objective of one candidate against a measured trace;
// +INFINITY marks a degenerate (rejected) candidate.
enum CohStatus coh_objective(const struct CohTrace *measured,
                             const struct CohSystemParams *candidate,
                             double phase,
                             const struct CohIntegratorConfig *cfg,
                             double *sse_out);

// Fit (omega_r0, T2*, delta) to a measured trace. `summary.converged`
// reports the simplex criterion; a best-so-far summary is still written
// when false.
enum CohStatus coh_fit_trace(const struct CohTrace *measured,
                             const struct CohFitBounds *bounds,
                             double phase,
                             const struct CohIntegratorConfig *cfg,
                             struct CohFitSummary *summary);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COHERENCE_LAB_H */
