//! C ABI for the coherence-lab simulator and fitter.
//!
//! Conventions: plain-old-data parameter structs are passed by pointer,
//! traces and trajectories are opaque handles with accessor functions, and
//! every fallible call returns a [`CohStatus`] code. A textual diagnostic for
//! the most recent failure on the current thread is available from
//! [`coh_last_error_message`]. All functions are panic-safe.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use coherence_lab::bloch::{evolve, trajectory, IntegratorConfig};
use coherence_lab::error::Error;
use coherence_lab::fit::{fit_trace, objective, scale_factor, FitBounds};
use coherence_lab::synth::{
    coherence_trace, delay_trace, rabi_curve, synth_counts, DelayTrace, NoiseModel, TraceKind,
};
use coherence_lab::units::{
    fwhm_to_tau, linewidth_to_min_dephasing, pulse_area, wavenumber_to_angfreq, BlochState,
    PulseProgram, SystemParams,
};

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CohStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidGrid = 3,
    InvalidTrace = 4,
    DegenerateScale = 5,
    Unfittable = 6,
    IoError = 7,
    Panic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> CohStatus {
    match err {
        Error::Domain(_) | Error::UnderResolved { .. } => CohStatus::InvalidArgument,
        Error::Grid(_) => CohStatus::InvalidGrid,
        Error::Trace(_) => CohStatus::InvalidTrace,
        Error::DegenerateScale(_) => CohStatus::DegenerateScale,
        Error::Unfittable(_) => CohStatus::Unfittable,
        _ => CohStatus::IoError,
    }
}

fn fail(err: &Error) -> CohStatus {
    set_last_error(&err.to_string());
    status_of(err)
}

/// Run a fallible body with panic containment.
fn guarded<F: FnOnce() -> CohStatus>(body: F) -> CohStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_last_error("internal panic");
            CohStatus::Panic
        }
    }
}

/// Diagnostic text for the most recent failure on this thread, or NULL.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn coh_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn coh_status_message(status: CohStatus) -> *const c_char {
    let text: &'static [u8] = match status {
        CohStatus::Ok => b"ok\0",
        CohStatus::NullPointer => b"null pointer argument\0",
        CohStatus::InvalidArgument => b"invalid argument\0",
        CohStatus::InvalidGrid => b"invalid grid\0",
        CohStatus::InvalidTrace => b"invalid trace\0",
        CohStatus::DegenerateScale => b"degenerate scale\0",
        CohStatus::Unfittable => b"unfittable trace\0",
        CohStatus::IoError => b"i/o error\0",
        CohStatus::Panic => b"internal panic\0",
    };
    text.as_ptr() as *const c_char
}

/// Physical parameters of one molecule plus its drive.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CohSystemParams {
    /// Maximum Rabi frequency, rad/fs.
    pub omega_r0: f64,
    /// Pure dephasing time, fs; use INFINITY for no dephasing.
    pub t2_star: f64,
    /// Detuning, rad/fs.
    pub delta: f64,
    /// Gaussian envelope width parameter, fs.
    pub tau_p: f64,
}

/// The two-pulse sequence and readout rule.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CohPulseProgram {
    /// Inter-pulse delay, fs.
    pub delay: f64,
    /// Relative carrier phase, rad.
    pub phase: f64,
    /// Readout, multiples of tau_p after the delayed pulse peak (>= 3).
    pub readout_offset: f64,
}

/// Fixed-step integration policy.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CohIntegratorConfig {
    pub step: f64,
    pub start_offset: f64,
    pub readout_offset: f64,
}

/// Bloch vector components.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CohBlochState {
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

/// Search region for the fit; delta bounds are in cm^-1.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CohFitBounds {
    pub omega_r0_lo: f64,
    pub omega_r0_hi: f64,
    pub t2_star_lo: f64,
    pub t2_star_hi: f64,
    pub delta_cm_lo: f64,
    pub delta_cm_hi: f64,
    pub tau_p: f64,
}

/// Best-fit parameters and diagnostics.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CohFitSummary {
    pub omega_r0: f64,
    pub t2_star: f64,
    pub delta: f64,
    pub delta_cm: f64,
    pub scale: f64,
    pub sse: f64,
    pub n_evals: u64,
    pub converged: bool,
}

/// Opaque delay trace handle.
pub struct CohTrace {
    inner: DelayTrace,
}

/// Opaque Bloch-vector trajectory handle.
pub struct CohTrajectory {
    samples: Vec<(f64, BlochState)>,
}

impl CohSystemParams {
    fn to_params(self) -> Result<SystemParams, Error> {
        SystemParams::new(self.omega_r0, self.t2_star, self.delta, self.tau_p)
    }
}

impl CohPulseProgram {
    fn to_program(self) -> Result<PulseProgram, Error> {
        PulseProgram::with_readout_offset(self.delay, self.phase, self.readout_offset)
    }
}

impl CohIntegratorConfig {
    fn to_config(self) -> IntegratorConfig {
        IntegratorConfig {
            step: self.step,
            start_offset: self.start_offset,
            readout_offset: self.readout_offset,
        }
    }
}

impl CohFitBounds {
    fn to_bounds(self) -> FitBounds {
        FitBounds {
            omega_r0: (self.omega_r0_lo, self.omega_r0_hi),
            t2_star: (self.t2_star_lo, self.t2_star_hi),
            delta_cm: (self.delta_cm_lo, self.delta_cm_hi),
            tau_p: self.tau_p,
        }
    }
}

/// Default integration policy (0.05 fs step, window offsets 4 and 3).
#[no_mangle]
pub extern "C" fn coh_default_config() -> CohIntegratorConfig {
    let cfg = IntegratorConfig::default();
    CohIntegratorConfig {
        step: cfg.step,
        start_offset: cfg.start_offset,
        readout_offset: cfg.readout_offset,
    }
}

/// Default fit bounds for a given envelope width.
#[no_mangle]
pub extern "C" fn coh_default_bounds(tau_p: f64) -> CohFitBounds {
    let b = FitBounds::with_tau_p(tau_p);
    CohFitBounds {
        omega_r0_lo: b.omega_r0.0,
        omega_r0_hi: b.omega_r0.1,
        t2_star_lo: b.t2_star.0,
        t2_star_hi: b.t2_star.1,
        delta_cm_lo: b.delta_cm.0,
        delta_cm_hi: b.delta_cm.1,
        tau_p: b.tau_p,
    }
}

/// Convert a wavenumber in cm^-1 to an angular frequency in rad/fs.
#[no_mangle]
pub extern "C" fn coh_wavenumber_to_angfreq(nu_tilde: f64) -> f64 {
    wavenumber_to_angfreq(nu_tilde)
}

/// Single-pulse area sqrt(2*pi) * omega_r0 * tau_p, rad.
#[no_mangle]
pub extern "C" fn coh_pulse_area(omega_r0: f64, tau_p: f64) -> f64 {
    pulse_area(omega_r0, tau_p)
}

/// Field-envelope FWHM (fs) to Gaussian width parameter tau_p (fs).
#[no_mangle]
pub extern "C" fn coh_fwhm_to_tau(fwhm: f64, out: *mut f64) -> CohStatus {
    guarded(|| {
        if out.is_null() {
            return CohStatus::NullPointer;
        }
        match fwhm_to_tau(fwhm) {
            Ok(tau) => {
                unsafe { *out = tau };
                CohStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Lower bound on T2* (fs) implied by a Lorentzian line width (FWHM, cm^-1).
#[no_mangle]
pub extern "C" fn coh_linewidth_to_min_dephasing(
    fwhm_wavenumber: f64,
    out: *mut f64,
) -> CohStatus {
    guarded(|| {
        if out.is_null() {
            return CohStatus::NullPointer;
        }
        match linewidth_to_min_dephasing(fwhm_wavenumber) {
            Ok(t2) => {
                unsafe { *out = t2 };
                CohStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Integrate the Bloch equations and return the state at readout.
#[no_mangle]
pub extern "C" fn coh_evolve(
    params: *const CohSystemParams,
    prog: *const CohPulseProgram,
    cfg: *const CohIntegratorConfig,
    out: *mut CohBlochState,
) -> CohStatus {
    guarded(|| {
        if params.is_null() || prog.is_null() || cfg.is_null() || out.is_null() {
            return CohStatus::NullPointer;
        }
        let (params, prog, cfg) = unsafe { (*params, *prog, *cfg) };
        let p = match params.to_params() {
            Ok(p) => p,
            Err(e) => return fail(&e),
        };
        let program = match prog.to_program() {
            Ok(p) => p,
            Err(e) => return fail(&e),
        };
        match evolve(&p, &program, &cfg.to_config()) {
            Ok(s) => {
                unsafe {
                    *out = CohBlochState {
                        u: s.u,
                        v: s.v,
                        w: s.w,
                    }
                };
                CohStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Compute the full trajectory; free with `coh_trajectory_free`.
#[no_mangle]
pub extern "C" fn coh_trajectory_run(
    params: *const CohSystemParams,
    prog: *const CohPulseProgram,
    cfg: *const CohIntegratorConfig,
    out: *mut *mut CohTrajectory,
) -> CohStatus {
    guarded(|| {
        if params.is_null() || prog.is_null() || cfg.is_null() || out.is_null() {
            return CohStatus::NullPointer;
        }
        let (params, prog, cfg) = unsafe { (*params, *prog, *cfg) };
        let p = match params.to_params() {
            Ok(p) => p,
            Err(e) => return fail(&e),
        };
        let program = match prog.to_program() {
            Ok(p) => p,
            Err(e) => return fail(&e),
        };
        match trajectory(&p, &program, &cfg.to_config()) {
            Ok(samples) => {
                let boxed = Box::new(CohTrajectory { samples });
                unsafe { *out = Box::into_raw(boxed) };
                CohStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

#[no_mangle]
pub extern "C" fn coh_trajectory_len(traj: *const CohTrajectory) -> usize {
    if traj.is_null() {
        return 0;
    }
    unsafe { &*traj }.samples.len()
}

/// Fetch sample `idx` of a trajectory.
#[no_mangle]
pub extern "C" fn coh_trajectory_get(
    traj: *const CohTrajectory,
    idx: usize,
    t_out: *mut f64,
    state_out: *mut CohBlochState,
) -> CohStatus {
    if traj.is_null() || t_out.is_null() || state_out.is_null() {
        return CohStatus::NullPointer;
    }
    let samples = &unsafe { &*traj }.samples;
    match samples.get(idx) {
        Some(&(t, s)) => {
            unsafe {
                *t_out = t;
                *state_out = CohBlochState {
                    u: s.u,
                    v: s.v,
                    w: s.w,
                };
            }
            CohStatus::Ok
        }
        None => {
            set_last_error("trajectory index out of range");
            CohStatus::InvalidArgument
        }
    }
}

/// # Safety
/// `traj` must come from `coh_trajectory_run` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn coh_trajectory_free(traj: *mut CohTrajectory) {
    if !traj.is_null() {
        drop(unsafe { Box::from_raw(traj) });
    }
}

fn build_trace(
    delays: *const f64,
    values: *const f64,
    len: usize,
    phase: f64,
    kind: TraceKind,
    out: *mut *mut CohTrace,
) -> CohStatus {
    if delays.is_null() || values.is_null() || out.is_null() {
        return CohStatus::NullPointer;
    }
    let delays = unsafe { std::slice::from_raw_parts(delays, len) };
    let values = unsafe { std::slice::from_raw_parts(values, len) };
    let samples: Vec<(f64, f64)> = delays.iter().copied().zip(values.iter().copied()).collect();
    let trace = match kind {
        TraceKind::Measured => DelayTrace::measured(samples, phase),
        TraceKind::Simulated => DelayTrace::simulated(samples, phase),
    };
    match trace {
        Ok(t) => {
            unsafe { *out = Box::into_raw(Box::new(CohTrace { inner: t })) };
            CohStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Build a measured (counts/s) trace from parallel arrays.
#[no_mangle]
pub extern "C" fn coh_trace_measured(
    delays: *const f64,
    values: *const f64,
    len: usize,
    phase: f64,
    out: *mut *mut CohTrace,
) -> CohStatus {
    guarded(|| build_trace(delays, values, len, phase, TraceKind::Measured, out))
}

/// Build a simulated (dimensionless) trace from parallel arrays.
#[no_mangle]
pub extern "C" fn coh_trace_simulated(
    delays: *const f64,
    values: *const f64,
    len: usize,
    phase: f64,
    out: *mut *mut CohTrace,
) -> CohStatus {
    guarded(|| build_trace(delays, values, len, phase, TraceKind::Simulated, out))
}

#[no_mangle]
pub extern "C" fn coh_trace_len(trace: *const CohTrace) -> usize {
    if trace.is_null() {
        return 0;
    }
    unsafe { &*trace }.inner.len()
}

#[no_mangle]
pub extern "C" fn coh_trace_phase(trace: *const CohTrace) -> f64 {
    if trace.is_null() {
        return f64::NAN;
    }
    unsafe { &*trace }.inner.phase
}

/// Fetch sample `idx` of a trace.
#[no_mangle]
pub extern "C" fn coh_trace_get(
    trace: *const CohTrace,
    idx: usize,
    delay_out: *mut f64,
    value_out: *mut f64,
) -> CohStatus {
    if trace.is_null() || delay_out.is_null() || value_out.is_null() {
        return CohStatus::NullPointer;
    }
    match unsafe { &*trace }.inner.samples().get(idx) {
        Some(&(d, v)) => {
            unsafe {
                *delay_out = d;
                *value_out = v;
            }
            CohStatus::Ok
        }
        None => {
            set_last_error("trace index out of range");
            CohStatus::InvalidArgument
        }
    }
}

/// # Safety
/// `trace` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn coh_trace_free(trace: *mut CohTrace) {
    if !trace.is_null() {
        drop(unsafe { Box::from_raw(trace) });
    }
}

/// Simulate a population delay trace on the given grid.
#[no_mangle]
pub extern "C" fn coh_delay_trace(
    params: *const CohSystemParams,
    phase: f64,
    delays: *const f64,
    len: usize,
    cfg: *const CohIntegratorConfig,
    out: *mut *mut CohTrace,
) -> CohStatus {
    guarded(|| {
        if params.is_null() || delays.is_null() || cfg.is_null() || out.is_null() {
            return CohStatus::NullPointer;
        }
        let p = match unsafe { *params }.to_params() {
            Ok(p) => p,
            Err(e) => return fail(&e),
        };
        let delays = unsafe { std::slice::from_raw_parts(delays, len) };
        match delay_trace(&p, phase, delays, &unsafe { *cfg }.to_config()) {
            Ok(t) => {
                unsafe { *out = Box::into_raw(Box::new(CohTrace { inner: t })) };
                CohStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Simulate a coherence (v component) delay trace on the given grid.
#[no_mangle]
pub extern "C" fn coh_coherence_trace(
    params: *const CohSystemParams,
    phase: f64,
    delays: *const f64,
    len: usize,
    cfg: *const CohIntegratorConfig,
    out: *mut *mut CohTrace,
) -> CohStatus {
    guarded(|| {
        if params.is_null() || delays.is_null() || cfg.is_null() || out.is_null() {
            return CohStatus::NullPointer;
        }
        let p = match unsafe { *params }.to_params() {
            Ok(p) => p,
            Err(e) => return fail(&e),
        };
        let delays = unsafe { std::slice::from_raw_parts(delays, len) };
        match coherence_trace(&p, phase, delays, &unsafe { *cfg }.to_config()) {
            Ok(t) => {
                unsafe { *out = Box::into_raw(Box::new(CohTrace { inner: t })) };
                CohStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Rabi-flopping curve: fills `rho11_out[len]` with readout populations for
/// the given omega_r0 amplitudes at delay 0, phase 0.
#[no_mangle]
pub extern "C" fn coh_rabi_curve(
    tau_p: f64,
    t2_star: f64,
    delta: f64,
    amplitudes: *const f64,
    len: usize,
    cfg: *const CohIntegratorConfig,
    rho11_out: *mut f64,
) -> CohStatus {
    guarded(|| {
        if amplitudes.is_null() || cfg.is_null() || rho11_out.is_null() {
            return CohStatus::NullPointer;
        }
        let amps = unsafe { std::slice::from_raw_parts(amplitudes, len) };
        match rabi_curve(tau_p, t2_star, delta, amps, &unsafe { *cfg }.to_config()) {
            Ok(curve) => {
                let out = unsafe { std::slice::from_raw_parts_mut(rho11_out, len) };
                for (slot, (_, rho)) in out.iter_mut().zip(&curve) {
                    *slot = *rho;
                }
                CohStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Draw Poisson counts from a simulated trace; deterministic per seed.
#[no_mangle]
pub extern "C" fn coh_synth_counts(
    trace: *const CohTrace,
    scale: f64,
    dwell: f64,
    seed: u64,
    out: *mut *mut CohTrace,
) -> CohStatus {
    guarded(|| {
        if trace.is_null() || out.is_null() {
            return CohStatus::NullPointer;
        }
        let noise = match NoiseModel::new(scale, dwell, seed) {
            Ok(n) => n,
            Err(e) => return fail(&e),
        };
        match synth_counts(&unsafe { &*trace }.inner, &noise) {
            Ok(t) => {
                unsafe { *out = Box::into_raw(Box::new(CohTrace { inner: t })) };
                CohStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Tail-anchored scale factor between a measured and a simulated trace.
#[no_mangle]
pub extern "C" fn coh_scale_factor(
    measured: *const CohTrace,
    simulated: *const CohTrace,
    out: *mut f64,
) -> CohStatus {
    guarded(|| {
        if measured.is_null() || simulated.is_null() || out.is_null() {
            return CohStatus::NullPointer;
        }
        match scale_factor(&unsafe { &*measured }.inner, &unsafe { &*simulated }.inner) {
            Ok(s) => {
                unsafe { *out = s };
                CohStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Residual objective of one candidate against a measured trace;
/// +INFINITY marks a degenerate (rejected) candidate.
#[no_mangle]
pub extern "C" fn coh_objective(
    measured: *const CohTrace,
    candidate: *const CohSystemParams,
    phase: f64,
    cfg: *const CohIntegratorConfig,
    sse_out: *mut f64,
) -> CohStatus {
    guarded(|| {
        if measured.is_null() || candidate.is_null() || cfg.is_null() || sse_out.is_null() {
            return CohStatus::NullPointer;
        }
        let p = match unsafe { *candidate }.to_params() {
            Ok(p) => p,
            Err(e) => return fail(&e),
        };
        match objective(
            &unsafe { &*measured }.inner,
            &p,
            phase,
            &unsafe { *cfg }.to_config(),
        ) {
            Ok(sse) => {
                unsafe { *sse_out = sse };
                CohStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Fit (omega_r0, T2*, delta) to a measured trace. `summary.converged`
/// reports the simplex criterion; a best-so-far summary is still written
/// when false.
#[no_mangle]
pub extern "C" fn coh_fit_trace(
    measured: *const CohTrace,
    bounds: *const CohFitBounds,
    phase: f64,
    cfg: *const CohIntegratorConfig,
    summary: *mut CohFitSummary,
) -> CohStatus {
    guarded(|| {
        if measured.is_null() || bounds.is_null() || cfg.is_null() || summary.is_null() {
            return CohStatus::NullPointer;
        }
        let b = unsafe { *bounds }.to_bounds();
        match fit_trace(
            &unsafe { &*measured }.inner,
            &b,
            phase,
            &unsafe { *cfg }.to_config(),
        ) {
            Ok(fit) => {
                unsafe {
                    *summary = CohFitSummary {
                        omega_r0: fit.params.omega_r0,
                        t2_star: fit.params.t2_star,
                        delta: fit.params.delta,
                        delta_cm: fit.params.delta / wavenumber_to_angfreq(1.0),
                        scale: fit.scale,
                        sse: fit.sse,
                        n_evals: fit.n_evals,
                        converged: fit.converged,
                    }
                };
                CohStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}
