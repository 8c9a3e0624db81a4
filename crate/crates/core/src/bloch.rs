//! Numerical integration of the optical Bloch equations in the rotating-wave
//! approximation, driven by a phase-locked Gaussian double pulse.
//!
//! The equations of motion for the Bloch vector (u, v, w) with complex drive
//! Ω(t), detuning δ and pure dephasing rate 1/T2* are
//!
//! ```text
//! du/dt = −δ·v − u/T2* + Im(Ω)·w
//! dv/dt = +δ·u − Re(Ω)·w − v/T2*
//! dw/dt = Re(Ω)·v − Im(Ω)·u
//! ```
//!
//! i.e. a rigid rotation about the axis (Re Ω, Im Ω, δ) plus isotropic
//! shrinking of the transverse components. Population relaxation (T1) is not
//! modelled. Integration is classical fixed-step RK4 from the ground state.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{BlochState, PulseProgram, SystemParams};

/// Complex double-pulse drive envelope,
/// Ω(t) = ω_R0·[exp(−t²/(2τ_p²)) + exp(i·Δφ)·exp(−(t−Δt)²/(2τ_p²))].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveEnvelope {
    pub omega_r0: f64,
    pub tau_p: f64,
    pub delay: f64,
    pub phase: f64,
}

impl DriveEnvelope {
    pub fn new(params: &SystemParams, prog: &PulseProgram) -> Self {
        Self {
            omega_r0: params.omega_r0,
            tau_p: params.tau_p,
            delay: prog.delay,
            phase: prog.phase,
        }
    }
}

/// Unit-amplitude complex envelope shape; `drive_at` scales it by ω_R0.
#[inline]
fn unit_shape(tau_p: f64, delay: f64, phase: f64, t: f64) -> Complex64 {
    let inv2t2 = 1.0 / (2.0 * tau_p * tau_p);
    let g1 = (-t * t * inv2t2).exp();
    let dt = t - delay;
    let g2 = (-dt * dt * inv2t2).exp();
    Complex64::new(g1 + phase.cos() * g2, phase.sin() * g2)
}

/// Evaluate the complex drive amplitude Ω(t) in rad/fs.
pub fn drive_at(env: &DriveEnvelope, t: f64) -> Complex64 {
    unit_shape(env.tau_p, env.delay, env.phase, t) * env.omega_r0
}

/// Fixed-step integration policy.
///
/// The window runs from `start_offset·τ_p` before the first pulse peak to the
/// readout time set by the [`PulseProgram`]. `readout_offset` here is the
/// default stamped onto programs built by trace-level operations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// RK4 step, fs.
    pub step: f64,
    /// Multiple of τ_p before the first pulse peak at which integration starts.
    pub start_offset: f64,
    /// Default readout offset (multiple of τ_p after the delayed pulse peak).
    pub readout_offset: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            step: 0.05,
            start_offset: 4.0,
            readout_offset: 3.0,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::Domain(format!(
                "step must be finite and > 0, got {}",
                self.step
            )));
        }
        if !(self.start_offset >= 4.0) {
            return Err(Error::Domain(format!(
                "start_offset must be >= 4, got {}",
                self.start_offset
            )));
        }
        if !(self.readout_offset >= 3.0) {
            return Err(Error::Domain(format!(
                "readout_offset must be >= 3, got {}",
                self.readout_offset
            )));
        }
        Ok(())
    }
}

/// Time derivative of the Bloch vector for drive amplitude `omega`.
pub fn rhs(state: &BlochState, omega: Complex64, params: &SystemParams) -> BlochState {
    let gamma = if params.t2_star.is_finite() {
        1.0 / params.t2_star
    } else {
        0.0
    };
    rhs_raw(state, omega, params.delta, gamma)
}

#[inline]
fn rhs_raw(s: &BlochState, omega: Complex64, delta: f64, gamma: f64) -> BlochState {
    BlochState {
        u: -delta * s.v - s.u * gamma + omega.im * s.w,
        v: delta * s.u - omega.re * s.w - s.v * gamma,
        w: omega.re * s.v - omega.im * s.u,
    }
}

/// Pre-sampled unit-amplitude envelope over one integration window.
///
/// Holds the shape at every RK4 node and midpoint so that repeated
/// integrations with different (ω_R0, T2*, δ) — the fit's inner loop — never
/// re-evaluate Gaussians. Scaling by ω_R0 at use time reproduces `drive_at`
/// bit for bit.
#[derive(Debug, Clone)]
pub struct ShapeTable {
    t_start: f64,
    t_end: f64,
    step: f64,
    n_steps: usize,
    /// `2·n_steps + 1` samples: index 2k is node k, 2k+1 the midpoint of step k.
    nodes: Vec<Complex64>,
}

impl ShapeTable {
    /// Sample the envelope of `prog` over the window implied by `cfg`.
    pub fn new(tau_p: f64, prog: &PulseProgram, cfg: &IntegratorConfig) -> Self {
        let t_start = -cfg.start_offset * tau_p;
        let t_end = prog.delay + prog.readout_offset * tau_p;
        let span = t_end - t_start;
        let n_steps = ((span / cfg.step - 1e-9).ceil() as usize).max(1);
        let mut nodes = Vec::with_capacity(2 * n_steps + 1);
        for k in 0..n_steps {
            let t = t_start + k as f64 * cfg.step;
            let h = step_size(t_start, t_end, cfg.step, n_steps, k);
            nodes.push(unit_shape(tau_p, prog.delay, prog.phase, t));
            nodes.push(unit_shape(tau_p, prog.delay, prog.phase, t + 0.5 * h));
        }
        nodes.push(unit_shape(tau_p, prog.delay, prog.phase, t_end));
        Self {
            t_start,
            t_end,
            step: cfg.step,
            n_steps,
            nodes,
        }
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
}

/// Size of step `k`; every step is `step` except the last, which lands
/// exactly on the window end.
#[inline]
fn step_size(t_start: f64, t_end: f64, step: f64, n_steps: usize, k: usize) -> f64 {
    if k + 1 == n_steps {
        t_end - (t_start + (n_steps - 1) as f64 * step)
    } else {
        step
    }
}

/// RK4 sweep over a pre-sampled window, reporting each accepted state.
fn integrate<F: FnMut(f64, BlochState)>(
    params: &SystemParams,
    table: &ShapeTable,
    mut on_sample: F,
) -> BlochState {
    let gamma = if params.t2_star.is_finite() {
        1.0 / params.t2_star
    } else {
        0.0
    };
    let delta = params.delta;
    let amp = params.omega_r0;

    let mut s = BlochState::ground();
    on_sample(table.t_start, s);
    for k in 0..table.n_steps {
        let h = step_size(table.t_start, table.t_end, table.step, table.n_steps, k);
        let half = 0.5 * h;
        let w0 = table.nodes[2 * k] * amp;
        let wm = table.nodes[2 * k + 1] * amp;
        let w1 = table.nodes[2 * k + 2] * amp;

        let k1 = rhs_raw(&s, w0, delta, gamma);
        let s2 = BlochState::new(s.u + half * k1.u, s.v + half * k1.v, s.w + half * k1.w);
        let k2 = rhs_raw(&s2, wm, delta, gamma);
        let s3 = BlochState::new(s.u + half * k2.u, s.v + half * k2.v, s.w + half * k2.w);
        let k3 = rhs_raw(&s3, wm, delta, gamma);
        let s4 = BlochState::new(s.u + h * k3.u, s.v + h * k3.v, s.w + h * k3.w);
        let k4 = rhs_raw(&s4, w1, delta, gamma);

        let sixth = h / 6.0;
        s = BlochState::new(
            s.u + sixth * (k1.u + 2.0 * k2.u + 2.0 * k3.u + k4.u),
            s.v + sixth * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v),
            s.w + sixth * (k1.w + 2.0 * k2.w + 2.0 * k3.w + k4.w),
        );
        let t_next = if k + 1 == table.n_steps {
            table.t_end
        } else {
            table.t_start + (k + 1) as f64 * table.step
        };
        on_sample(t_next, s);
    }
    s
}

fn check_run(params: &SystemParams, prog: &PulseProgram, cfg: &IntegratorConfig) -> Result<()> {
    params.validate()?;
    prog.validate()?;
    cfg.validate()?;
    if cfg.step >= params.tau_p / 4.0 {
        return Err(Error::UnderResolved {
            step: cfg.step,
            tau_p: params.tau_p,
        });
    }
    Ok(())
}

/// Integrate from the ground state and return the state at the readout time.
pub fn evolve(params: &SystemParams, prog: &PulseProgram, cfg: &IntegratorConfig) -> Result<BlochState> {
    check_run(params, prog, cfg)?;
    let table = ShapeTable::new(params.tau_p, prog, cfg);
    Ok(integrate(params, &table, |_, _| {}))
}

/// As [`evolve`], but against an externally cached [`ShapeTable`].
///
/// The table must have been built for the same τ_p, delay, phase and config;
/// only ω_R0, T2* and δ may vary between calls.
pub fn evolve_shaped(params: &SystemParams, table: &ShapeTable) -> BlochState {
    integrate(params, table, |_, _| {})
}

/// Full sampled trajectory over the integration window.
///
/// The final sample equals the result of [`evolve`] bit for bit.
pub fn trajectory(
    params: &SystemParams,
    prog: &PulseProgram,
    cfg: &IntegratorConfig,
) -> Result<Vec<(f64, BlochState)>> {
    check_run(params, prog, cfg)?;
    let table = ShapeTable::new(params.tau_p, prog, cfg);
    let mut samples = Vec::with_capacity(table.n_steps + 1);
    integrate(params, &table, |t, s| samples.push((t, s)));
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const TAU_P: f64 = 31.849;

    fn params(omega_r0: f64, t2_star: f64, delta: f64) -> SystemParams {
        SystemParams::new(omega_r0, t2_star, delta, TAU_P).unwrap()
    }

    use crate::testutil::reference_integrate;

    #[test]
    fn drive_coincident_peaks_add() {
        let env = DriveEnvelope {
            omega_r0: 0.03,
            tau_p: TAU_P,
            delay: 0.0,
            phase: 0.0,
        };
        let om = drive_at(&env, 0.0);
        assert_relative_eq!(om.re, 0.06, max_relative = 1e-15);
        assert_eq!(om.im, 0.0);
    }

    #[test]
    fn drive_pi_phase_cancels_at_zero_delay() {
        let env = DriveEnvelope {
            omega_r0: 0.05,
            tau_p: TAU_P,
            delay: 0.0,
            phase: PI,
        };
        for &t in &[-50.0, 0.0, 13.7, 200.0] {
            let om = drive_at(&env, t);
            assert!(om.norm() < 1e-15, "|omega({t})| = {}", om.norm());
        }
    }

    #[test]
    fn drive_distant_second_pulse_negligible() {
        let env = DriveEnvelope {
            omega_r0: 0.03,
            tau_p: TAU_P,
            delay: 600.0,
            phase: PI,
        };
        let om = drive_at(&env, 0.0);
        assert!((om - Complex64::new(0.03, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rhs_ground_state_is_stationary_without_drive() {
        let d = rhs(
            &BlochState::ground(),
            Complex64::new(0.0, 0.0),
            &params(0.0, 50.0, 0.0),
        );
        assert_eq!((d.u, d.v, d.w), (0.0, 0.0, 0.0));
    }

    #[test]
    fn rhs_pure_coherence_decays_at_dephasing_rate() {
        let d = rhs(
            &BlochState::new(1.0, 0.0, 0.0),
            Complex64::new(0.0, 0.0),
            &params(0.0, 50.0, 0.0),
        );
        assert_relative_eq!(d.u, -0.02, max_relative = 1e-15);
        assert_eq!(d.v, 0.0);
        assert_eq!(d.w, 0.0);
    }

    #[test]
    fn rhs_real_drive_tips_ground_state_along_v() {
        // Symbolic substitution: u̇ = 0, v̇ = −Ω·w = +Ω, ẇ = Ω·v = 0.
        let d = rhs(
            &BlochState::ground(),
            Complex64::new(0.06, 0.0),
            &params(0.06, f64::INFINITY, 0.0),
        );
        assert_eq!(d.u, 0.0);
        assert_relative_eq!(d.v, 0.06, max_relative = 1e-15);
        assert_eq!(d.w, 0.0);
    }

    #[test]
    fn rhs_infinite_t2_drops_decay_term() {
        let d = rhs(
            &BlochState::new(0.3, -0.2, 0.1),
            Complex64::new(0.0, 0.0),
            &params(0.0, f64::INFINITY, 0.0),
        );
        assert_eq!((d.u, d.v, d.w), (0.0, 0.0, 0.0));
    }

    #[test]
    fn evolve_without_drive_stays_in_ground_state() {
        let s = evolve(
            &params(0.0, 40.0, 0.0),
            &PulseProgram::new(300.0, 0.0).unwrap(),
            &IntegratorConfig::default(),
        )
        .unwrap();
        assert_eq!((s.u, s.v, s.w), (0.0, 0.0, -1.0));
    }

    #[test]
    fn evolve_pi_pulse_inverts_population() {
        // Doubled coincident pulses with total area π; wide window so that
        // envelope truncation stays below the 1e-6 tolerance.
        let omega = PI / (2.0 * (2.0 * PI).sqrt() * TAU_P);
        let cfg = IntegratorConfig {
            step: 0.05,
            start_offset: 8.0,
            readout_offset: 8.0,
        };
        let prog = PulseProgram::with_readout_offset(0.0, 0.0, 8.0).unwrap();
        let s = evolve(&params(omega, f64::INFINITY, 0.0), &prog, &cfg).unwrap();
        assert!((s.rho11() - 1.0).abs() < 1e-6, "rho11 = {}", s.rho11());
        assert!((s.w - 1.0).abs() < 2e-6);
    }

    #[test]
    fn evolve_rejects_under_resolved_step() {
        let cfg = IntegratorConfig {
            step: TAU_P / 4.0,
            ..IntegratorConfig::default()
        };
        let err = evolve(
            &params(0.01, 40.0, 0.0),
            &PulseProgram::new(0.0, 0.0).unwrap(),
            &cfg,
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnderResolved { .. }));
    }

    #[test]
    fn evolve_fig2a_regime_decays_with_delay() {
        // Low drive, 40 fs dephasing: the delayed readout population drops.
        let p = params(0.01, 40.0, 0.0);
        let cfg = IntegratorConfig::default();
        let at = |delay: f64| {
            evolve(&p, &PulseProgram::new(delay, 0.0).unwrap(), &cfg)
                .unwrap()
                .rho11()
        };
        let (r0, r600) = (at(0.0), at(600.0));
        assert!(r0 > r600, "rho11(0)={r0} rho11(600)={r600}");
        // Cross-check both against the independent half-step integrator.
        for (delay, got) in [(0.0, r0), (600.0, r600)] {
            let reference = reference_integrate(
                &p,
                &PulseProgram::new(delay, 0.0).unwrap(),
                cfg.start_offset,
                cfg.step / 2.0,
                BlochState::ground(),
                None,
            );
            assert!((got - reference.rho11()).abs() < 1e-9);
        }
    }

    #[test]
    fn trajectory_final_sample_matches_evolve_bitwise() {
        let p = params(0.035, 50.0, 0.01);
        let prog = PulseProgram::new(120.0, PI).unwrap();
        let cfg = IntegratorConfig::default();
        let traj = trajectory(&p, &prog, &cfg).unwrap();
        let end = evolve(&p, &prog, &cfg).unwrap();
        let (t_last, s_last) = *traj.last().unwrap();
        assert_eq!(t_last, prog.delay + prog.readout_offset * p.tau_p);
        assert_eq!(s_last, end);
    }

    #[test]
    fn trajectory_without_drive_is_constant() {
        let traj = trajectory(
            &params(0.0, 40.0, 0.0),
            &PulseProgram::new(50.0, 0.0).unwrap(),
            &IntegratorConfig::default(),
        )
        .unwrap();
        assert!(traj.iter().all(|(_, s)| *s == BlochState::ground()));
    }

    #[test]
    fn real_drive_confines_rotation_to_vw_plane() {
        let traj = trajectory(
            &params(0.03, f64::INFINITY, 0.0),
            &PulseProgram::new(200.0, 0.0).unwrap(),
            &IntegratorConfig::default(),
        )
        .unwrap();
        assert!(traj.iter().all(|(_, s)| s.u == 0.0));
    }

    #[test]
    fn high_drive_trajectory_sweeps_a_full_nutation_cycle() {
        // Strong-drive regime at zero delay: coincident pulses, area ≈ 3π.
        let traj = trajectory(
            &params(0.06, 40.0, 0.0),
            &PulseProgram::new(0.0, 0.0).unwrap(),
            &IntegratorConfig::default(),
        )
        .unwrap();
        let mut swept = 0.0;
        let mut prev = f64::atan2(traj[0].1.w, traj[0].1.v);
        for (_, s) in &traj[1..] {
            if (s.v * s.v + s.w * s.w).sqrt() < 1e-6 {
                continue;
            }
            let ang = f64::atan2(s.w, s.v);
            let mut d = ang - prev;
            while d > PI {
                d -= 2.0 * PI;
            }
            while d < -PI {
                d += 2.0 * PI;
            }
            swept += d.abs();
            prev = ang;
        }
        assert!(swept >= 2.0 * PI, "swept only {swept} rad");
    }

    #[test]
    fn shape_table_matches_direct_drive_evaluation() {
        let p = params(0.02, 60.0, 0.005);
        let prog = PulseProgram::new(77.0, 1.3).unwrap();
        let cfg = IntegratorConfig::default();
        let table = ShapeTable::new(p.tau_p, &prog, &cfg);
        let env = DriveEnvelope::new(&p, &prog);
        for k in [0usize, 1, 100, 2 * table.n_steps()] {
            let t = if k == 2 * table.n_steps() {
                table.t_end()
            } else if k % 2 == 0 {
                table.t_start() + (k / 2) as f64 * cfg.step
            } else {
                table.t_start() + (k / 2) as f64 * cfg.step + 0.5 * cfg.step
            };
            assert_eq!(table.nodes[k] * p.omega_r0, drive_at(&env, t));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn drive_magnitude_bounded_by_twice_peak(
            omega in 0.0f64..0.12,
            delay in 0.0f64..600.0,
            phase in 0.0f64..(2.0 * PI),
            t in -200.0f64..800.0,
        ) {
            let env = DriveEnvelope { omega_r0: omega, tau_p: TAU_P, delay, phase };
            prop_assert!(drive_at(&env, t).norm() <= 2.0 * omega + 1e-12);
        }
    }
}
