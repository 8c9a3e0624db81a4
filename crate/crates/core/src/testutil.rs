//! Test-only helpers shared across module tests.

use num_complex::Complex64;

use crate::bloch::{drive_at, DriveEnvelope};
use crate::units::{BlochState, PulseProgram, SystemParams};

/// Independent check integrator: direct drive evaluation, plain RK4
/// transcribed from the equations of motion, arbitrary initial state and an
/// optional amplitude scaling (0.5 with a coincident pair emulates a single
/// pulse). Kept separate from the production integrator on purpose.
pub(crate) fn reference_integrate(
    p: &SystemParams,
    prog: &PulseProgram,
    start_offset: f64,
    step: f64,
    init: BlochState,
    amp_scale: Option<f64>,
) -> BlochState {
    let env = DriveEnvelope {
        omega_r0: p.omega_r0 * amp_scale.unwrap_or(1.0),
        tau_p: p.tau_p,
        delay: prog.delay,
        phase: prog.phase,
    };
    let gamma = if p.t2_star.is_finite() {
        1.0 / p.t2_star
    } else {
        0.0
    };
    let f = |s: &BlochState, om: Complex64| -> BlochState {
        BlochState::new(
            -p.delta * s.v - gamma * s.u + om.im * s.w,
            p.delta * s.u - om.re * s.w - gamma * s.v,
            om.re * s.v - om.im * s.u,
        )
    };
    let t0 = -start_offset * p.tau_p;
    let t1 = prog.delay + prog.readout_offset * p.tau_p;
    let n = ((t1 - t0) / step).ceil() as usize;
    let h = (t1 - t0) / n as f64;
    let mut s = init;
    for k in 0..n {
        let t = t0 + k as f64 * h;
        let (w0, wm, w1) = (
            drive_at(&env, t),
            drive_at(&env, t + 0.5 * h),
            drive_at(&env, t + h),
        );
        let k1 = f(&s, w0);
        let k2 = f(
            &BlochState::new(
                s.u + 0.5 * h * k1.u,
                s.v + 0.5 * h * k1.v,
                s.w + 0.5 * h * k1.w,
            ),
            wm,
        );
        let k3 = f(
            &BlochState::new(
                s.u + 0.5 * h * k2.u,
                s.v + 0.5 * h * k2.v,
                s.w + 0.5 * h * k2.w,
            ),
            wm,
        );
        let k4 = f(
            &BlochState::new(s.u + h * k3.u, s.v + h * k3.v, s.w + h * k3.w),
            w1,
        );
        s = BlochState::new(
            s.u + h / 6.0 * (k1.u + 2.0 * k2.u + 2.0 * k3.u + k4.u),
            s.v + h / 6.0 * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v),
            s.w + h / 6.0 * (k1.w + 2.0 * k2.w + 2.0 * k3.w + k4.w),
        );
    }
    s
}
