//! Oracles for the acceptance suite, independent of the library's
//! integration path: the drive envelope is evaluated from its definition and
//! the stepping scheme differs from the production integrator.

use coherence_lab::units::{BlochState, SystemParams};
use num_complex::Complex64;

/// Reference half-step RK4 with direct envelope evaluation.
#[allow(dead_code)]
pub fn reference_readout(
    p: &SystemParams,
    delay: f64,
    phase: f64,
    start_offset: f64,
    readout_offset: f64,
    step: f64,
) -> BlochState {
    let gamma = if p.t2_star.is_finite() {
        1.0 / p.t2_star
    } else {
        0.0
    };
    let envelope = |t: f64| -> Complex64 {
        let inv = 1.0 / (2.0 * p.tau_p * p.tau_p);
        let g1 = (-t * t * inv).exp();
        let g2 = (-(t - delay) * (t - delay) * inv).exp();
        p.omega_r0 * (Complex64::new(g1, 0.0) + Complex64::from_polar(g2, phase))
    };
    let f = |s: &BlochState, om: Complex64| -> BlochState {
        BlochState::new(
            -p.delta * s.v - gamma * s.u + om.im * s.w,
            p.delta * s.u - om.re * s.w - gamma * s.v,
            om.re * s.v - om.im * s.u,
        )
    };
    let t0 = -start_offset * p.tau_p;
    let t1 = delay + readout_offset * p.tau_p;
    let n = ((t1 - t0) / step).ceil() as usize;
    let h = (t1 - t0) / n as f64;
    let mut s = BlochState::ground();
    for k in 0..n {
        let t = t0 + k as f64 * h;
        let (w0, wm, w1) = (envelope(t), envelope(t + 0.5 * h), envelope(t + h));
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

/// Two-sample Kolmogorov–Smirnov statistic.
#[allow(dead_code)]
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        let fa = i as f64 / a.len() as f64;
        let fb = j as f64 / b.len() as f64;
        d = d.max((fa - fb).abs());
    }
    d
}

/// KS critical value at the 5% level for two samples of sizes n and m.
#[allow(dead_code)]
pub fn ks_critical_5pct(n: usize, m: usize) -> f64 {
    1.358 * (((n + m) as f64) / ((n * m) as f64)).sqrt()
}
