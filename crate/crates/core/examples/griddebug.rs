use coherence_lab::bloch::IntegratorConfig;
use coherence_lab::fit::{objective, FitBounds};
use coherence_lab::synth::{delay_trace, default_delay_grid, DelayTrace};
use coherence_lab::units::{fwhm_to_tau, wavenumber_to_angfreq, SystemParams};

fn main() {
    let tau_p = fwhm_to_tau(75.0).unwrap();
    let truth = SystemParams::new(0.03, 60.0, wavenumber_to_angfreq(80.0), tau_p).unwrap();
    let cfg = IntegratorConfig {
        step: 0.2,
        ..IntegratorConfig::default()
    };
    let sim = delay_trace(&truth, 0.0, &default_delay_grid(), &cfg).unwrap();
    let measured = DelayTrace::measured(
        sim.samples().iter().map(|&(d, v)| (d, 2000.0 * v)).collect(),
        0.0,
    )
    .unwrap();

    let bounds = FitBounds::with_tau_p(tau_p);
    let coarse = IntegratorConfig {
        step: 0.8,
        ..cfg
    };
    let lin = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
    };
    let mut cells: Vec<([f64; 3], f64)> = vec![];
    for &om in &lin(bounds.omega_r0.0, bounds.omega_r0.1, 12) {
        for &t2 in &lin(bounds.t2_star.0, bounds.t2_star.1, 12) {
            for &dcm in &lin(bounds.delta_cm.0, bounds.delta_cm.1, 8) {
                let p = SystemParams::new(om, t2, wavenumber_to_angfreq(dcm), tau_p).unwrap();
                let sse = objective(&measured, &p, 0.0, &coarse).unwrap();
                cells.push(([om, t2, dcm], sse));
            }
        }
    }
    cells.sort_by(|a, b| a.1.total_cmp(&b.1));
    println!("best 12 cells (omega, t2, delta_cm, sse):");
    for (x, sse) in cells.iter().take(12) {
        println!("  {:.4} {:6.1} {:6.1}  {:.4e}", x[0], x[1], x[2], sse);
    }
    // objective at truth for reference
    println!(
        "sse(truth, full step) = {:.4e}",
        objective(&measured, &truth, 0.0, &cfg).unwrap()
    );
    let near = SystemParams::new(0.0335, 65.5, wavenumber_to_angfreq(85.7), tau_p).unwrap();
    println!(
        "sse(near-truth cell, coarse) = {:.4e}",
        objective(&measured, &near, 0.0, &coarse).unwrap()
    );
}
