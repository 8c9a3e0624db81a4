use std::time::Instant;

use coherence_lab::bloch::IntegratorConfig;
use coherence_lab::fit::{fit_trace, FitBounds};
use coherence_lab::synth::{delay_trace, default_delay_grid, DelayTrace};
use coherence_lab::units::{fwhm_to_tau, wavenumber_to_angfreq, SystemParams};

fn main() {
    let tau_p = fwhm_to_tau(75.0).unwrap();
    let truth = SystemParams::new(0.03, 60.0, wavenumber_to_angfreq(80.0), tau_p).unwrap();
    let cfg = IntegratorConfig::default();
    let sim = delay_trace(&truth, 0.0, &default_delay_grid(), &cfg).unwrap();
    let measured = DelayTrace::measured(
        sim.samples().iter().map(|&(d, v)| (d, 2000.0 * v)).collect(),
        0.0,
    )
    .unwrap();

    let start = Instant::now();
    let fit = fit_trace(&measured, &FitBounds::with_tau_p(tau_p), 0.0, &cfg).unwrap();
    let elapsed = start.elapsed();
    let delta_cm = fit.params.delta / wavenumber_to_angfreq(1.0);
    println!(
        "fit in {:.2?}: omega={:.6} t2={:.3} delta_cm={:.3} sse={:.3e} evals={} converged={}",
        elapsed, fit.params.omega_r0, fit.params.t2_star, delta_cm, fit.sse, fit.n_evals, fit.converged
    );
    println!(
        "errors: omega {:.3}% t2 {:.3}% delta {:.2} cm",
        100.0 * (fit.params.omega_r0 - 0.03).abs() / 0.03,
        100.0 * (fit.params.t2_star - 60.0).abs() / 60.0,
        (delta_cm - 80.0).abs()
    );
}
