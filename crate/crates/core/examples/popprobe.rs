use coherence_lab::bloch::IntegratorConfig;
use coherence_lab::fit::{batch_fit, t2_histogram, FitBounds};
use coherence_lab::synth::{default_delay_grid, delay_trace, synth_counts, NoiseModel};
use coherence_lab::units::{fwhm_to_tau, wavenumber_to_angfreq, SystemParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ks(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] { i += 1 } else { j += 1 }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

fn run(master_seed: u64, sigma: f64, scale: f64, noiseless: bool, fit_step: f64) {
    let tau_p = fwhm_to_tau(75.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    let gen_cfg = IntegratorConfig { step: 0.1, ..IntegratorConfig::default() };
    let mut generator_t2 = Vec::new();
    let mut traces = Vec::new();
    for seed in 0..53u64 {
        let t2 = loop {
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
            let normal = 60.0 + sigma * (-2.0 * u1.ln()).sqrt() * u2.cos();
            if (25.0..=110.0).contains(&normal) { break normal; }
        };
        generator_t2.push(t2);
        let p = SystemParams::new(
            rng.gen_range(0.02..0.05),
            t2,
            wavenumber_to_angfreq(rng.gen_range(0.0..100.0)),
            tau_p,
        ).unwrap();
        let sim = delay_trace(&p, 0.0, &default_delay_grid(), &gen_cfg).unwrap();
        if noiseless {
            traces.push(coherence_lab::synth::DelayTrace::measured(
                sim.samples().iter().map(|&(d, v)| (d, scale * v)).collect(), 0.0).unwrap());
        } else {
            let noise = NoiseModel::new(scale, 1.0, 1000 + seed).unwrap();
            traces.push(synth_counts(&sim, &noise).unwrap());
        }
    }
    let fit_cfg = IntegratorConfig { step: fit_step, ..IntegratorConfig::default() };
    let bounds = FitBounds::with_tau_p(tau_p);
    let results: Vec<_> = batch_fit(&traces, &bounds, &fit_cfg)
        .into_iter().map(|f| f.unwrap()).collect();
    let n_conv = results.iter().filter(|r| r.converged).count();
    let hist = t2_histogram(&results, 10.0).unwrap();
    let mut bins: Vec<(usize, u64)> = hist.counts.iter().copied().enumerate().collect();
    bins.sort_by_key(|&(_, c)| std::cmp::Reverse(c));
    let (mode, top) = bins[0];
    let runner_up = bins.get(1).map(|&(_, c)| c).unwrap_or(0);
    let fitted: Vec<f64> = results.iter().filter(|r| r.converged).map(|r| r.params.t2_star).collect();
    let d = ks(&generator_t2, &fitted);
    let mut errs: Vec<f64> = generator_t2.iter().zip(&results)
        .map(|(g, r)| (r.params.t2_star - g).abs() / g).collect();
    errs.sort_by(f64::total_cmp);
    println!(
        "seed={master_seed} sigma={sigma} scale={scale} noiseless={noiseless} step={fit_step}: \
         mode [{}, {}) count {} (runner-up {}), KS {:.3}, conv {}/53, t2err med {:.1}% p90 {:.1}% max {:.1}%",
        hist.edges[mode], hist.edges[mode + 1], top, runner_up, d, n_conv,
        100.0 * errs[26], 100.0 * errs[47], 100.0 * errs[52]
    );
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args[1].parse().unwrap();
    let sigma: f64 = args[2].parse().unwrap();
    let scale: f64 = args[3].parse().unwrap();
    let noiseless: bool = args.get(4).map(|s| s == "noiseless").unwrap_or(false);
    let fit_step: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(0.2);
    run(seed, sigma, scale, noiseless, fit_step);
}
