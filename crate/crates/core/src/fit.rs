//! Recovery of (ω_R0, T2*, δ) from a measured delay trace.
//!
//! The simulated ρ₁₁ curve is scaled to the measured tail (mean count rate
//! over Δt ∈ [550, 600] fs against ρ₁₁ at 600 fs) and the squared residuals
//! are minimised over the three free parameters. The objective surface is
//! multimodal in ω_R0 (pulse areas θ and 2π − θ produce similar traces), so
//! a coarse grid scan precedes downhill-simplex refinement.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bloch::{evolve_shaped, IntegratorConfig, ShapeTable};
use crate::error::{Error, Result};
use crate::synth::{DelayTrace, TraceKind};
use crate::units::{wavenumber_to_angfreq, PulseProgram, SystemParams};

/// Tail window (fs) whose mean count rate anchors the scale factor.
pub const TAIL_WINDOW: (f64, f64) = (550.0, 600.0);
/// Delay (fs) at which the simulated ρ₁₁ anchors the scale factor.
pub const SCALE_ANCHOR_DELAY: f64 = 600.0;
/// Simulated populations at or below this anchor value cannot be scaled.
pub const DEGENERATE_RHO: f64 = 1e-12;

/// Search region for the three free parameters; τ_p is a fixed, per-dataset
/// input (from the measured pulse width), not a fit parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitBounds {
    /// ω_R0 range, rad/fs.
    pub omega_r0: (f64, f64),
    /// T2* range, fs.
    pub t2_star: (f64, f64),
    /// |δ| range, cm⁻¹; the sign of δ is unidentifiable for Δφ ∈ {0, π}, so
    /// only δ ≥ 0 is searched.
    pub delta_cm: (f64, f64),
    /// Envelope width parameter, fs.
    pub tau_p: f64,
}

impl FitBounds {
    pub fn with_tau_p(tau_p: f64) -> Self {
        Self {
            omega_r0: (0.001, 0.12),
            t2_star: (15.0, 200.0),
            delta_cm: (0.0, 300.0),
            tau_p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let axes = [
            ("omega_r0", self.omega_r0, 0.0),
            ("t2_star", self.t2_star, 0.0),
            ("delta_cm", self.delta_cm, -f64::EPSILON),
        ];
        for (name, (lo, hi), min_lo) in axes {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() || lo < min_lo || hi <= 0.0 {
                return Err(Error::Domain(format!(
                    "invalid {name} bounds [{lo}, {hi}]"
                )));
            }
        }
        if !(self.omega_r0.0 > 0.0) || !(self.t2_star.0 > 0.0) {
            return Err(Error::Domain("lower bounds must be positive".into()));
        }
        if !(self.tau_p > 0.0) || !self.tau_p.is_finite() {
            return Err(Error::Domain(format!("invalid tau_p {}", self.tau_p)));
        }
        Ok(())
    }

    fn contains(&self, x: &[f64; 3]) -> bool {
        x[0] >= self.omega_r0.0
            && x[0] <= self.omega_r0.1
            && x[1] >= self.t2_star.0
            && x[1] <= self.t2_star.1
            && x[2] >= self.delta_cm.0
            && x[2] <= self.delta_cm.1
    }

    fn params(&self, x: &[f64; 3]) -> SystemParams {
        SystemParams {
            omega_r0: x[0],
            t2_star: x[1],
            delta: wavenumber_to_angfreq(x[2]),
            tau_p: self.tau_p,
        }
    }

    fn span(&self) -> [f64; 3] {
        [
            self.omega_r0.1 - self.omega_r0.0,
            self.t2_star.1 - self.t2_star.0,
            self.delta_cm.1 - self.delta_cm.0,
        ]
    }
}

/// Result of one trace fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: SystemParams,
    /// Counts/s per unit ρ₁₁.
    pub scale: f64,
    /// Sum of squared residuals, counts².
    pub sse: f64,
    /// Objective evaluations spent (grid stage included).
    pub n_evals: u64,
    /// Whether the simplex met the diameter criterion.
    pub converged: bool,
    /// Per-point residuals `scale·ρ₁₁(Δtᵢ) − countsᵢ`.
    pub residuals: Vec<f64>,
}

/// Scale factor matching a simulated trace to the measured tail:
/// mean measured rate over [550, 600] fs divided by simulated ρ₁₁ at 600 fs.
///
/// The returned value may be zero (an all-dark tail); missing tail coverage
/// or a degenerate simulated anchor are errors.
pub fn scale_factor(measured: &DelayTrace, simulated: &DelayTrace) -> Result<f64> {
    let tail: Vec<f64> = measured
        .samples()
        .iter()
        .filter(|(d, _)| (TAIL_WINDOW.0..=TAIL_WINDOW.1).contains(d))
        .map(|&(_, v)| v)
        .collect();
    if tail.is_empty() {
        return Err(Error::DegenerateScale(format!(
            "measured trace has no points in the [{}, {}] fs tail window",
            TAIL_WINDOW.0, TAIL_WINDOW.1
        )));
    }
    let anchor = simulated.value_at(SCALE_ANCHOR_DELAY).ok_or_else(|| {
        Error::DegenerateScale(format!(
            "simulated trace has no point at {SCALE_ANCHOR_DELAY} fs"
        ))
    })?;
    if anchor <= DEGENERATE_RHO {
        return Err(Error::DegenerateScale(format!(
            "simulated rho11({SCALE_ANCHOR_DELAY}) = {anchor} is degenerate"
        )));
    }
    Ok(tail.iter().sum::<f64>() / tail.len() as f64 / anchor)
}

/// Shared per-fit state: the measured data plus pre-sampled envelope shapes
/// for every delay on its grid, at both integration resolutions.
struct FitProblem<'a> {
    measured: &'a DelayTrace,
    phase: f64,
    full: Vec<ShapeTable>,
    coarse: Vec<ShapeTable>,
}

impl<'a> FitProblem<'a> {
    fn new(
        measured: &'a DelayTrace,
        bounds: FitBounds,
        phase: f64,
        cfg: &IntegratorConfig,
    ) -> Result<Self> {
        // The coarse scan only has to rank grid cells; 4x the configured step
        // keeps it far inside the resolution limit and much cheaper.
        let coarse_cfg = IntegratorConfig {
            step: (4.0 * cfg.step).min(bounds.tau_p / 8.0).max(cfg.step),
            ..*cfg
        };
        let mut full = Vec::with_capacity(measured.len());
        let mut coarse = Vec::with_capacity(measured.len());
        for delay in measured.delays() {
            let prog = PulseProgram::with_readout_offset(delay, phase, cfg.readout_offset)?;
            full.push(ShapeTable::new(bounds.tau_p, &prog, cfg));
            coarse.push(ShapeTable::new(bounds.tau_p, &prog, &coarse_cfg));
        }
        Ok(Self {
            measured,
            phase,
            full,
            coarse,
        })
    }

    /// Simulated ρ₁₁ on the measured grid.
    fn simulate(&self, params: &SystemParams, tables: &[ShapeTable]) -> Vec<(f64, f64)> {
        self.measured
            .delays()
            .zip(tables)
            .map(|(delay, table)| (delay, evolve_shaped(params, table).rho11()))
            .collect()
    }

    /// Sum of squared residuals after tail scaling; +∞ for degenerate scale.
    fn sse(&self, params: &SystemParams, tables: &[ShapeTable]) -> f64 {
        let sim = match DelayTrace::simulated(self.simulate(params, tables), self.phase) {
            Ok(t) => t,
            Err(_) => return f64::INFINITY,
        };
        let scale = match scale_factor(self.measured, &sim) {
            Ok(s) if s > 0.0 => s,
            _ => return f64::INFINITY,
        };
        sim.values()
            .zip(self.measured.values())
            .map(|(s, c)| {
                let r = scale * s - c;
                r * r
            })
            .sum()
    }
}

/// Residual objective for one candidate parameter set against a measured
/// trace: simulate on the measured grid, scale to the tail, and sum squared
/// residuals. A degenerate scale yields +∞ rather than an error.
pub fn objective(
    measured: &DelayTrace,
    candidate: &SystemParams,
    phase: f64,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    candidate.validate()?;
    cfg.validate()?;
    if cfg.step >= candidate.tau_p / 4.0 {
        return Err(Error::UnderResolved {
            step: cfg.step,
            tau_p: candidate.tau_p,
        });
    }
    let mut tables = Vec::with_capacity(measured.len());
    for delay in measured.delays() {
        let prog = PulseProgram::with_readout_offset(delay, phase, cfg.readout_offset)?;
        tables.push(ShapeTable::new(candidate.tau_p, &prog, cfg));
    }
    let problem = FitProblem {
        measured,
        phase,
        full: tables,
        coarse: Vec::new(),
    };
    Ok(problem.sse(candidate, &problem.full))
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

/// Nelder–Mead over bounds-normalised coordinates; out-of-bounds candidates
/// are rejected with +∞. Returns (best point, best value, evals, converged).
fn nelder_mead<F: FnMut(&[f64; 3]) -> f64>(
    start: [f64; 3],
    init_step: [f64; 3],
    bounds: &FitBounds,
    mut eval: F,
    diameter_tol: f64,
    max_iter: usize,
) -> ([f64; 3], f64, u64, bool) {
    let span = bounds.span();
    let lo = [bounds.omega_r0.0, bounds.t2_star.0, bounds.delta_cm.0];
    let to_x = |z: &[f64; 3]| -> [f64; 3] {
        [
            lo[0] + z[0] * span[0],
            lo[1] + z[1] * span[1],
            lo[2] + z[2] * span[2],
        ]
    };
    let mut n_evals = 0u64;
    let mut f = |z: &[f64; 3]| -> f64 {
        n_evals += 1;
        let x = to_x(z);
        if !bounds.contains(&x) {
            return f64::INFINITY;
        }
        eval(&x)
    };

    // Vertices in normalised coordinates.
    let z0 = [
        (start[0] - lo[0]) / span[0],
        (start[1] - lo[1]) / span[1],
        (start[2] - lo[2]) / span[2],
    ];
    let mut simplex: Vec<([f64; 3], f64)> = Vec::with_capacity(4);
    let fz0 = f(&z0);
    simplex.push((z0, fz0));
    for axis in 0..3 {
        let mut z = z0;
        let step = init_step[axis] / span[axis];
        z[axis] += step;
        if z[axis] > 1.0 {
            z[axis] = z0[axis] - step;
        }
        let fz = f(&z);
        simplex.push((z, fz));
    }

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut converged = false;
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].0;
        let diameter = simplex[1..]
            .iter()
            .map(|(z, _)| {
                (0..3)
                    .map(|a| (z[a] - best[a]).abs())
                    .fold(0.0f64, f64::max)
            })
            .fold(0.0f64, f64::max);
        if diameter < diameter_tol {
            converged = true;
            break;
        }

        let worst = simplex[3];
        let centroid = {
            let mut c = [0.0; 3];
            for (z, _) in &simplex[..3] {
                for a in 0..3 {
                    c[a] += z[a] / 3.0;
                }
            }
            c
        };
        let reflect = |t: f64| -> [f64; 3] {
            [
                centroid[0] + t * (centroid[0] - worst.0[0]),
                centroid[1] + t * (centroid[1] - worst.0[1]),
                centroid[2] + t * (centroid[2] - worst.0[2]),
            ]
        };

        let zr = reflect(alpha);
        let fr = f(&zr);
        if fr < simplex[0].1 {
            let ze = reflect(gamma);
            let fe = f(&ze);
            simplex[3] = if fe < fr { (ze, fe) } else { (zr, fr) };
        } else if fr < simplex[2].1 {
            simplex[3] = (zr, fr);
        } else {
            let zc = if fr < worst.1 {
                reflect(rho)
            } else {
                reflect(-rho)
            };
            let fc = f(&zc);
            if fc < worst.1.min(fr) {
                simplex[3] = (zc, fc);
            } else {
                // Shrink toward the best vertex.
                for k in 1..4 {
                    let mut z = simplex[k].0;
                    for a in 0..3 {
                        z[a] = simplex[0].0[a] + sigma * (z[a] - simplex[0].0[a]);
                    }
                    let fz = f(&z);
                    simplex[k] = (z, fz);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    (to_x(&simplex[0].0), simplex[0].1, n_evals, converged)
}

fn check_fittable(measured: &DelayTrace) -> Result<()> {
    if measured.kind() != TraceKind::Measured {
        return Err(Error::Unfittable("trace is not of measured kind".into()));
    }
    if measured.len() < 10 {
        return Err(Error::Unfittable(format!(
            "need at least 10 points, got {}",
            measured.len()
        )));
    }
    let first = measured.samples()[0].0;
    if first > 100.0 {
        return Err(Error::Unfittable(format!(
            "trace must cover the early-delay region (first point at {first} fs)"
        )));
    }
    if measured.value_at(SCALE_ANCHOR_DELAY).is_none() {
        return Err(Error::Unfittable(format!(
            "trace lacks the {SCALE_ANCHOR_DELAY} fs anchor point"
        )));
    }
    if !measured
        .delays()
        .any(|d| (TAIL_WINDOW.0..=TAIL_WINDOW.1).contains(&d))
    {
        return Err(Error::Unfittable(format!(
            "trace lacks coverage of the [{}, {}] fs tail window",
            TAIL_WINDOW.0, TAIL_WINDOW.1
        )));
    }
    Ok(())
}

/// Grid resolution of the coarse scan stage, (ω_R0 × T2* × δ).
pub const GRID_SHAPE: (usize, usize, usize) = (12, 12, 8);
/// Relative simplex-diameter convergence criterion.
pub const SIMPLEX_TOL: f64 = 1e-4;
const MAX_SIMPLEX_ITER: usize = 400;
/// Number of ω columns whose best cells seed the basin search.
const MULTI_START_COLUMNS: usize = 6;

/// Fit one measured trace: coarse grid scan over the bounds, then
/// downhill-simplex refinement from the best cell. Deterministic.
pub fn fit_trace(
    measured: &DelayTrace,
    bounds: &FitBounds,
    phase: f64,
    cfg: &IntegratorConfig,
) -> Result<FitResult> {
    bounds.validate()?;
    cfg.validate()?;
    check_fittable(measured)?;
    if cfg.step >= bounds.tau_p / 4.0 {
        return Err(Error::UnderResolved {
            step: cfg.step,
            tau_p: bounds.tau_p,
        });
    }

    let problem = FitProblem::new(measured, *bounds, phase, cfg)?;
    let mut n_evals = 0u64;

    // Stage 1: coarse grid over the bounds. The objective is multimodal in
    // ω_R0 (area aliasing), so record the best (T2*, δ) cell of every ω
    // column rather than a single global winner.
    let omegas = linspace(bounds.omega_r0.0, bounds.omega_r0.1, GRID_SHAPE.0);
    let t2s = linspace(bounds.t2_star.0, bounds.t2_star.1, GRID_SHAPE.1);
    let deltas = linspace(bounds.delta_cm.0, bounds.delta_cm.1, GRID_SHAPE.2);
    let mut column_best: Vec<([f64; 3], f64)> = Vec::with_capacity(omegas.len());
    for &om in &omegas {
        let mut best: Option<([f64; 3], f64)> = None;
        for &t2 in &t2s {
            for &dcm in &deltas {
                let x = [om, t2, dcm];
                let sse = problem.sse(&bounds.params(&x), &problem.coarse);
                n_evals += 1;
                if best.is_none() || sse < best.unwrap().1 {
                    best = Some((x, sse));
                }
            }
        }
        column_best.push(best.expect("grid is non-empty"));
    }
    column_best.sort_by(|a, b| a.1.total_cmp(&b.1));
    if !column_best[0].1.is_finite() {
        return Err(Error::Unfittable(
            "every grid cell has a degenerate scale; the trace cannot be fit".into(),
        ));
    }

    // Stage 2a: cheap simplex refinement (coarse integration) from the most
    // promising ω columns; area aliases refine to clearly worse residuals
    // than the true basin, so the winner identifies the basin.
    let init_step = [
        0.5 * (bounds.omega_r0.1 - bounds.omega_r0.0) / (GRID_SHAPE.0 - 1) as f64,
        0.5 * (bounds.t2_star.1 - bounds.t2_star.0) / (GRID_SHAPE.1 - 1) as f64,
        0.5 * (bounds.delta_cm.1 - bounds.delta_cm.0) / (GRID_SHAPE.2 - 1) as f64,
    ];
    let mut basin: Option<([f64; 3], f64)> = None;
    for (x_start, sse_start) in column_best.iter().take(MULTI_START_COLUMNS) {
        if !sse_start.is_finite() {
            break;
        }
        let (x, sse, evals, _) = nelder_mead(
            *x_start,
            init_step,
            bounds,
            |x| problem.sse(&bounds.params(x), &problem.coarse),
            10.0 * SIMPLEX_TOL,
            MAX_SIMPLEX_ITER / 2,
        );
        n_evals += evals;
        if basin.is_none() || sse < basin.unwrap().1 {
            basin = Some((x, sse));
        }
    }
    let (x_basin, _) = basin.expect("at least one finite start");

    // Stage 2b: full-resolution polish inside the winning basin.
    let polish_step = [
        0.02 * (bounds.omega_r0.1 - bounds.omega_r0.0),
        0.02 * (bounds.t2_star.1 - bounds.t2_star.0),
        0.02 * (bounds.delta_cm.1 - bounds.delta_cm.0),
    ];
    let (x_best, sse_best, nm_evals, converged) = nelder_mead(
        x_basin,
        polish_step,
        bounds,
        |x| problem.sse(&bounds.params(x), &problem.full),
        SIMPLEX_TOL,
        MAX_SIMPLEX_ITER,
    );
    n_evals += nm_evals;

    let params = bounds.params(&x_best);
    let sim = DelayTrace::simulated(problem.simulate(&params, &problem.full), phase)
        .expect("simulated populations are in range");
    let scale = scale_factor(measured, &sim)?;
    let residuals: Vec<f64> = sim
        .values()
        .zip(measured.values())
        .map(|(s, c)| scale * s - c)
        .collect();
    Ok(FitResult {
        params,
        scale,
        sse: sse_best,
        n_evals,
        converged,
        residuals,
    })
}

/// Fit many traces independently; per-trace failures are recorded without
/// aborting the batch, and order is preserved. Runs on the current rayon
/// thread pool.
pub fn batch_fit(
    traces: &[DelayTrace],
    bounds: &FitBounds,
    cfg: &IntegratorConfig,
) -> Vec<Result<FitResult>> {
    traces
        .par_iter()
        .map(|trace| fit_trace(trace, bounds, trace.phase, cfg))
        .collect()
}

/// Histogram of fitted T2* values over converged results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Left edges plus one trailing right edge; empty when no data.
    pub edges: Vec<f64>,
    /// Left-closed bin counts; `edges.len() == counts.len() + 1` when non-empty.
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Bin the converged fits' T2* values into left-closed bins of `bin_width`,
/// starting at ⌊min⌋ and covering up to ⌈max⌉.
pub fn t2_histogram(results: &[FitResult], bin_width: f64) -> Result<Histogram> {
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(Error::Domain(format!(
            "bin width must be finite and > 0, got {bin_width}"
        )));
    }
    let values: Vec<f64> = results
        .iter()
        .filter(|r| r.converged)
        .map(|r| r.params.t2_star)
        .collect();
    if values.is_empty() {
        return Ok(Histogram {
            edges: vec![],
            counts: vec![],
        });
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min).floor();
    let max = values
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
        .ceil();
    let n_bins = ((max - min) / bin_width).floor() as usize + 1;
    let mut counts = vec![0u64; n_bins];
    for v in &values {
        let idx = (((v - min) / bin_width).floor() as usize).min(n_bins - 1);
        counts[idx] += 1;
    }
    let edges = (0..=n_bins).map(|k| min + k as f64 * bin_width).collect();
    Ok(Histogram { edges, counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::delay_trace;
    use crate::units::fwhm_to_tau;
    use approx::assert_relative_eq;

    fn tau_p() -> f64 {
        fwhm_to_tau(75.0).unwrap()
    }

    fn grid() -> Vec<f64> {
        crate::synth::default_delay_grid()
    }

    /// Noiseless "measured" counts from a generator parameter set.
    fn noiseless_counts(
        params: &SystemParams,
        phase: f64,
        scale: f64,
        cfg: &IntegratorConfig,
    ) -> DelayTrace {
        let sim = delay_trace(params, phase, &grid(), cfg).unwrap();
        DelayTrace::measured(
            sim.samples().iter().map(|&(d, v)| (d, scale * v)).collect(),
            phase,
        )
        .unwrap()
    }

    /// Fast config for fit tests; acceptance runs the full-resolution one.
    fn fast_cfg() -> IntegratorConfig {
        IntegratorConfig {
            step: 0.2,
            ..IntegratorConfig::default()
        }
    }

    #[test]
    fn scale_factor_arithmetic() {
        let measured = DelayTrace::measured(
            vec![(0.0, 500.0), (550.0, 1000.0), (600.0, 1000.0)],
            0.0,
        )
        .unwrap();
        let sim =
            DelayTrace::simulated(vec![(0.0, 0.9), (550.0, 0.5), (600.0, 0.5)], 0.0).unwrap();
        assert_relative_eq!(
            scale_factor(&measured, &sim).unwrap(),
            2000.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn scale_factor_zero_tail_is_zero_not_error() {
        let measured =
            DelayTrace::measured(vec![(0.0, 500.0), (550.0, 0.0), (600.0, 0.0)], 0.0).unwrap();
        let sim = DelayTrace::simulated(vec![(600.0, 0.5)], 0.0).unwrap();
        assert_eq!(scale_factor(&measured, &sim).unwrap(), 0.0);
    }

    #[test]
    fn scale_factor_degenerate_cases() {
        let no_tail = DelayTrace::measured(vec![(0.0, 500.0), (100.0, 400.0)], 0.0).unwrap();
        let sim = DelayTrace::simulated(vec![(600.0, 0.5)], 0.0).unwrap();
        assert!(matches!(
            scale_factor(&no_tail, &sim),
            Err(Error::DegenerateScale(_))
        ));

        let measured = DelayTrace::measured(vec![(560.0, 100.0), (600.0, 90.0)], 0.0).unwrap();
        let dark = DelayTrace::simulated(vec![(600.0, 0.0)], 0.0).unwrap();
        assert!(matches!(
            scale_factor(&measured, &dark),
            Err(Error::DegenerateScale(_))
        ));
        let no_anchor = DelayTrace::simulated(vec![(590.0, 0.5)], 0.0).unwrap();
        assert!(matches!(
            scale_factor(&measured, &no_anchor),
            Err(Error::DegenerateScale(_))
        ));
    }

    #[test]
    fn objective_self_fit_is_tiny() {
        let truth = SystemParams::new(0.03, 60.0, wavenumber_to_angfreq(80.0), tau_p()).unwrap();
        let cfg = fast_cfg();
        let measured = noiseless_counts(&truth, 0.0, 2000.0, &cfg);
        let sse = objective(&measured, &truth, 0.0, &cfg).unwrap();
        let sum_sq: f64 = measured.values().map(|c| c * c).sum();
        assert!(sse < 1e-9 * sum_sq, "sse = {sse}, budget = {}", 1e-9 * sum_sq);
    }

    #[test]
    fn objective_zero_drive_is_rejected_as_degenerate() {
        let truth = SystemParams::new(0.03, 60.0, 0.0, tau_p()).unwrap();
        let cfg = fast_cfg();
        let measured = noiseless_counts(&truth, 0.0, 2000.0, &cfg);
        let dark = SystemParams::new(0.0, 60.0, 0.0, tau_p()).unwrap();
        assert_eq!(objective(&measured, &dark, 0.0, &cfg).unwrap(), f64::INFINITY);
    }

    #[test]
    fn objective_rises_when_t2_is_perturbed() {
        let truth = SystemParams::new(0.03, 60.0, wavenumber_to_angfreq(80.0), tau_p()).unwrap();
        let cfg = fast_cfg();
        let measured = noiseless_counts(&truth, 0.0, 2000.0, &cfg);
        let base = objective(&measured, &truth, 0.0, &cfg).unwrap();
        let perturbed = SystemParams {
            t2_star: 72.0,
            ..truth
        };
        let off = objective(&measured, &perturbed, 0.0, &cfg).unwrap();
        assert!(off > base, "off = {off}, base = {base}");
    }

    #[test]
    fn objective_is_symmetric_in_delta_sign() {
        let truth = SystemParams::new(0.03, 60.0, wavenumber_to_angfreq(80.0), tau_p()).unwrap();
        let cfg = fast_cfg();
        let measured = noiseless_counts(&truth, 0.0, 2000.0, &cfg);
        for phase in [0.0, std::f64::consts::PI] {
            let plus = objective(&measured, &truth, phase, &cfg).unwrap();
            let minus = objective(
                &measured,
                &SystemParams {
                    delta: -truth.delta,
                    ..truth
                },
                phase,
                &cfg,
            )
            .unwrap();
            assert!((plus - minus).abs() <= 1e-12 * plus.max(1.0));
        }
    }

    #[test]
    fn fit_recovers_noiseless_generator() {
        let truth = SystemParams::new(0.03, 60.0, wavenumber_to_angfreq(80.0), tau_p()).unwrap();
        let cfg = fast_cfg();
        let measured = noiseless_counts(&truth, 0.0, 2000.0, &cfg);
        let fit = fit_trace(&measured, &FitBounds::with_tau_p(tau_p()), 0.0, &cfg).unwrap();
        assert!(fit.converged);
        assert!((fit.params.omega_r0 - 0.03).abs() / 0.03 < 0.05, "{:?}", fit.params);
        assert!((fit.params.t2_star - 60.0).abs() / 60.0 < 0.05, "{:?}", fit.params);
        let delta_cm = fit.params.delta / wavenumber_to_angfreq(1.0);
        assert!((delta_cm - 80.0).abs() < 10.0, "delta_cm = {delta_cm}");
        assert!(fit.scale > 0.0);
        assert_eq!(fit.residuals.len(), measured.len());
    }

    #[test]
    fn fit_flat_trace_keeps_t2_interior() {
        // High drive with fast dephasing produces a nearly flat trace; the
        // fitted T2* must stay away from both bounds.
        let truth = SystemParams::new(0.06, 30.0, 0.0, tau_p()).unwrap();
        let cfg = fast_cfg();
        let measured = noiseless_counts(&truth, 0.0, 2400.0, &cfg);
        let bounds = FitBounds::with_tau_p(tau_p());
        let fit = fit_trace(&measured, &bounds, 0.0, &cfg).unwrap();
        let t2 = fit.params.t2_star;
        assert!(t2 > 20.0 && t2 < 150.0, "t2 = {t2}");
        assert!((t2 - bounds.t2_star.0).abs() > 1.0);
        assert!((t2 - bounds.t2_star.1).abs() > 1.0);
        assert!((t2 - 30.0).abs() / 30.0 < 0.10, "t2 = {t2}");
    }

    #[test]
    fn fit_is_scale_invariant() {
        // Doubling all counts is exact in floating point: the optimizer path
        // is bit-identical, so the params agree exactly, scale doubles and
        // sse quadruples.
        let truth = SystemParams::new(0.035, 45.0, 0.0, tau_p()).unwrap();
        let cfg = fast_cfg();
        let measured = noiseless_counts(&truth, 0.0, 1000.0, &cfg);
        let doubled = DelayTrace::measured(
            measured
                .samples()
                .iter()
                .map(|&(d, v)| (d, 2.0 * v))
                .collect(),
            0.0,
        )
        .unwrap();
        let bounds = FitBounds::with_tau_p(tau_p());
        let fit1 = fit_trace(&measured, &bounds, 0.0, &cfg).unwrap();
        let fit2 = fit_trace(&doubled, &bounds, 0.0, &cfg).unwrap();
        assert_eq!(fit1.params, fit2.params);
        assert_eq!(fit2.scale, 2.0 * fit1.scale);
        assert_eq!(fit2.sse, 4.0 * fit1.sse);
    }

    #[test]
    fn fit_self_idempotence() {
        let truth = SystemParams::new(0.02, 35.0, 0.0, tau_p()).unwrap();
        let cfg = fast_cfg();
        let measured = noiseless_counts(&truth, 0.0, 1500.0, &cfg);
        let fit = fit_trace(&measured, &FitBounds::with_tau_p(tau_p()), 0.0, &cfg).unwrap();
        let obj_truth = objective(&measured, &truth, 0.0, &cfg).unwrap();
        let obj_fit = objective(&measured, &fit.params, 0.0, &cfg).unwrap();
        assert!(obj_fit <= obj_truth + 1e-12);
        assert_relative_eq!(obj_fit, fit.sse, max_relative = 1e-9);
    }

    #[test]
    fn fit_is_deterministic() {
        let truth = SystemParams::new(0.03, 60.0, 0.0, tau_p()).unwrap();
        let cfg = fast_cfg();
        let measured = noiseless_counts(&truth, 0.0, 2000.0, &cfg);
        let bounds = FitBounds::with_tau_p(tau_p());
        let a = fit_trace(&measured, &bounds, 0.0, &cfg).unwrap();
        let b = fit_trace(&measured, &bounds, 0.0, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fit_rejects_inadequate_traces() {
        let bounds = FitBounds::with_tau_p(tau_p());
        let cfg = fast_cfg();
        // Too few points.
        let short = DelayTrace::measured(vec![(0.0, 1.0), (600.0, 1.0)], 0.0).unwrap();
        assert!(matches!(
            fit_trace(&short, &bounds, 0.0, &cfg),
            Err(Error::Unfittable(_))
        ));
        // No tail coverage.
        let samples: Vec<(f64, f64)> = (0..=20).map(|k| (10.0 * k as f64, 100.0)).collect();
        let no_tail = DelayTrace::measured(samples, 0.0).unwrap();
        assert!(matches!(
            fit_trace(&no_tail, &bounds, 0.0, &cfg),
            Err(Error::Unfittable(_))
        ));
        // All-dark trace: every grid cell degenerate (zero tail -> scale 0).
        let dark_samples: Vec<(f64, f64)> = (0..=60).map(|k| (10.0 * k as f64, 0.0)).collect();
        let dark = DelayTrace::measured(dark_samples, 0.0).unwrap();
        assert!(matches!(
            fit_trace(&dark, &bounds, 0.0, &cfg),
            Err(Error::Unfittable(_))
        ));
    }

    #[test]
    fn batch_fit_preserves_order_and_matches_single_fit() {
        let cfg = fast_cfg();
        let bounds = FitBounds::with_tau_p(tau_p());
        assert!(batch_fit(&[], &bounds, &cfg).is_empty());

        let truth = SystemParams::new(0.03, 60.0, 0.0, tau_p()).unwrap();
        let measured = noiseless_counts(&truth, 0.0, 2000.0, &cfg);
        let batch = batch_fit(std::slice::from_ref(&measured), &bounds, &cfg);
        assert_eq!(batch.len(), 1);
        let single = fit_trace(&measured, &bounds, 0.0, &cfg).unwrap();
        assert_eq!(*batch[0].as_ref().unwrap(), single);
    }

    #[test]
    fn histogram_examples() {
        let mk = |t2: f64| FitResult {
            params: SystemParams::new(0.03, t2, 0.0, tau_p()).unwrap(),
            scale: 1000.0,
            sse: 0.0,
            n_evals: 1,
            converged: true,
            residuals: vec![],
        };
        let h = t2_histogram(&[mk(60.0)], 10.0).unwrap();
        assert_eq!(h.edges, vec![60.0, 70.0]);
        assert_eq!(h.counts, vec![1]);

        let h = t2_histogram(&[mk(25.0), mk(25.0), mk(35.0)], 10.0).unwrap();
        assert_eq!(h.edges, vec![25.0, 35.0, 45.0]);
        assert_eq!(h.counts, vec![2, 1]);
        assert_eq!(h.total(), 3);

        let mut unconverged = mk(50.0);
        unconverged.converged = false;
        let h = t2_histogram(&[unconverged], 10.0).unwrap();
        assert!(h.is_empty());

        assert!(t2_histogram(&[mk(60.0)], 0.0).is_err());
    }
}
