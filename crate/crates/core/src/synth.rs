//! Composition of integrator runs into the measurable objects: delay traces,
//! phase-contrast pairs, coherence traces, Rabi-flopping curves, and
//! Poisson-noisy synthetic count data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::bloch::{evolve, IntegratorConfig};
use crate::error::{Error, Result};
use crate::units::{PulseProgram, SystemParams, BLOCH_NORM_EPS};

/// Whether a trace holds simulated dimensionless values or measured counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceKind {
    Simulated,
    Measured,
}

/// A sampled curve of observable versus inter-pulse delay.
///
/// Simulated traces hold ρ₁₁ (or the coherence component v) in [−1, 1];
/// measured traces hold non-negative count rates in counts/s. Delays are
/// strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayTrace {
    samples: Vec<(f64, f64)>,
    kind: TraceKind,
    /// Relative pulse phase Δφ (rad) the trace was taken at.
    pub phase: f64,
}

impl DelayTrace {
    pub fn simulated(samples: Vec<(f64, f64)>, phase: f64) -> Result<Self> {
        Self::validate(&samples, TraceKind::Simulated)?;
        Ok(Self {
            samples,
            kind: TraceKind::Simulated,
            phase,
        })
    }

    pub fn measured(samples: Vec<(f64, f64)>, phase: f64) -> Result<Self> {
        Self::validate(&samples, TraceKind::Measured)?;
        Ok(Self {
            samples,
            kind: TraceKind::Measured,
            phase,
        })
    }

    fn validate(samples: &[(f64, f64)], kind: TraceKind) -> Result<()> {
        for pair in samples.windows(2) {
            if !(pair[1].0 > pair[0].0) {
                return Err(Error::Trace(format!(
                    "delays must be strictly increasing ({} then {})",
                    pair[0].0, pair[1].0
                )));
            }
        }
        for &(delay, value) in samples {
            if !delay.is_finite() || !value.is_finite() {
                return Err(Error::Trace(format!(
                    "non-finite sample ({delay}, {value})"
                )));
            }
            match kind {
                TraceKind::Simulated => {
                    if value < -1.0 - BLOCH_NORM_EPS || value > 1.0 + BLOCH_NORM_EPS {
                        return Err(Error::Trace(format!(
                            "simulated value {value} at delay {delay} outside [-1, 1]"
                        )));
                    }
                }
                TraceKind::Measured => {
                    if value < 0.0 {
                        return Err(Error::Trace(format!(
                            "measured value {value} at delay {delay} is negative"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> TraceKind {
        self.kind
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn delays(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|&(d, _)| d)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|&(_, v)| v)
    }

    /// Value at the sample whose delay matches `delay` to within 1e-6 fs.
    pub fn value_at(&self, delay: f64) -> Option<f64> {
        self.samples
            .iter()
            .find(|(d, _)| (d - delay).abs() < 1e-6)
            .map(|&(_, v)| v)
    }
}

/// Poisson photon-counting model for synthetic measured data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Count rate at ρ₁₁ = 1, counts/s.
    pub scale: f64,
    /// Integration time per delay point, s.
    pub dwell: f64,
    /// RNG seed; identical seeds reproduce identical traces.
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(scale: f64, dwell: f64, seed: u64) -> Result<Self> {
        let m = Self { scale, dwell, seed };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::Domain(format!(
                "noise scale must be finite and > 0, got {}",
                self.scale
            )));
        }
        if !(self.dwell > 0.0) || !self.dwell.is_finite() {
            return Err(Error::Domain(format!(
                "dwell must be finite and > 0, got {}",
                self.dwell
            )));
        }
        Ok(())
    }
}

/// The Δφ = 0 / Δφ = π trace pair of a phase-contrast measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePair {
    pub in_phase: DelayTrace,
    pub out_of_phase: DelayTrace,
}

fn check_delay_grid(delays: &[f64]) -> Result<()> {
    if delays.is_empty() {
        return Err(Error::Grid("delay grid is empty".into()));
    }
    for pair in delays.windows(2) {
        if !(pair[1] > pair[0]) {
            return Err(Error::Grid(format!(
                "delay grid must be strictly increasing ({} then {})",
                pair[0], pair[1]
            )));
        }
    }
    if delays[0] < 0.0 {
        return Err(Error::Grid(format!(
            "delays must be non-negative, got {}",
            delays[0]
        )));
    }
    Ok(())
}

/// Simulated ρ₁₁ as a function of delay on the given grid.
pub fn delay_trace(
    params: &SystemParams,
    phase: f64,
    delays: &[f64],
    cfg: &IntegratorConfig,
) -> Result<DelayTrace> {
    check_delay_grid(delays)?;
    let mut samples = Vec::with_capacity(delays.len());
    for &dt in delays {
        let prog = PulseProgram::with_readout_offset(dt, phase, cfg.readout_offset)?;
        let state = evolve(params, &prog, cfg)?;
        samples.push((dt, state.rho11()));
    }
    DelayTrace::simulated(samples, phase)
}

/// Simulated coherence v = i(ρ₂₁ − ρ₁₂) at readout as a function of delay.
pub fn coherence_trace(
    params: &SystemParams,
    phase: f64,
    delays: &[f64],
    cfg: &IntegratorConfig,
) -> Result<DelayTrace> {
    check_delay_grid(delays)?;
    let mut samples = Vec::with_capacity(delays.len());
    for &dt in delays {
        let prog = PulseProgram::with_readout_offset(dt, phase, cfg.readout_offset)?;
        let state = evolve(params, &prog, cfg)?;
        samples.push((dt, state.v));
    }
    DelayTrace::simulated(samples, phase)
}

/// Delay traces at Δφ = 0 and Δφ = π on the same grid and parameters.
pub fn phase_pair(
    params: &SystemParams,
    delays: &[f64],
    cfg: &IntegratorConfig,
) -> Result<PhasePair> {
    Ok(PhasePair {
        in_phase: delay_trace(params, 0.0, delays, cfg)?,
        out_of_phase: delay_trace(params, std::f64::consts::PI, delays, cfg)?,
    })
}

/// Rabi-flopping curve: readout ρ₁₁ versus peak Rabi frequency for single-shot
/// excitation (Δt = 0, Δφ = 0, i.e. coincident pulses with doubled amplitude).
pub fn rabi_curve(
    tau_p: f64,
    t2_star: f64,
    delta: f64,
    amplitudes: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<(f64, f64)>> {
    if amplitudes.is_empty() {
        return Err(Error::Grid("amplitude grid is empty".into()));
    }
    for pair in amplitudes.windows(2) {
        if !(pair[1] > pair[0]) {
            return Err(Error::Grid(format!(
                "amplitude grid must be strictly increasing ({} then {})",
                pair[0], pair[1]
            )));
        }
    }
    if amplitudes[0] < 0.0 {
        return Err(Error::Grid(format!(
            "amplitudes must be non-negative, got {}",
            amplitudes[0]
        )));
    }
    let prog = PulseProgram::with_readout_offset(0.0, 0.0, cfg.readout_offset)?;
    let mut curve = Vec::with_capacity(amplitudes.len());
    for &a in amplitudes {
        let params = SystemParams::new(a, t2_star, delta, tau_p)?;
        let state = evolve(&params, &prog, cfg)?;
        curve.push((a, state.rho11()));
    }
    Ok(curve)
}

/// Replace each simulated ρ₁₁ value by a Poisson draw of the corresponding
/// count rate: Poisson(scale·ρ₁₁·dwell)/dwell, seeded and reproducible.
pub fn synth_counts(trace: &DelayTrace, noise: &NoiseModel) -> Result<DelayTrace> {
    if trace.kind() != TraceKind::Simulated {
        return Err(Error::Trace(
            "synth_counts requires a simulated trace".into(),
        ));
    }
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut samples = Vec::with_capacity(trace.len());
    for (delay, value) in trace.samples().iter().copied() {
        // RK4 round-off can leave a simulated population at -1e-16; treat as 0.
        let lambda = (noise.scale * value * noise.dwell).max(0.0);
        let counts = if lambda > 0.0 {
            Poisson::new(lambda)
                .map_err(|e| Error::Domain(format!("invalid Poisson rate {lambda}: {e}")))?
                .sample(&mut rng)
        } else {
            0.0
        };
        samples.push((delay, counts / noise.dwell));
    }
    DelayTrace::measured(samples, trace.phase)
}

/// The default evaluation grid: 0–600 fs in 10 fs steps.
pub fn default_delay_grid() -> Vec<f64> {
    (0..=60).map(|k| 10.0 * k as f64).collect()
}
