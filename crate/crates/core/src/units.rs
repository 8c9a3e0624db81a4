//! Physical constants, unit conversions, and the shared parameter/state
//! types consumed by the rest of the crate.
//!
//! Internally everything runs in femtoseconds and rad/fs; wavenumbers (cm⁻¹)
//! appear only at the boundaries, converted here.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in cm/fs.
pub const C_CM_PER_FS: f64 = 2.99792458e-5;

/// Ratio of a Gaussian's full width at half maximum to its width parameter:
/// FWHM = 2·√(2·ln 2)·τ.
pub const GAUSSIAN_FWHM_FACTOR: f64 = 2.354_820_045_030_949_3;

/// Tolerance allowed on the Bloch-vector norm, `u² + v² + w² ≤ 1 + ε`.
pub const BLOCH_NORM_EPS: f64 = 1e-9;

/// Convert a wavenumber in cm⁻¹ to an angular frequency in rad/fs.
///
/// Linear and sign-preserving: `2π·c·ν̃`.
pub fn wavenumber_to_angfreq(nu_tilde: f64) -> f64 {
    2.0 * std::f64::consts::PI * C_CM_PER_FS * nu_tilde
}

/// Convert a field-envelope full width at half maximum (fs) to the Gaussian
/// width parameter τ_p (fs).
pub fn fwhm_to_tau(fwhm: f64) -> Result<f64> {
    if !(fwhm > 0.0) {
        return Err(Error::Domain(format!(
            "envelope FWHM must be positive, got {fwhm}"
        )));
    }
    Ok(fwhm / GAUSSIAN_FWHM_FACTOR)
}

/// Area of a single Gaussian pulse, `∫ ω_R(t) dt = √(2π)·ω_R0·τ_p` (rad).
pub fn pulse_area(omega_r0: f64, tau_p: f64) -> f64 {
    (2.0 * std::f64::consts::PI).sqrt() * omega_r0 * tau_p
}

/// Lower bound on the pure dephasing time implied by a Lorentzian emission
/// line width (FWHM, cm⁻¹): `T2 = 2 / Δω`.
pub fn linewidth_to_min_dephasing(fwhm_wavenumber: f64) -> Result<f64> {
    if !(fwhm_wavenumber > 0.0) {
        return Err(Error::Domain(format!(
            "line width must be positive, got {fwhm_wavenumber}"
        )));
    }
    Ok(2.0 / wavenumber_to_angfreq(fwhm_wavenumber))
}

/// Physical parameters of one molecule plus its drive.
///
/// `t2_star` may be `f64::INFINITY`, in which case the dephasing term is
/// dropped entirely (useful for analytic-limit checks). The detuning
/// convention is `delta = ω₀ − ω_laser`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Maximum Rabi frequency ω_R,0, rad/fs.
    pub omega_r0: f64,
    /// Pure dephasing time T2*, fs. May be infinite.
    pub t2_star: f64,
    /// Detuning δ = ω₀ − ω_laser, rad/fs.
    pub delta: f64,
    /// Gaussian envelope width parameter τ_p, fs.
    pub tau_p: f64,
}

impl SystemParams {
    pub fn new(omega_r0: f64, t2_star: f64, delta: f64, tau_p: f64) -> Result<Self> {
        let p = Self {
            omega_r0,
            t2_star,
            delta,
            tau_p,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_r0 >= 0.0) || !self.omega_r0.is_finite() {
            return Err(Error::Domain(format!(
                "omega_r0 must be finite and >= 0, got {}",
                self.omega_r0
            )));
        }
        if !(self.tau_p > 0.0) || !self.tau_p.is_finite() {
            return Err(Error::Domain(format!(
                "tau_p must be finite and > 0, got {}",
                self.tau_p
            )));
        }
        // t2_star = inf is the no-dephasing limit.
        if !(self.t2_star > 0.0) || self.t2_star.is_nan() {
            return Err(Error::Domain(format!(
                "t2_star must be > 0 (or infinite), got {}",
                self.t2_star
            )));
        }
        if !self.delta.is_finite() {
            return Err(Error::Domain(format!(
                "delta must be finite, got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// The two-pulse sequence: delay Δt, relative phase Δφ, and readout rule.
///
/// The state is read `readout_offset · τ_p` after the delayed pulse's peak,
/// once the envelope has decayed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseProgram {
    /// Inter-pulse delay Δt, fs.
    pub delay: f64,
    /// Relative carrier phase Δφ, rad.
    pub phase: f64,
    /// Readout time as a multiple of τ_p after the delayed pulse's peak.
    pub readout_offset: f64,
}

impl PulseProgram {
    /// Program with the default readout rule (3·τ_p after the second peak).
    pub fn new(delay: f64, phase: f64) -> Result<Self> {
        Self::with_readout_offset(delay, phase, 3.0)
    }

    pub fn with_readout_offset(delay: f64, phase: f64, readout_offset: f64) -> Result<Self> {
        let p = Self {
            delay,
            phase,
            readout_offset,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delay >= 0.0) || !self.delay.is_finite() {
            return Err(Error::Domain(format!(
                "delay must be finite and >= 0, got {}",
                self.delay
            )));
        }
        if !self.phase.is_finite() {
            return Err(Error::Domain(format!(
                "phase must be finite, got {}",
                self.phase
            )));
        }
        if !(self.readout_offset >= 3.0) {
            return Err(Error::Domain(format!(
                "readout_offset must be >= 3 (envelope negligible at readout), got {}",
                self.readout_offset
            )));
        }
        Ok(())
    }
}

/// Instantaneous state of the two-level system as the Bloch vector (u, v, w).
///
/// The map to density-matrix elements is
/// ρ₂₁ = (u − i·v)/2, ρ₁₂ = (u + i·v)/2, ρ₁₁ = (1 + w)/2, ρ₂₂ = (1 − w)/2,
/// so ρ₁₁ + ρ₂₂ = 1 holds exactly by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochState {
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

impl BlochState {
    pub const fn new(u: f64, v: f64, w: f64) -> Self {
        Self { u, v, w }
    }

    /// Ground state: only |2⟩ occupied, Bloch vector at the south pole.
    pub const fn ground() -> Self {
        Self {
            u: 0.0,
            v: 0.0,
            w: -1.0,
        }
    }

    /// Excited-state population probability ρ₁₁ = (1 + w)/2.
    pub fn rho11(&self) -> f64 {
        0.5 * (1.0 + self.w)
    }

    /// Ground-state population probability ρ₂₂ = (1 − w)/2.
    pub fn rho22(&self) -> f64 {
        0.5 * (1.0 - self.w)
    }

    pub fn rho21(&self) -> Complex64 {
        Complex64::new(0.5 * self.u, -0.5 * self.v)
    }

    pub fn rho12(&self) -> Complex64 {
        Complex64::new(0.5 * self.u, 0.5 * self.v)
    }

    /// Rebuild the Bloch vector from off-diagonal ρ₂₁ and population ρ₁₁.
    pub fn from_density(rho21: Complex64, rho11: f64) -> Self {
        Self {
            u: 2.0 * rho21.re,
            v: -2.0 * rho21.im,
            w: 2.0 * rho11 - 1.0,
        }
    }

    /// Euclidean norm of the Bloch vector; ≤ 1 (+ε) for physical states.
    pub fn norm(&self) -> f64 {
        (self.u * self.u + self.v * self.v + self.w * self.w).sqrt()
    }
}
