//! Simulation and parameter estimation for a driven, dephasing two-level
//! system under phase-locked femtosecond double-pulse excitation.
//!
//! The crate integrates the optical Bloch equations in the rotating-wave
//! approximation ([`bloch`]), composes the runs into delay traces, coherence
//! traces, Rabi curves and Poisson-noisy synthetic count data ([`synth`]),
//! and recovers (ω_R0, T2*, δ) from measured fluorescence delay traces by
//! tail-anchored least squares ([`fit`]). The [`cli`] module exposes the
//! whole pipeline as the `coherence-lab` binary.

pub mod bloch;
pub mod cli;
pub mod error;
pub mod fit;
pub mod io;
pub mod synth;
pub mod units;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use units::{BlochState, PulseProgram, SystemParams};
