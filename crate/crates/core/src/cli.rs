//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 fit non-convergence.
//! Every command writes its primary output plus a `<out>.manifest.json` run
//! manifest sufficient to reproduce the run bit-identically.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::bloch::{trajectory, IntegratorConfig};
use crate::error::{Error, Result};
use crate::fit::{batch_fit, fit_trace, t2_histogram, FitBounds};
use crate::io;
use crate::synth::{
    coherence_trace, delay_trace, phase_pair, rabi_curve, synth_counts, DelayTrace, NoiseModel,
    TraceKind,
};
use crate::units::{fwhm_to_tau, wavenumber_to_angfreq, PulseProgram, SystemParams};

/// Environment variable supplying the default RNG seed.
pub const SEED_ENV: &str = "COHERENCE_LAB_SEED";

const EXIT_OK: i32 = 0;
const EXIT_USAGE: i32 = 1;
const EXIT_DATA: i32 = 2;
const EXIT_NO_CONVERGENCE: i32 = 3;

/// Inclusive numeric grid, `start:end:step`, or a single value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.start == self.end {
            return vec![self.start];
        }
        let n = ((self.end - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|k| self.start + k as f64 * self.step).collect()
    }
}

impl FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let parse = |p: &str| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| format!("`{p}` is not a number"))
        };
        match parts.as_slice() {
            [single] => {
                let x = parse(single)?;
                Ok(GridSpec {
                    start: x,
                    end: x,
                    step: 1.0,
                })
            }
            [start, end, step] => {
                let (start, end, step) = (parse(start)?, parse(end)?, parse(step)?);
                if !(step > 0.0) {
                    return Err(format!("grid step must be positive, got {step}"));
                }
                if end < start {
                    return Err(format!("grid end {end} is before start {start}"));
                }
                Ok(GridSpec { start, end, step })
            }
            _ => Err(format!("`{s}` is not a grid (expected START:END:STEP or a value)")),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "coherence-lab",
    version,
    about = "Two-level-system double-pulse simulator and delay-trace fitter"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct PhysicsArgs {
    /// Maximum Rabi frequency ω_R0, rad/fs.
    #[arg(long = "omega-r0")]
    omega_r0: f64,
    /// Pure dephasing time T2* in fs; `inf` for no dephasing.
    #[arg(long = "t2")]
    t2: f64,
    /// Detuning in cm⁻¹.
    #[arg(long = "delta-cm", default_value_t = 0.0, allow_hyphen_values = true)]
    delta_cm: f64,
    /// Field-envelope FWHM of one pulse, fs.
    #[arg(long)]
    fwhm: f64,
}

impl PhysicsArgs {
    fn params(&self) -> Result<SystemParams> {
        SystemParams::new(
            self.omega_r0,
            self.t2,
            wavenumber_to_angfreq(self.delta_cm),
            fwhm_to_tau(self.fwhm)?,
        )
    }

    fn manifest_json(&self) -> serde_json::Value {
        json!({
            "omega_r0_per_fs": self.omega_r0,
            "t2_star_fs": io::t2_json(self.t2),
            "delta_cm": self.delta_cm,
            "delta_rad_per_fs": wavenumber_to_angfreq(self.delta_cm),
            "fwhm_fs": self.fwhm,
        })
    }
}

#[derive(Args, Debug)]
struct IntegratorArgs {
    /// RK4 step, fs.
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    /// Window start, multiples of τ_p before the first pulse peak.
    #[arg(long = "start-offset", default_value_t = 4.0)]
    start_offset: f64,
    /// Readout, multiples of τ_p after the delayed pulse peak.
    #[arg(long = "readout-offset", default_value_t = 3.0)]
    readout_offset: f64,
}

impl IntegratorArgs {
    fn config(&self) -> IntegratorConfig {
        IntegratorConfig {
            step: self.step,
            start_offset: self.start_offset,
            readout_offset: self.readout_offset,
        }
    }

    fn manifest_json(&self) -> serde_json::Value {
        json!({
            "step_fs": self.step,
            "start_offset": self.start_offset,
            "readout_offset": self.readout_offset,
        })
    }
}

#[derive(Args, Debug)]
struct BoundsArgs {
    /// Lower ω_R0 search bound, rad/fs.
    #[arg(long = "omega-min", default_value_t = 0.001)]
    omega_min: f64,
    /// Upper ω_R0 search bound, rad/fs.
    #[arg(long = "omega-max", default_value_t = 0.12)]
    omega_max: f64,
    /// Lower T2* search bound, fs.
    #[arg(long = "t2-min", default_value_t = 15.0)]
    t2_min: f64,
    /// Upper T2* search bound, fs.
    #[arg(long = "t2-max", default_value_t = 200.0)]
    t2_max: f64,
    /// Upper |δ| search bound, cm⁻¹ (the lower bound is 0).
    #[arg(long = "delta-cm-max", default_value_t = 300.0)]
    delta_cm_max: f64,
}

impl BoundsArgs {
    fn bounds(&self, fwhm: f64) -> Result<FitBounds> {
        let b = FitBounds {
            omega_r0: (self.omega_min, self.omega_max),
            t2_star: (self.t2_min, self.t2_max),
            delta_cm: (0.0, self.delta_cm_max),
            tau_p: fwhm_to_tau(fwhm)?,
        };
        b.validate()?;
        Ok(b)
    }

    fn manifest_json(&self) -> serde_json::Value {
        json!({
            "omega_r0_per_fs": [self.omega_min, self.omega_max],
            "t2_star_fs": [self.t2_min, self.t2_max],
            "delta_cm": [0.0, self.delta_cm_max],
        })
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a delay trace (ρ₁₁ and coherence columns).
    Simulate {
        #[command(flatten)]
        physics: PhysicsArgs,
        /// Relative pulse phase Δφ, rad.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        phase: f64,
        /// Delay grid, fs (START:END:STEP or a single delay).
        #[arg(long)]
        dt: GridSpec,
        #[command(flatten)]
        integrator: IntegratorArgs,
        /// Output trace file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate the Δφ = 0 and Δφ = π delay traces in one run.
    PhasePair {
        #[command(flatten)]
        physics: PhysicsArgs,
        #[arg(long)]
        dt: GridSpec,
        #[command(flatten)]
        integrator: IntegratorArgs,
        /// Output prefix; writes <prefix>_phi0.csv and <prefix>_phipi.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Rabi-flopping curve: readout ρ₁₁ versus ω_R0 at Δt = 0, Δφ = 0.
    Rabi {
        /// Pure dephasing time T2*, fs (`inf` for none).
        #[arg(long = "t2")]
        t2: f64,
        /// Detuning, cm⁻¹.
        #[arg(long = "delta-cm", default_value_t = 0.0, allow_hyphen_values = true)]
        delta_cm: f64,
        /// Field-envelope FWHM, fs.
        #[arg(long)]
        fwhm: f64,
        /// Amplitude grid of ω_R0 values, rad/fs (START:END:STEP).
        #[arg(long)]
        amplitudes: GridSpec,
        #[command(flatten)]
        integrator: IntegratorArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full Bloch-vector trajectory for one pulse program.
    Trajectory {
        #[command(flatten)]
        physics: PhysicsArgs,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        phase: f64,
        /// Single inter-pulse delay, fs.
        #[arg(long)]
        dt: f64,
        #[command(flatten)]
        integrator: IntegratorArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw Poisson counts from a simulated trace.
    Synth {
        /// Input simulated trace (delay_fs,rho11[,coherence_v]).
        #[arg(long = "in")]
        input: PathBuf,
        /// Count rate at ρ₁₁ = 1, counts/s.
        #[arg(long)]
        scale: f64,
        /// Dwell time per delay point, s.
        #[arg(long, default_value_t = 1.0)]
        dwell: f64,
        /// RNG seed; defaults to $COHERENCE_LAB_SEED, then 0.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit (ω_R0, T2*, δ) to a measured delay trace.
    Fit {
        /// Input measured trace (delay_fs,counts_per_s).
        #[arg(long = "in")]
        input: PathBuf,
        /// Field-envelope FWHM of the excitation pulses, fs.
        #[arg(long)]
        fwhm: f64,
        /// Relative pulse phase the trace was measured at, rad.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        phase: f64,
        #[command(flatten)]
        bounds: BoundsArgs,
        #[command(flatten)]
        integrator: IntegratorArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit many measured traces; failures are recorded per trace.
    BatchFit {
        /// Input measured trace files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        fwhm: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        phase: f64,
        #[command(flatten)]
        bounds: BoundsArgs,
        #[command(flatten)]
        integrator: IntegratorArgs,
        /// Worker threads for the per-trace fan-out.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Histogram of fitted T2* values from a batch-fit result file.
    Histogram {
        /// Input batch-fit JSON document.
        #[arg(long = "in")]
        input: PathBuf,
        /// Bin width, fs.
        #[arg(long = "bin-width", default_value_t = 10.0)]
        bin_width: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parse and run; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let string_argv: Vec<String> = argv
        .iter()
        .skip(1)
        .map(|s| s.to_string_lossy().into_owned())
        .collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command, &string_argv) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

fn dispatch(cmd: Command, argv: &[String]) -> Result<i32> {
    match cmd {
        Command::Simulate {
            physics,
            phase,
            dt,
            integrator,
            out,
        } => {
            let params = physics.params()?;
            let cfg = integrator.config();
            let grid = dt.values();
            let rho = delay_trace(&params, phase, &grid, &cfg)?;
            let coh = coherence_trace(&params, phase, &grid, &cfg)?;
            io::write_simulated_trace(&out, &rho, Some(&coh))?;

            let mut manifest = io::RunManifest::new("simulate", argv);
            manifest.parameters = json!({
                "physics": physics.manifest_json(),
                "phase_rad": phase,
                "delay_grid_fs": {"start": dt.start, "end": dt.end, "step": dt.step},
                "integrator": integrator.manifest_json(),
            });
            manifest.add_output(&out);
            manifest.write(&io::manifest_path(&out))?;
            Ok(EXIT_OK)
        }
        Command::PhasePair {
            physics,
            dt,
            integrator,
            out,
        } => {
            let params = physics.params()?;
            let cfg = integrator.config();
            let grid = dt.values();
            let pair = phase_pair(&params, &grid, &cfg)?;
            let (path0, path_pi) = phase_pair_paths(&out);
            io::write_simulated_trace(&path0, &pair.in_phase, None)?;
            io::write_simulated_trace(&path_pi, &pair.out_of_phase, None)?;

            let mut manifest = io::RunManifest::new("phase-pair", argv);
            manifest.parameters = json!({
                "physics": physics.manifest_json(),
                "delay_grid_fs": {"start": dt.start, "end": dt.end, "step": dt.step},
                "integrator": integrator.manifest_json(),
            });
            manifest.add_output(&path0);
            manifest.add_output(&path_pi);
            manifest.write(&io::manifest_path(&out))?;
            Ok(EXIT_OK)
        }
        Command::Rabi {
            t2,
            delta_cm,
            fwhm,
            amplitudes,
            integrator,
            out,
        } => {
            let cfg = integrator.config();
            let tau_p = fwhm_to_tau(fwhm)?;
            let amps = amplitudes.values();
            let curve = rabi_curve(tau_p, t2, wavenumber_to_angfreq(delta_cm), &amps, &cfg)?;
            let mut text = String::from("omega_r0_per_fs,rho11\n");
            for (a, r) in &curve {
                text.push_str(&format!("{},{}\n", io::format_sig(*a), io::format_sig(*r)));
            }
            io::write_atomic(&out, &text)?;

            let mut manifest = io::RunManifest::new("rabi", argv);
            manifest.parameters = json!({
                "t2_star_fs": io::t2_json(t2),
                "delta_cm": delta_cm,
                "fwhm_fs": fwhm,
                "amplitude_grid_per_fs":
                    {"start": amplitudes.start, "end": amplitudes.end, "step": amplitudes.step},
                "integrator": integrator.manifest_json(),
            });
            manifest.add_output(&out);
            manifest.write(&io::manifest_path(&out))?;
            Ok(EXIT_OK)
        }
        Command::Trajectory {
            physics,
            phase,
            dt,
            integrator,
            out,
        } => {
            let params = physics.params()?;
            let cfg = integrator.config();
            let prog = PulseProgram::with_readout_offset(dt, phase, cfg.readout_offset)?;
            let traj = trajectory(&params, &prog, &cfg)?;
            let mut text = String::from("t_fs,u,v,w,rho11\n");
            for (t, s) in &traj {
                text.push_str(&format!(
                    "{},{},{},{},{}\n",
                    io::format_sig(*t),
                    io::format_sig(s.u),
                    io::format_sig(s.v),
                    io::format_sig(s.w),
                    io::format_sig(s.rho11()),
                ));
            }
            io::write_atomic(&out, &text)?;

            let mut manifest = io::RunManifest::new("trajectory", argv);
            manifest.parameters = json!({
                "physics": physics.manifest_json(),
                "phase_rad": phase,
                "delay_fs": dt,
                "integrator": integrator.manifest_json(),
            });
            manifest.add_output(&out);
            manifest.write(&io::manifest_path(&out))?;
            Ok(EXIT_OK)
        }
        Command::Synth {
            input,
            scale,
            dwell,
            seed,
            out,
        } => {
            let seed = resolve_seed(seed)?;
            let trace = io::parse_trace_file(&input)?;
            if trace.kind() != TraceKind::Simulated {
                return Err(Error::Trace(format!(
                    "{}: synth requires a simulated trace",
                    input.display()
                )));
            }
            let noise = NoiseModel::new(scale, dwell, seed)?;
            let noisy = synth_counts(&trace, &noise)?;
            io::write_measured_trace(&out, &noisy)?;

            let mut manifest = io::RunManifest::new("synth", argv);
            manifest.parameters = json!({
                "scale_cps": scale,
                "dwell_s": dwell,
            });
            manifest.seed = Some(seed);
            manifest.add_input(&input)?;
            manifest.add_output(&out);
            manifest.write(&io::manifest_path(&out))?;
            Ok(EXIT_OK)
        }
        Command::Fit {
            input,
            fwhm,
            phase,
            bounds,
            integrator,
            out,
        } => {
            let cfg = integrator.config();
            let fit_bounds = bounds.bounds(fwhm)?;
            let mut trace = io::parse_trace_file(&input)?;
            trace.phase = phase;
            let fit = fit_trace(&trace, &fit_bounds, phase, &cfg)?;
            io::write_fit_result(&out, &fit)?;

            let mut manifest = io::RunManifest::new("fit", argv);
            manifest.parameters = json!({
                "fwhm_fs": fwhm,
                "tau_p_fs": fit_bounds.tau_p,
                "phase_rad": phase,
                "bounds": bounds.manifest_json(),
                "integrator": integrator.manifest_json(),
            });
            manifest.add_input(&input)?;
            manifest.add_output(&out);
            manifest.write(&io::manifest_path(&out))?;
            Ok(if fit.converged {
                EXIT_OK
            } else {
                eprintln!("fit did not converge; best-so-far written to {}", out.display());
                EXIT_NO_CONVERGENCE
            })
        }
        Command::BatchFit {
            inputs,
            fwhm,
            phase,
            bounds,
            integrator,
            jobs,
            out,
        } => {
            let cfg = integrator.config();
            let fit_bounds = bounds.bounds(fwhm)?;
            let jobs = jobs
                .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
                .unwrap_or(1)
                .max(1);

            // Per-trace parse failures become per-entry errors, not aborts.
            let mut traces: Vec<std::result::Result<DelayTrace, String>> = Vec::new();
            for path in &inputs {
                traces.push(match io::parse_trace_file(path) {
                    Ok(mut t) => {
                        t.phase = phase;
                        Ok(t)
                    }
                    Err(e) => Err(e.to_string()),
                });
            }
            let parsed: Vec<DelayTrace> = traces.iter().filter_map(|t| t.clone().ok()).collect();
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| Error::Domain(format!("cannot build thread pool: {e}")))?;
            let fits = pool.install(|| batch_fit(&parsed, &fit_bounds, &cfg));

            let mut entries = Vec::with_capacity(inputs.len());
            let mut fit_iter = fits.into_iter();
            let mut any_bad = false;
            for (path, parse_result) in inputs.iter().zip(&traces) {
                let sha = io::sha256_file(path).unwrap_or_default();
                let entry = match parse_result {
                    Err(msg) => {
                        any_bad = true;
                        io::BatchEntryDoc {
                            input: path.display().to_string(),
                            sha256: sha,
                            fit: None,
                            error: Some(msg.clone()),
                        }
                    }
                    Ok(_) => match fit_iter.next().expect("one fit per parsed trace") {
                        Ok(fit) => {
                            if !fit.converged {
                                any_bad = true;
                            }
                            io::BatchEntryDoc {
                                input: path.display().to_string(),
                                sha256: sha,
                                fit: Some(io::FitResultDoc::from_fit(&fit)),
                                error: None,
                            }
                        }
                        Err(e) => {
                            any_bad = true;
                            io::BatchEntryDoc {
                                input: path.display().to_string(),
                                sha256: sha,
                                fit: None,
                                error: Some(e.to_string()),
                            }
                        }
                    },
                };
                entries.push(entry);
            }
            io::write_batch_results(&out, &entries)?;

            let mut manifest = io::RunManifest::new("batch-fit", argv);
            manifest.parameters = json!({
                "fwhm_fs": fwhm,
                "tau_p_fs": fit_bounds.tau_p,
                "phase_rad": phase,
                "bounds": bounds.manifest_json(),
                "integrator": integrator.manifest_json(),
                "jobs": jobs,
            });
            for path in &inputs {
                manifest.add_input(path)?;
            }
            manifest.add_output(&out);
            manifest.write(&io::manifest_path(&out))?;
            Ok(if any_bad { EXIT_NO_CONVERGENCE } else { EXIT_OK })
        }
        Command::Histogram {
            input,
            bin_width,
            out,
        } => {
            let entries = io::read_batch_results(&input)?;
            let fits: Vec<crate::fit::FitResult> = entries
                .iter()
                .filter_map(|e| e.fit.as_ref())
                .map(|doc| crate::fit::FitResult {
                    params: SystemParams {
                        omega_r0: doc.omega_r0_per_fs,
                        t2_star: doc.t2_star_fs,
                        delta: doc.delta_rad_per_fs,
                        tau_p: doc.tau_p_fs,
                    },
                    scale: doc.scale_cps,
                    sse: doc.sse,
                    n_evals: doc.n_evals,
                    converged: doc.converged,
                    residuals: doc.residuals.clone(),
                })
                .collect();
            let hist = t2_histogram(&fits, bin_width)?;
            io::write_histogram(&out, &hist)?;

            let mut manifest = io::RunManifest::new("histogram", argv);
            manifest.parameters = json!({"bin_width_fs": bin_width});
            manifest.add_input(&input)?;
            manifest.add_output(&out);
            manifest.write(&io::manifest_path(&out))?;
            Ok(EXIT_OK)
        }
    }
}

fn phase_pair_paths(prefix: &Path) -> (PathBuf, PathBuf) {
    let stem = prefix.to_string_lossy();
    (
        PathBuf::from(format!("{stem}_phi0.csv")),
        PathBuf::from(format!("{stem}_phipi.csv")),
    )
}

fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(text) => text.trim().parse::<u64>().map_err(|_| {
            Error::Domain(format!("{SEED_ENV}=`{text}` is not a valid u64 seed"))
        }),
        Err(_) => Ok(0),
    }
}
