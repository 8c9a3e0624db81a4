//! File formats: delay-trace CSV, fit-result and batch-result JSON, run
//! manifests. All writes are atomic (temp file + rename) and all numbers are
//! rendered with 9 significant digits so outputs are stable golden files.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fit::{FitResult, Histogram};
use crate::synth::{DelayTrace, TraceKind};
use crate::units::wavenumber_to_angfreq;

pub const MEASURED_HEADER: &str = "delay_fs,counts_per_s";
pub const SIMULATED_HEADER: &str = "delay_fs,rho11";
pub const SIMULATED_COHERENCE_HEADER: &str = "delay_fs,rho11,coherence_v";

/// Render with 9 significant digits.
pub fn format_sig(x: f64) -> String {
    format!("{x:.8e}")
}

/// Write `contents` to `path` atomically (same-directory temp + rename).
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    tmp.write_all(contents.as_bytes())?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Write a measured trace as `delay_fs,counts_per_s`.
pub fn write_measured_trace(path: &Path, trace: &DelayTrace) -> Result<()> {
    if trace.kind() != TraceKind::Measured {
        return Err(Error::Trace("expected a measured trace".into()));
    }
    let mut out = String::from(MEASURED_HEADER);
    out.push('\n');
    for (d, v) in trace.samples() {
        out.push_str(&format!("{},{}\n", format_sig(*d), format_sig(*v)));
    }
    write_atomic(path, &out)
}

/// Write a simulated trace as `delay_fs,rho11[,coherence_v]`; the optional
/// coherence trace must share the population trace's grid.
pub fn write_simulated_trace(
    path: &Path,
    rho: &DelayTrace,
    coherence: Option<&DelayTrace>,
) -> Result<()> {
    if rho.kind() != TraceKind::Simulated {
        return Err(Error::Trace("expected a simulated trace".into()));
    }
    let mut out = String::new();
    match coherence {
        Some(coh) => {
            if coh.len() != rho.len()
                || coh
                    .delays()
                    .zip(rho.delays())
                    .any(|(a, b)| (a - b).abs() > 1e-9)
            {
                return Err(Error::Trace(
                    "coherence trace grid does not match the population trace".into(),
                ));
            }
            out.push_str(SIMULATED_COHERENCE_HEADER);
            out.push('\n');
            for ((d, r), v) in rho.samples().iter().zip(coh.values()) {
                out.push_str(&format!(
                    "{},{},{}\n",
                    format_sig(*d),
                    format_sig(*r),
                    format_sig(v)
                ));
            }
        }
        None => {
            out.push_str(SIMULATED_HEADER);
            out.push('\n');
            for (d, r) in rho.samples() {
                out.push_str(&format!("{},{}\n", format_sig(*d), format_sig(*r)));
            }
        }
    }
    write_atomic(path, &out)
}

/// Parse a trace file; the header decides the kind. Every malformation gets
/// a distinct diagnostic with its line number. The phase is not part of the
/// format and defaults to 0; set [`DelayTrace::phase`] afterwards if known.
pub fn parse_trace_file(path: &Path) -> Result<DelayTrace> {
    let display = path.display().to_string();
    let text = fs::read_to_string(path)?;
    if text.trim().is_empty() {
        return Err(Error::EmptyTraceFile { path: display });
    }
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().expect("non-empty file has a first line");
    let (kind, n_cols) = match header.trim_end() {
        MEASURED_HEADER => (TraceKind::Measured, 2),
        SIMULATED_HEADER => (TraceKind::Simulated, 2),
        SIMULATED_COHERENCE_HEADER => (TraceKind::Simulated, 3),
        other => {
            return Err(Error::MalformedHeader {
                path: display,
                line: 1,
                found: other.to_string(),
            })
        }
    };

    let mut samples: Vec<(f64, f64)> = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != n_cols {
            return Err(Error::InvalidValue {
                path: display,
                line,
                why: format!("expected {n_cols} fields, found {}", fields.len()),
            });
        }
        let mut nums = [0.0f64; 3];
        for (k, field) in fields.iter().enumerate() {
            nums[k] = field.trim().parse::<f64>().map_err(|_| Error::NonNumericField {
                path: display.clone(),
                line,
                field: field.trim().to_string(),
            })?;
        }
        let (delay, value) = (nums[0], nums[1]);
        if let Some(&(prev, _)) = samples.last() {
            if delay <= prev {
                return Err(Error::NonIncreasingDelay {
                    path: display,
                    line,
                });
            }
        }
        let range_ok = match kind {
            TraceKind::Measured => value >= 0.0,
            TraceKind::Simulated => (-1.0 - 1e-9..=1.0 + 1e-9).contains(&value),
        };
        if !range_ok || !value.is_finite() || !delay.is_finite() {
            return Err(Error::InvalidValue {
                path: display,
                line,
                why: format!("value {value} out of range for a {kind:?} trace"),
            });
        }
        samples.push((delay, value));
    }
    if samples.is_empty() {
        return Err(Error::Trace(format!("{display}: header but no data rows")));
    }
    match kind {
        TraceKind::Measured => DelayTrace::measured(samples, 0.0),
        TraceKind::Simulated => DelayTrace::simulated(samples, 0.0),
    }
}

/// Fit-result JSON document with fixed key names.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResultDoc {
    pub omega_r0_per_fs: f64,
    pub t2_star_fs: f64,
    pub delta_cm: f64,
    pub delta_rad_per_fs: f64,
    pub tau_p_fs: f64,
    pub scale_cps: f64,
    pub sse: f64,
    pub n_evals: u64,
    pub converged: bool,
    pub residuals: Vec<f64>,
}

impl FitResultDoc {
    pub fn from_fit(fit: &FitResult) -> Self {
        Self {
            omega_r0_per_fs: fit.params.omega_r0,
            t2_star_fs: fit.params.t2_star,
            delta_cm: fit.params.delta / wavenumber_to_angfreq(1.0),
            delta_rad_per_fs: fit.params.delta,
            tau_p_fs: fit.params.tau_p,
            scale_cps: fit.scale,
            sse: fit.sse,
            n_evals: fit.n_evals,
            converged: fit.converged,
            residuals: fit.residuals.clone(),
        }
    }
}

pub fn write_fit_result(path: &Path, fit: &FitResult) -> Result<()> {
    let doc = FitResultDoc::from_fit(fit);
    write_atomic(path, &format!("{}\n", serde_json::to_string_pretty(&doc)?))
}

pub fn read_fit_result(path: &Path) -> Result<FitResultDoc> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// One entry of a batch-fit result document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchEntryDoc {
    pub input: String,
    pub sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitResultDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn write_batch_results(path: &Path, entries: &[BatchEntryDoc]) -> Result<()> {
    write_atomic(
        path,
        &format!("{}\n", serde_json::to_string_pretty(entries)?),
    )
}

pub fn read_batch_results(path: &Path) -> Result<Vec<BatchEntryDoc>> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Write a histogram as `bin_lo_fs,bin_hi_fs,count`.
pub fn write_histogram(path: &Path, hist: &Histogram) -> Result<()> {
    let mut out = String::from("bin_lo_fs,bin_hi_fs,count\n");
    for (k, count) in hist.counts.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{}\n",
            format_sig(hist.edges[k]),
            format_sig(hist.edges[k + 1]),
            count
        ));
    }
    write_atomic(path, &out)
}

/// Everything needed to re-execute a run bit-identically: the resolved
/// parameter set, the exact argv, input digests and the tool version.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub argv: Vec<String>,
    pub parameters: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, argv: &[String]) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            argv: argv.to_vec(),
            parameters: json!({}),
            seed: None,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs
            .insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &format!("{}\n", serde_json::to_string_pretty(self)?))
    }
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// The conventional manifest path for an output file.
pub fn manifest_path(out: &Path) -> std::path::PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    Ok(hex)
}

/// JSON value for a possibly-infinite T2*: numbers serialise as numbers,
/// the no-dephasing limit as the string `"inf"`.
pub fn t2_json(t2_star: f64) -> serde_json::Value {
    if t2_star.is_finite() {
        json!(t2_star)
    } else {
        json!("inf")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use tempfile::tempdir;

    #[test]
    fn single_point_file_parses() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("one.csv");
        fs::write(&path, "delay_fs,counts_per_s\n0,400\n").unwrap();
        let trace = parse_trace_file(&path).unwrap();
        assert_eq!(trace.kind(), TraceKind::Measured);
        assert_eq!(trace.samples(), &[(0.0, 400.0)]);
    }

    #[test]
    fn duplicated_delay_names_line_3() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("dup.csv");
        fs::write(&path, "delay_fs,counts_per_s\n100,100\n100,100\n").unwrap();
        match parse_trace_file(&path) {
            Err(Error::NonIncreasingDelay { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected NonIncreasingDelay, got {other:?}"),
        }
    }

    #[test]
    fn distinct_diagnostics() {
        let dir = tempdir().unwrap();
        let cases = [
            ("empty.csv", "", "empty"),
            ("blank.csv", "  \n\n", "empty"),
            ("header.csv", "delay,counts\n1,2\n", "header"),
            ("nonnum.csv", "delay_fs,counts_per_s\n0,abc\n", "nonnum"),
            ("negative.csv", "delay_fs,counts_per_s\n0,-5\n", "invalid"),
            ("cols.csv", "delay_fs,counts_per_s\n0,1,2\n", "invalid"),
            ("nodata.csv", "delay_fs,counts_per_s\n", "nodata"),
        ];
        for (name, contents, what) in cases {
            let path = dir.path().join(name);
            fs::write(&path, contents).unwrap();
            let err = parse_trace_file(&path).unwrap_err();
            match (what, &err) {
                ("empty", Error::EmptyTraceFile { .. })
                | ("header", Error::MalformedHeader { line: 1, .. })
                | ("nonnum", Error::NonNumericField { line: 2, .. })
                | ("invalid", Error::InvalidValue { line: 2, .. })
                | ("nodata", Error::Trace(_)) => {}
                other => panic!("case {name}: unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn simulated_trace_with_coherence_round_trips() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("sim.csv");
        let rho = DelayTrace::simulated(vec![(0.0, 0.25), (10.0, 0.5)], 0.0).unwrap();
        let coh = DelayTrace::simulated(vec![(0.0, -0.1), (10.0, 0.3)], 0.0).unwrap();
        write_simulated_trace(&path, &rho, Some(&coh)).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("delay_fs,rho11,coherence_v\n"));
        let back = parse_trace_file(&path).unwrap();
        assert_eq!(back.kind(), TraceKind::Simulated);
        assert_eq!(back.len(), 2);
        assert!((back.value_at(0.0).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn manifest_round_trips() {
        let dir = tempdir().unwrap();
        let input = dir.path().join("in.csv");
        fs::write(&input, "delay_fs,counts_per_s\n0,4\n").unwrap();
        let mut m = RunManifest::new("simulate", &["simulate".into(), "--x".into()]);
        m.parameters = json!({"omega_r0_per_fs": 0.03, "t2_star_fs": t2_json(f64::INFINITY)});
        m.seed = Some(7);
        m.add_input(&input).unwrap();
        let out = dir.path().join("trace.csv");
        m.add_output(&out);
        let mpath = manifest_path(&out);
        assert!(mpath.to_string_lossy().ends_with("trace.csv.manifest.json"));
        m.write(&mpath).unwrap();
        let back = read_manifest(&mpath).unwrap();
        assert_eq!(back.command, "simulate");
        assert_eq!(back.argv, m.argv);
        assert_eq!(back.seed, Some(7));
        assert_eq!(back.parameters["t2_star_fs"], json!("inf"));
        assert_eq!(back.inputs.len(), 1);
    }

    #[test]
    fn format_sig_gives_nine_significant_digits() {
        assert_eq!(format_sig(0.0), "0.00000000e0");
        assert_eq!(format_sig(4800.0), "4.80000000e3");
        assert_eq!(format_sig(0.123456789123), "1.23456789e-1");
    }

    proptest! {
        #[test]
        fn trace_round_trip_to_nine_digits(
            values in proptest::collection::vec(0.0f64..1e6, 1..40),
        ) {
            let dir = tempdir().unwrap();
            let path = dir.path().join("rt.csv");
            let samples: Vec<(f64, f64)> =
                values.iter().enumerate().map(|(k, &v)| (k as f64 * 7.5, v)).collect();
            let trace = DelayTrace::measured(samples.clone(), 0.0).unwrap();
            write_measured_trace(&path, &trace).unwrap();
            let back = parse_trace_file(&path).unwrap();
            prop_assert_eq!(back.len(), trace.len());
            for ((d0, v0), (d1, v1)) in trace.samples().iter().zip(back.samples()) {
                prop_assert!((d0 - d1).abs() <= 5e-9 * d0.abs().max(1.0));
                prop_assert!((v0 - v1).abs() <= 5e-9 * v0.abs().max(1e-3));
            }
        }
    }
}
