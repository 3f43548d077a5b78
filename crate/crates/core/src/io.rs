//! CSV and JSON files for traces, probability traces and phase sweeps.
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading
//! a file back reproduces every sample bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::SweepResult;
use crate::recognition::ProbabilityTrace;
use crate::sim::{IqTrace, PhaseSetting, RawTrace};

/// Side-car description of a trace file: everything except the samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceManifest {
    pub file: String,
    pub dt: f64,
    pub t0: f64,
    pub len: usize,
    pub meta: String,
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Writes `t_ns,v`.
pub fn write_raw_trace(trace: &RawTrace, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t_ns", "v"])?;
    for (k, v) in trace.samples.iter().enumerate() {
        w.write_record([trace.time(k).to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn read_columns(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path)?;
    let found: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if found != header {
        return Err(format_err(path, format!("expected header {}, found {}", header.join(","), found.join(","))));
    }
    let mut cols = vec![Vec::new(); header.len()];
    for rec in r.records() {
        let rec = rec?;
        for (c, field) in cols.iter_mut().zip(rec.iter()) {
            c.push(field.parse::<f64>().map_err(|e| format_err(path, format!("bad number {field:?}: {e}")))?);
        }
    }
    Ok(cols)
}

fn grid(path: &Path, t: &[f64]) -> Result<(f64, f64)> {
    match t {
        [] => Err(format_err(path, "no samples")),
        [t0] => Ok((*t0, 1.0)),
        [t0, t1, ..] => Ok((*t0, t1 - t0)),
    }
}

/// Reads a `t_ns,v` file. The grid is taken from the first two timestamps;
/// the manifest, when available, is authoritative for `dt` and `meta`.
pub fn read_raw_trace(path: &Path, manifest: Option<&TraceManifest>) -> Result<RawTrace> {
    let mut cols = read_columns(path, &["t_ns", "v"])?;
    let samples = cols.pop().expect("two columns");
    let (t0, dt) = grid(path, &cols[0])?;
    Ok(match manifest {
        Some(m) => {
            if m.len != samples.len() {
                return Err(format_err(path, format!("manifest says {} samples, file has {}", m.len, samples.len())));
            }
            RawTrace {
                samples,
                dt: m.dt,
                t0: m.t0,
                meta: m.meta.clone(),
            }
        }
        None => RawTrace {
            samples,
            dt,
            t0,
            meta: String::new(),
        },
    })
}

pub fn manifest_for(trace: &RawTrace, file: &str) -> TraceManifest {
    TraceManifest {
        file: file.to_string(),
        dt: trace.dt,
        t0: trace.t0,
        len: trace.len(),
        meta: trace.meta.clone(),
    }
}

pub fn write_manifest(entries: &[TraceManifest], path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(entries)?)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<TraceManifest>> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Writes `t_ns,i,q`; the phase setting goes into the manifest.
pub fn write_iq_trace(trace: &IqTrace, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t_ns", "i", "q"])?;
    for k in 0..trace.len() {
        w.write_record([
            trace.time(k).to_string(),
            trace.i_samples[k].to_string(),
            trace.q_samples[k].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_iq_trace(path: &Path, meta: PhaseSetting) -> Result<IqTrace> {
    let mut cols = read_columns(path, &["t_ns", "i", "q"])?;
    let q = cols.pop().expect("three columns");
    let i = cols.pop().expect("three columns");
    let (t0, dt) = grid(path, &cols[0])?;
    Ok(IqTrace {
        i_samples: i,
        q_samples: q,
        dt,
        t0,
        meta,
    })
}

/// Writes `t_ns,p_e` with window start times.
pub fn write_probability_trace(ptrace: &ProbabilityTrace, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t_ns", "p_e"])?;
    for (t, p) in ptrace.times.iter().zip(&ptrace.p_e) {
        w.write_record([t.to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `phi_in_deg,phi_pred_deg,phi_oracle_deg`.
pub fn write_sweep_csv(sweep: &SweepResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["phi_in_deg", "phi_pred_deg", "phi_oracle_deg"])?;
    for k in 0..sweep.input_phases.len() {
        w.write_record([
            sweep.input_phases[k].to_string(),
            sweep.predicted_phases[k].to_string(),
            sweep.oracle_phases[k].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `key=value` lines summarizing a sweep.
pub fn sweep_summary(sweep: &SweepResult) -> String {
    format!(
        "points={}\nslope={}\noracle_slope={}\nperiod_deg={}\nbias_deg={}\n",
        sweep.input_phases.len(),
        sweep.slope,
        sweep.oracle_slope,
        sweep.period,
        sweep.bias
    )
}
