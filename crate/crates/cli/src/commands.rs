use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use echo_readout::baselines::{scoreboard, scoreboard_text, threshold_sweep, write_scoreboard_csv, BaselineConfig};
use echo_readout::io::{
    manifest_for, read_manifest, read_raw_trace, sweep_summary, write_iq_trace, write_manifest, write_probability_trace,
    write_raw_trace, write_sweep_csv,
};
use echo_readout::neural::{load_model, save_model, DenseNetwork, Head, TrainReport};
use echo_readout::phase::{mean_abs_error, phase_grid, sweep_pi, sweep_pi2, HahnSetup};
use echo_readout::pipeline::{synth_trace_set, train_classifier, train_phase};
use echo_readout::recognition::{full_protocol_report, probability_traces, require_all, TraceSet};
use echo_readout::rng;
use echo_readout::sim::{synth_hahn, synth_storage_retrieval, BitSequence};
use echo_readout::dataset::gen_phase_dataset;

use crate::config::RunConfig;

/// Outputs written by a command; each is checked once the command is done.
#[derive(Default)]
pub struct Outputs(Vec<PathBuf>);

impl Outputs {
    fn add(&mut self, path: PathBuf) -> PathBuf {
        self.0.push(path.clone());
        path
    }

    /// Fails unless every declared output exists and is non-empty.
    pub fn validate(&self) -> Result<usize> {
        for p in &self.0 {
            let len = fs::metadata(p).with_context(|| format!("output {} was not written", p.display()))?.len();
            ensure!(len > 0, "output {} is empty", p.display());
        }
        Ok(self.0.len())
    }
}

fn out_dir(cfg: &RunConfig, sub: &str) -> Result<PathBuf> {
    let dir = if sub.is_empty() { cfg.out.clone() } else { cfg.out.join(sub) };
    fs::create_dir_all(&dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok(dir)
}

/// Writes the resolved configuration next to the outputs.
pub fn echo_config(cfg: &RunConfig, outs: &mut Outputs) -> Result<()> {
    let path = outs.add(out_dir(cfg, "")?.join("config.txt"));
    fs::write(&path, cfg.to_text()).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// Trace file of sequence `j`; the same seed derivation as [`synth_trace_set`].
pub fn trace_seed(seed: u64, j: u8) -> u64 {
    rng::derive(seed, &format!("trace-{j}"))
}

pub fn simulate_storage_retrieval(cfg: &RunConfig, seqs: &[u8], outs: &mut Outputs) -> Result<()> {
    let dir = out_dir(cfg, "traces")?;
    let mut manifest = Vec::new();
    for &j in seqs {
        let seq = BitSequence::from_decimal(j)?;
        let trace = synth_storage_retrieval(&seq, &cfg.timing, &cfg.model, trace_seed(cfg.seed, j))?;
        let file = format!("seq_{j:02}.csv");
        write_raw_trace(&trace, &outs.add(dir.join(&file)))?;
        manifest.push(manifest_for(&trace, &file));
    }
    write_manifest(&manifest, &outs.add(dir.join("manifest.json")))?;
    println!("wrote {} storage/retrieval traces to {}", seqs.len(), dir.display());
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct HahnEntry {
    file: String,
    phi_half: f64,
    phi_pi: f64,
    dt: f64,
    t0: f64,
    len: usize,
}

/// One I/Q trace per (φ_π/2, φ_π) pair.
pub fn simulate_hahn(cfg: &RunConfig, settings: &[(f64, f64)], outs: &mut Outputs) -> Result<()> {
    let dir = out_dir(cfg, "hahn")?;
    let mut manifest = Vec::new();
    for (k, &(half, pi)) in settings.iter().enumerate() {
        let trace = synth_hahn(half, pi, &cfg.hahn, &cfg.model, rng::derive(cfg.seed, &format!("hahn-{k}")))?;
        let file = format!("hahn_{k:03}.csv");
        write_iq_trace(&trace, &outs.add(dir.join(&file)))?;
        manifest.push(HahnEntry {
            file,
            phi_half: half,
            phi_pi: pi,
            dt: trace.dt,
            t0: trace.t0,
            len: trace.len(),
        });
    }
    let path = outs.add(dir.join("manifest.json"));
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    println!("wrote {} Hahn I/Q traces to {}", settings.len(), dir.display());
    Ok(())
}

/// Parses `start:end:step` into the half-open grid.
pub fn parse_range(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, b, s] = parts[..] else {
        bail!("expected start:end:step, found {spec:?}");
    };
    let num = |x: &str| x.trim().parse::<f64>().with_context(|| format!("bad number {x:?} in {spec:?}"));
    Ok(phase_grid(num(a)?, num(b)?, num(s)?)?)
}

#[derive(Serialize)]
struct TrainOutput<'a> {
    head: &'static str,
    report: &'a TrainReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    held_out_mae_deg: Option<f64>,
}

pub fn train_model(cfg: &RunConfig, head: Head, outs: &mut Outputs) -> Result<()> {
    let dir = out_dir(cfg, "")?;
    let (name, net, report, mae) = match head {
        Head::Classifier => {
            let (net, report) = train_classifier(&cfg.classifier_recipe()?, &cfg.timing, &cfg.model, cfg.seed)?;
            ("classifier", net, report, None)
        }
        Head::Regressor => {
            let recipe = cfg.phase_recipe()?;
            let (net, report) = train_phase(&recipe, &cfg.hahn, &cfg.model, cfg.seed)?;
            // Held-out phases fall between the training grid points.
            let held = phase_grid(recipe.step_deg / 2.0, 360.0, recipe.step_deg.max(4.0))?;
            let items = gen_phase_dataset(&held, &cfg.hahn, &cfg.model, rng::derive(cfg.seed, "phase-held-out"))?;
            let mae = mean_abs_error(&net, &items, cfg.model.carrier_mhz)?;
            ("phase", net, report, Some(mae))
        }
    };
    save_model(&net, &outs.add(dir.join(format!("{name}.json"))))?;
    let out = TrainOutput {
        head: name,
        report: &report,
        held_out_mae_deg: mae,
    };
    fs::write(outs.add(dir.join(format!("{name}_report.json"))), serde_json::to_string_pretty(&out)?)?;
    println!("J = {:.4e}", report.final_test_loss);
    if let Some(acc) = report.accuracy {
        println!("accuracy = {acc:.4}");
    }
    if let Some(mae) = mae {
        println!("held-out MAE = {mae:.2} deg");
    }
    println!("wall time = {:.1} s", report.wall_time_s);
    Ok(())
}

fn load_head(path: &Path, head: Head) -> Result<DenseNetwork> {
    let net = load_model(path).with_context(|| format!("cannot load model {}", path.display()))?;
    ensure!(
        net.head == head,
        "{} is a {} model, expected {}",
        path.display(),
        net.head.name(),
        head.name()
    );
    Ok(net)
}

/// The classifier from `model`, or a fresh one trained from the config.
pub fn classifier_or_train(cfg: &RunConfig, model: Option<&Path>) -> Result<DenseNetwork> {
    match model {
        Some(p) => load_head(p, Head::Classifier),
        None => Ok(train_classifier(&cfg.classifier_recipe()?, &cfg.timing, &cfg.model, cfg.seed)?.0),
    }
}

/// Reads a trace directory written by `simulate storage-retrieval`.
pub fn read_trace_dir(dir: &Path) -> Result<TraceSet> {
    let manifest = read_manifest(&dir.join("manifest.json"))
        .with_context(|| format!("cannot read {}", dir.join("manifest.json").display()))?;
    let mut set = TraceSet::new();
    for entry in &manifest {
        let j: u8 = entry
            .meta
            .split_whitespace()
            .find_map(|f| f.strip_prefix("seq="))
            .and_then(|v| v.parse().ok())
            .with_context(|| format!("manifest entry {} has no seq= tag", entry.file))?;
        set.insert(j, read_raw_trace(&dir.join(&entry.file), Some(entry))?);
    }
    Ok(set)
}

fn trace_set(cfg: &RunConfig, traces: Option<&Path>) -> Result<TraceSet> {
    let set = match traces {
        Some(dir) => read_trace_dir(dir)?,
        None => synth_trace_set(&cfg.timing, &cfg.model, cfg.seed)?,
    };
    require_all(&set)?;
    Ok(set)
}

pub fn recognize(cfg: &RunConfig, model: Option<&Path>, traces: Option<&Path>, outs: &mut Outputs) -> Result<()> {
    let set = trace_set(cfg, traces)?;
    let net = classifier_or_train(cfg, model)?;
    let rcfg = cfg.recognition(net.input_dim());
    let dir = out_dir(cfg, "ptraces")?;
    for (j, pt) in probability_traces(&net, &set, &rcfg)?.iter().enumerate() {
        write_probability_trace(pt, &outs.add(dir.join(format!("seq_{j:02}.csv"))))?;
    }
    let report = full_protocol_report(&net, &set, &cfg.timing, &rcfg)?;
    let root = out_dir(cfg, "")?;
    report.write_json(&outs.add(root.join("fidelity.json")))?;
    report.write_csv(&outs.add(root.join("fidelity.csv")))?;
    println!("success = {:.1} % ({} wrong bits of 64)", report.success_percent(), report.wrong_bits());
    for i in 0..report.f_avg.len() {
        println!("F{} = {:.2} ± {:.2} %", i + 1, report.f_avg[i], report.f_std[i]);
    }
    Ok(())
}

pub fn benchmark(cfg: &RunConfig, model: Option<&Path>, traces: Option<&Path>, outs: &mut Outputs) -> Result<()> {
    let set = trace_set(cfg, traces)?;
    let net = classifier_or_train(cfg, model)?;
    let bcfg = BaselineConfig::new(&cfg.timing, cfg.model.noise_sigma, cfg.recognition(net.input_dim()));
    let scores = scoreboard(&net, &set, &cfg.timing, &bcfg)?;
    let dir = out_dir(cfg, "")?;
    write_scoreboard_csv(&scores, &outs.add(dir.join("scoreboard.csv")))?;
    let text = scoreboard_text(&scores);
    fs::write(outs.add(dir.join("scoreboard.txt")), &text)?;
    print!("{text}");

    let sweep = threshold_sweep(&set, &cfg.timing, &cfg.thresholds())?;
    let path = outs.add(dir.join("threshold_sweep.csv"));
    let mut rows = String::from("threshold,wrong_bits\n");
    for (t, e) in sweep.thresholds.iter().zip(&sweep.errors) {
        rows.push_str(&format!("{t},{e}\n"));
    }
    fs::write(&path, rows)?;
    println!(
        "raw threshold search: best threshold {} with {} wrong bits of 64",
        sweep.best_threshold, sweep.best_errors
    );
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepMode {
    SweepPi2,
    SweepPi,
}

pub fn phase(cfg: &RunConfig, model: Option<&Path>, mode: SweepMode, bias: f64, step: f64, outs: &mut Outputs) -> Result<()> {
    let net = match model {
        Some(p) => load_head(p, Head::Regressor)?,
        None => train_phase(&cfg.phase_recipe()?, &cfg.hahn, &cfg.model, cfg.seed)?.0,
    };
    let grid = phase_grid(0.0, 360.0, step)?;
    let setup = HahnSetup {
        timing: cfg.hahn,
        model: cfg.model,
        seed: rng::derive(cfg.seed, "phase-sweep"),
    };
    let (name, result) = match mode {
        SweepMode::SweepPi2 => ("sweep_pi2", sweep_pi2(&net, &grid, bias, &setup)?),
        SweepMode::SweepPi => {
            ensure!(bias == 0.0, "--bias applies to sweep-pi2 only");
            ("sweep_pi", sweep_pi(&net, &grid, &setup)?)
        }
    };
    let dir = out_dir(cfg, "")?;
    write_sweep_csv(&result, &outs.add(dir.join(format!("{name}.csv"))))?;
    let summary = sweep_summary(&result);
    fs::write(outs.add(dir.join(format!("{name}.txt"))), &summary)?;
    print!("{summary}");
    Ok(())
}
