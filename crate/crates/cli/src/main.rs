//! `echo-readout`: simulate, train, recognize, benchmark and phase runs.

mod commands;
mod config;

use std::path::PathBuf;

use anyhow::{ensure, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use commands::{Outputs, SweepMode};
use config::{parse_pair, parse_pairs, RunConfig};
use echo_readout::neural::Head;

#[derive(Parser)]
#[command(name = "echo-readout", version, about = "Neural-network readout of synthetic spin echoes")]
struct Cli {
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Noise standard deviation, in the units of the echo amplitude.
    #[arg(long, global = true)]
    noise: Option<f64>,
    /// Override any config key; repeatable. Goes before the subcommand.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic traces as CSV plus a manifest.
    Simulate {
        #[command(subcommand)]
        which: Simulate,
    },
    /// Train a model and write it with its training report.
    Train {
        #[arg(value_enum)]
        head: TrainHead,
    },
    /// Probability traces and bit fidelities for all 16 sequences.
    Recognize {
        /// Classifier file; trained from the config when absent.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Directory written by `simulate storage-retrieval --all`; synthesized when absent.
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    /// Scoreboard of all readout methods on one shared trace set.
    Benchmark {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    /// Sweep a pulse phase and regress the echo phase.
    Phase {
        /// Phase regressor file; trained from the config when absent.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "sweep-pi2")]
        mode: SweepMode,
        /// Offset added to the swept π/2 phase, degrees.
        #[arg(long, default_value_t = 0.0)]
        bias: f64,
        /// Sweep step, degrees.
        #[arg(long, default_value_t = 10.0)]
        steps: f64,
    },
}

#[derive(Subcommand)]
enum Simulate {
    /// Echo trains of the four-bit Storage/Retrieval protocol.
    StorageRetrieval {
        /// Sequence number j in 0..=15.
        #[arg(long, required_unless_present = "all", conflicts_with = "all")]
        seq: Option<u8>,
        /// All 16 sequences.
        #[arg(long)]
        all: bool,
    },
    /// Hahn echo I/Q traces.
    Hahn {
        /// Sweep the π/2 phase over start:end:step degrees.
        #[arg(long, value_name = "RANGE", conflicts_with = "sweep_pi")]
        sweep_pi2: Option<String>,
        /// Sweep the π phase over start:end:step degrees.
        #[arg(long, value_name = "RANGE")]
        sweep_pi: Option<String>,
        /// π/2 phase when it is not swept.
        #[arg(long, default_value_t = 0.0)]
        phi_half: f64,
        /// π phase when it is not swept.
        #[arg(long, default_value_t = 0.0)]
        phi_pi: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TrainHead {
    Classifier,
    Phase,
}

/// Defaults, then the config file, then command-line overrides.
fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        cfg.apply(&parse_pairs(&text).with_context(|| format!("in {}", path.display()))?)?;
    }
    let mut pairs = Vec::new();
    if let Some(seed) = cli.seed {
        pairs.push(("seed".to_string(), seed.to_string()));
    }
    if let Some(out) = &cli.out {
        pairs.push(("out".to_string(), out.display().to_string()));
    }
    if let Some(noise) = cli.noise {
        pairs.push(("model.noise_sigma".to_string(), noise.to_string()));
    }
    for s in &cli.set {
        pairs.push(parse_pair(s)?);
    }
    cfg.apply(&pairs)?;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli)?;
    let mut outs = Outputs::default();
    commands::echo_config(&cfg, &mut outs)?;
    match cli.command {
        Command::Simulate { which } => match which {
            Simulate::StorageRetrieval { seq, all } => {
                let seqs: Vec<u8> = if all { (0..16).collect() } else { seq.into_iter().collect() };
                commands::simulate_storage_retrieval(&cfg, &seqs, &mut outs)?;
            }
            Simulate::Hahn {
                sweep_pi2,
                sweep_pi,
                phi_half,
                phi_pi,
            } => {
                let settings: Vec<(f64, f64)> = match (sweep_pi2, sweep_pi) {
                    (Some(r), _) => commands::parse_range(&r)?.into_iter().map(|h| (h, phi_pi)).collect(),
                    (None, Some(r)) => commands::parse_range(&r)?.into_iter().map(|p| (phi_half, p)).collect(),
                    (None, None) => vec![(phi_half, phi_pi)],
                };
                commands::simulate_hahn(&cfg, &settings, &mut outs)?;
            }
        },
        Command::Train { head } => {
            let head = match head {
                TrainHead::Classifier => Head::Classifier,
                TrainHead::Phase => Head::Regressor,
            };
            commands::train_model(&cfg, head, &mut outs)?;
        }
        Command::Recognize { model, traces } => {
            commands::recognize(&cfg, model.as_deref(), traces.as_deref(), &mut outs)?;
        }
        Command::Benchmark { model, traces } => {
            commands::benchmark(&cfg, model.as_deref(), traces.as_deref(), &mut outs)?;
        }
        Command::Phase {
            model,
            mode,
            bias,
            steps,
        } => {
            ensure!(steps > 0.0, "--steps must be positive");
            commands::phase(&cfg, model.as_deref(), mode, bias, steps, &mut outs)?;
        }
    }
    let n = outs.validate()?;
    eprintln!("{n} outputs written to {}", cfg.out.display());
    Ok(())
}

fn main() -> Result<()> {
    run(Cli::parse())
}
