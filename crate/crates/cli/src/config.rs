//! Run configuration as flat `key=value` text over nested defaults.
//!
//! Keys are dotted paths into [`RunConfig`] (`model.noise_sigma`,
//! `classifier.epochs`, ...). Lists are comma separated. Blank lines and
//! lines starting with `#` are ignored. Unknown keys are errors.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Number, Value};

use echo_readout::neural::{Optimizer, TrainConfig};
use echo_readout::pipeline::{ClassifierRecipe, PhaseRecipe};
use echo_readout::recognition::{KMeansConfig, RecognitionConfig, STRIDE};
use echo_readout::rng;
use echo_readout::sim::{HahnTiming, SequenceTiming, SignalModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub model: SignalModel,
    pub timing: SequenceTiming,
    pub hahn: HahnTiming,
    pub classifier: ClassifierSection,
    pub phase: PhaseSection,
    pub recognition: RecognitionSection,
    pub baselines: BaselineSection,
}

/// Optimizer settings shared by both training recipes. The training seed is
/// not configurable on its own: it is derived from the global seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// `adam` or `sgd`; the betas and eps only matter for adam.
    pub optimizer: String,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub validation_fraction: f64,
}

impl TrainSection {
    fn from_core(cfg: &TrainConfig) -> Self {
        let (beta1, beta2, eps) = match Optimizer::default() {
            Optimizer::Adam { beta1, beta2, eps } => (beta1, beta2, eps),
            Optimizer::Sgd => unreachable!("adam is the default optimizer"),
        };
        let (optimizer, beta1, beta2, eps) = match cfg.optimizer {
            Optimizer::Adam { beta1, beta2, eps } => ("adam", beta1, beta2, eps),
            Optimizer::Sgd => ("sgd", beta1, beta2, eps),
        };
        Self {
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
            learning_rate: cfg.learning_rate,
            optimizer: optimizer.to_string(),
            beta1,
            beta2,
            eps,
            validation_fraction: cfg.validation_fraction,
        }
    }

    pub fn to_core(&self) -> Result<TrainConfig> {
        let optimizer = match self.optimizer.as_str() {
            "adam" => Optimizer::Adam {
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
            },
            "sgd" => Optimizer::Sgd,
            other => bail!("unknown optimizer {other:?}, expected adam or sgd"),
        };
        let cfg = TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            optimizer,
            seed: 0,
            validation_fraction: self.validation_fraction,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSection {
    pub n_per_class: usize,
    pub window_len: usize,
    pub hidden: Vec<usize>,
    #[serde(flatten)]
    pub train: TrainSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSection {
    pub step_deg: f64,
    pub hidden: Vec<usize>,
    #[serde(flatten)]
    pub train: TrainSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecognitionSection {
    pub stride: usize,
    pub kmeans_max_iter: usize,
    pub kmeans_restarts: usize,
}

/// Grid of the raw-threshold sweep, `min, min+step, ...` up to `max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineSection {
    pub threshold_min: f64,
    pub threshold_max: f64,
    pub threshold_step: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let clf = ClassifierRecipe::default();
        let ph = PhaseRecipe::default();
        let km = KMeansConfig::default();
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            model: SignalModel::default(),
            timing: SequenceTiming::default(),
            hahn: HahnTiming::default(),
            classifier: ClassifierSection {
                n_per_class: clf.n_per_class,
                window_len: clf.window_len,
                hidden: clf.hidden,
                train: TrainSection::from_core(&clf.train),
            },
            phase: PhaseSection {
                step_deg: ph.step_deg,
                hidden: ph.hidden,
                train: TrainSection::from_core(&ph.train),
            },
            recognition: RecognitionSection {
                stride: STRIDE,
                kmeans_max_iter: km.max_iter,
                kmeans_restarts: km.restarts,
            },
            baselines: BaselineSection {
                threshold_min: 0.01,
                threshold_max: 0.6,
                threshold_step: 0.01,
            },
        }
    }
}

/// Parses `key=value` lines into ordered pairs.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .with_context(|| format!("line {}: expected key=value, found {line:?}", n + 1))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

pub fn parse_pair(arg: &str) -> Result<(String, String)> {
    let (k, v) = arg.split_once('=').with_context(|| format!("expected key=value, found {arg:?}"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, String>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        Value::Array(items) => {
            let parts: Vec<String> = items.iter().map(render).collect();
            out.insert(prefix.to_string(), parts.join(","));
        }
        other => {
            out.insert(prefix.to_string(), render(other));
        }
    }
}

fn render(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Parses `raw` into a value of the same JSON type as `current`.
fn typed(key: &str, raw: &str, current: &Value) -> Result<Value> {
    let bad = |what: &str| format!("{key}: cannot parse {raw:?} as {what}");
    Ok(match current {
        Value::Number(n) if n.is_f64() => {
            let x: f64 = raw.parse().with_context(|| bad("a number"))?;
            Value::Number(Number::from_f64(x).with_context(|| bad("a finite number"))?)
        }
        Value::Number(_) => Value::from(raw.parse::<u64>().with_context(|| bad("a non-negative integer"))?),
        Value::Bool(_) => Value::Bool(raw.parse().with_context(|| bad("true or false"))?),
        Value::String(_) => Value::String(raw.to_string()),
        Value::Array(_) => {
            let items: Result<Vec<Value>> = raw
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| Ok(Value::from(s.trim().parse::<u64>().with_context(|| bad("a comma-separated list of integers"))?)))
                .collect();
            Value::Array(items?)
        }
        _ => bail!("{key} is a section, not a value"),
    })
}

impl RunConfig {
    /// Applies overrides in order; later pairs win.
    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        let mut tree = serde_json::to_value(&*self)?;
        for (key, raw) in pairs {
            let pointer = format!("/{}", key.replace('.', "/"));
            let slot = tree
                .pointer_mut(&pointer)
                .filter(|_| !key.is_empty())
                .with_context(|| format!("unknown config key {key:?}"))?;
            *slot = typed(key, raw, slot)?;
        }
        *self = serde_json::from_value(tree)?;
        Ok(())
    }

    /// Every key with its effective value, sorted by key.
    pub fn to_pairs(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        flatten("", &serde_json::to_value(self).expect("config serializes"), &mut out);
        out
    }

    pub fn to_text(&self) -> String {
        self.to_pairs().iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.timing.validate()?;
        self.hahn.validate()?;
        self.classifier.train.to_core()?;
        self.phase.train.to_core()?;
        if self.classifier.window_len == 0 {
            bail!("classifier.window_len must be at least 1");
        }
        if !(self.phase.step_deg > 0.0) {
            bail!("phase.step_deg must be positive");
        }
        if self.recognition.stride == 0 {
            bail!("recognition.stride must be at least 1");
        }
        let b = &self.baselines;
        if !(b.threshold_step > 0.0 && b.threshold_max >= b.threshold_min) {
            bail!("baselines: need threshold_step > 0 and threshold_max >= threshold_min");
        }
        Ok(())
    }

    pub fn classifier_recipe(&self) -> Result<ClassifierRecipe> {
        Ok(ClassifierRecipe {
            n_per_class: self.classifier.n_per_class,
            window_len: self.classifier.window_len,
            hidden: self.classifier.hidden.clone(),
            train: self.classifier.train.to_core()?,
        })
    }

    pub fn phase_recipe(&self) -> Result<PhaseRecipe> {
        Ok(PhaseRecipe {
            step_deg: self.phase.step_deg,
            hidden: self.phase.hidden.clone(),
            train: self.phase.train.to_core()?,
        })
    }

    /// Recognition settings for a classifier with `window_len` inputs.
    pub fn recognition(&self, window_len: usize) -> RecognitionConfig {
        RecognitionConfig {
            window_len,
            stride: self.recognition.stride,
            kmeans: KMeansConfig {
                max_iter: self.recognition.kmeans_max_iter,
                restarts: self.recognition.kmeans_restarts,
            },
            seed: rng::derive(self.seed, "recognition"),
        }
    }

    pub fn thresholds(&self) -> Vec<f64> {
        let b = &self.baselines;
        let n = ((b.threshold_max - b.threshold_min) / b.threshold_step + 1e-9).floor() as usize;
        (0..=n).map(|k| b.threshold_min + k as f64 * b.threshold_step).collect()
    }
}
