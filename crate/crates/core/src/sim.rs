//! Phenomenological synthesis of Storage/Retrieval echo trains and Hahn echoes.
//!
//! Each echo is a Gaussian envelope, truncated to its support of
//! `±SUPPORT_SIGMAS · env_sigma`, riding a down-converted carrier. Its peak
//! amplitude decays as `exp(-precession / t_m)`, where `precession` is the
//! time from the source pulse center to the echo center.

use std::f64::consts::PI;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng;

/// Half-width of an echo support in units of `env_sigma`.
pub const SUPPORT_SIGMAS: f64 = 2.0;

/// Trace margin beyond the outermost possible echo, in units of `env_sigma`.
pub const MARGIN_SIGMAS: f64 = 8.0;

/// Number of input pulse slots in the Storage/Retrieval protocol.
pub const N_SLOTS: usize = 4;

/// Input-train and refocusing timings of the Storage/Retrieval sequence, in ns.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceTiming {
    pub t_p: f64,
    pub t_d: f64,
    pub tau: f64,
    pub t_pi: f64,
    pub n_slots: usize,
}

impl Default for SequenceTiming {
    fn default() -> Self {
        Self {
            t_p: 40.0,
            t_d: 300.0,
            tau: 1200.0,
            t_pi: 190.0,
            n_slots: N_SLOTS,
        }
    }
}

impl SequenceTiming {
    pub fn validate(&self) -> Result<()> {
        positive("t_p", self.t_p)?;
        positive("t_d", self.t_d)?;
        positive("tau", self.tau)?;
        positive("t_pi", self.t_pi)?;
        if self.n_slots != N_SLOTS {
            return Err(invalid("n_slots", format!("must be {N_SLOTS}, got {}", self.n_slots)));
        }
        if self.echo_center(1) <= 0.0 {
            return Err(invalid("tau", "echo positions must be positive"));
        }
        Ok(())
    }

    /// Center of input pulse `i` (1-based, storage order).
    pub fn pulse_center(&self, i: usize) -> f64 {
        (i - 1) as f64 * self.spacing() + self.t_p / 2.0
    }

    pub fn pi_center(&self) -> f64 {
        let last_end = (self.n_slots - 1) as f64 * self.spacing() + self.t_p;
        last_end + self.tau + self.t_pi / 2.0
    }

    /// Echo of pulse `i`: its center mirrored about the π-pulse center.
    pub fn echo_center(&self, i: usize) -> f64 {
        2.0 * self.pi_center() - self.pulse_center(i)
    }

    /// Distance between consecutive pulses, and between consecutive echoes.
    pub fn spacing(&self) -> f64 {
        self.t_p + self.t_d
    }
}

/// Hahn sequence timings in ns. `tau` is measured between pulse centers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HahnTiming {
    pub t_pi2: f64,
    pub t_pi: f64,
    pub tau: f64,
}

impl Default for HahnTiming {
    fn default() -> Self {
        Self {
            t_pi2: 145.0,
            t_pi: 180.0,
            tau: 750.0,
        }
    }
}

impl HahnTiming {
    pub fn validate(&self) -> Result<()> {
        positive("t_pi2", self.t_pi2)?;
        positive("t_pi", self.t_pi)?;
        positive("tau", self.tau)
    }

    pub fn pi2_center(&self) -> f64 {
        self.t_pi2 / 2.0
    }

    pub fn echo_center(&self) -> f64 {
        self.pi2_center() + 2.0 * self.tau
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalModel {
    /// Echo peak amplitude at zero precession time.
    pub amp0: f64,
    /// Phase memory time, ns.
    pub t_m: f64,
    /// Gaussian envelope width, ns.
    pub env_sigma: f64,
    pub carrier_mhz: f64,
    pub noise_sigma: f64,
    /// Sample interval, ns.
    pub dt: f64,
}

impl Default for SignalModel {
    fn default() -> Self {
        Self {
            amp0: 1.0,
            t_m: 2500.0,
            env_sigma: 60.0,
            carrier_mhz: 90.0,
            noise_sigma: 0.05,
            dt: 1.0,
        }
    }
}

impl SignalModel {
    pub fn validate(&self) -> Result<()> {
        positive("amp0", self.amp0)?;
        positive("t_m", self.t_m)?;
        positive("env_sigma", self.env_sigma)?;
        positive("dt", self.dt)?;
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(invalid("noise_sigma", "must be finite and non-negative"));
        }
        if !(self.carrier_mhz.is_finite() && self.carrier_mhz >= 0.0) {
            return Err(invalid("carrier_mhz", "must be finite and non-negative"));
        }
        if self.samples_per_period() < 4.0 {
            return Err(invalid(
                "carrier_mhz",
                format!(
                    "{} samples per carrier period, need at least 4",
                    self.samples_per_period()
                ),
            ));
        }
        Ok(())
    }

    pub fn samples_per_period(&self) -> f64 {
        1e3 / (self.carrier_mhz * self.dt)
    }

    /// Carrier angular frequency in rad/ns.
    pub fn omega(&self) -> f64 {
        2.0 * PI * self.carrier_mhz * 1e-3
    }

    pub fn with_noise(mut self, noise_sigma: f64) -> Self {
        self.noise_sigma = noise_sigma;
        self
    }

    /// Decayed, truncated Gaussian envelope of an echo.
    pub fn envelope(&self, t: f64, center: f64, precession: f64) -> f64 {
        let x = (t - center) / self.env_sigma;
        if x.abs() > SUPPORT_SIGMAS {
            return 0.0;
        }
        self.peak_amplitude(precession) * (-0.5 * x * x).exp()
    }

    pub fn peak_amplitude(&self, precession: f64) -> f64 {
        self.amp0 * (-precession / self.t_m).exp()
    }

    pub fn support_half_width(&self) -> f64 {
        SUPPORT_SIGMAS * self.env_sigma
    }

    /// Width of one echo support in samples.
    pub fn support_samples(&self) -> usize {
        (2.0 * self.support_half_width() / self.dt).round() as usize
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and > 0, got {v}")))
    }
}

/// A 4-bit input pattern. `bits[0]` is input pulse i=1, the most significant bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitSequence {
    pub bits: [u8; N_SLOTS],
}

impl BitSequence {
    pub fn from_decimal(j: u8) -> Result<Self> {
        if j > 15 {
            return Err(invalid("sequence", format!("decimal {j} outside 0..=15")));
        }
        let mut bits = [0u8; N_SLOTS];
        for (k, b) in bits.iter_mut().enumerate() {
            *b = (j >> (N_SLOTS - 1 - k)) & 1;
        }
        Ok(Self { bits })
    }

    pub fn from_bits(bits: [u8; N_SLOTS]) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(invalid("bits", "values must be 0 or 1"));
        }
        Ok(Self { bits })
    }

    pub fn decimal(&self) -> u8 {
        self.bits.iter().fold(0, |acc, &b| (acc << 1) | b)
    }

    /// Nominal value of bit `i` (1-based).
    pub fn bit(&self, i: usize) -> u8 {
        self.bits[i - 1]
    }

    pub fn reversed(&self) -> Self {
        let mut bits = self.bits;
        bits.reverse();
        Self { bits }
    }

    pub fn all() -> impl Iterator<Item = BitSequence> {
        (0..16u8).map(|j| BitSequence::from_decimal(j).expect("j < 16"))
    }
}

impl std::fmt::Display for BitSequence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for b in self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawTrace {
    pub samples: Vec<f64>,
    pub dt: f64,
    pub t0: f64,
    pub meta: String,
}

impl RawTrace {
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSetting {
    pub phi_half: f64,
    pub phi_pi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IqTrace {
    pub i_samples: Vec<f64>,
    pub q_samples: Vec<f64>,
    pub dt: f64,
    pub t0: f64,
    pub meta: PhaseSetting,
}

impl IqTrace {
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn len(&self) -> usize {
        self.i_samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i_samples.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduledEcho {
    pub center: f64,
    pub precession: f64,
    /// Input index i (1-based) of the pulse that produced the echo.
    pub source: usize,
}

/// Echoes of the ON pulses of `seq`, sorted by echo time.
pub fn echo_schedule(seq: &BitSequence, timing: &SequenceTiming) -> Vec<ScheduledEcho> {
    let mut echoes: Vec<ScheduledEcho> = (1..=N_SLOTS)
        .filter(|&i| seq.bit(i) == 1)
        .map(|i| {
            let center = timing.echo_center(i);
            ScheduledEcho {
                center,
                precession: center - timing.pulse_center(i),
                source: i,
            }
        })
        .collect();
    echoes.sort_by(|a, b| a.center.total_cmp(&b.center));
    echoes
}

/// Sample grid shared by every Storage/Retrieval trace for a given timing:
/// all four possible echoes plus a margin on each side.
pub fn retrieval_grid(timing: &SequenceTiming, model: &SignalModel) -> (f64, usize) {
    let margin = MARGIN_SIGMAS * model.env_sigma;
    let first = timing.echo_center(N_SLOTS) - margin;
    let last = timing.echo_center(1) + margin;
    let t0 = (first / model.dt).floor() * model.dt;
    let n = ((last - t0) / model.dt).ceil() as usize + 1;
    (t0, n)
}

fn add_noise(samples: &mut [f64], sigma: f64, rng: &mut impl rand::Rng) {
    if sigma == 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated finite and >= 0");
    for s in samples {
        *s += normal.sample(rng);
    }
}

pub fn synth_storage_retrieval(
    seq: &BitSequence,
    timing: &SequenceTiming,
    model: &SignalModel,
    rng_seed: u64,
) -> Result<RawTrace> {
    timing.validate()?;
    model.validate()?;
    let (t0, n) = retrieval_grid(timing, model);
    let echoes = echo_schedule(seq, timing);
    let omega = model.omega();
    let mut samples: Vec<f64> = (0..n)
        .map(|k| {
            let t = t0 + k as f64 * model.dt;
            let env: f64 = echoes
                .iter()
                .map(|e| model.envelope(t, e.center, e.precession))
                .sum();
            env * (omega * t).cos()
        })
        .collect();
    let mut rng = rng::from_seed(rng_seed);
    add_noise(&mut samples, model.noise_sigma, &mut rng);
    Ok(RawTrace {
        samples,
        dt: model.dt,
        t0,
        meta: format!("seq={} bits={}", seq.decimal(), seq),
    })
}

/// Echo phase in degrees, in [0, 360), for the given pulse phases.
pub fn echo_phase_deg(phi_half: f64, phi_pi: f64) -> f64 {
    (2.0 * phi_pi - phi_half).rem_euclid(360.0)
}

/// Sample grid of a Hahn trace: `±8 env_sigma` around the echo.
pub fn hahn_grid(timing: &HahnTiming, model: &SignalModel) -> (f64, usize) {
    let half = 8.0 * model.env_sigma;
    let t0 = timing.echo_center() - half;
    let n = (2.0 * half / model.dt).round() as usize + 1;
    (t0, n)
}

pub fn synth_hahn(
    phi_half: f64,
    phi_pi: f64,
    timing: &HahnTiming,
    model: &SignalModel,
    rng_seed: u64,
) -> Result<IqTrace> {
    timing.validate()?;
    model.validate()?;
    if !(phi_half.is_finite() && phi_pi.is_finite()) {
        return Err(invalid("phase", "pulse phases must be finite"));
    }
    let (t0, n) = hahn_grid(timing, model);
    let center = timing.echo_center();
    let precession = center - timing.pi2_center();
    let phase = echo_phase_deg(phi_half, phi_pi).to_radians();
    let omega = model.omega();
    let (mut i_samples, mut q_samples): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|k| {
            let t = t0 + k as f64 * model.dt;
            let a = model.envelope(t, center, precession);
            let arg = omega * t + phase;
            (a * arg.cos(), a * arg.sin())
        })
        .unzip();
    let mut rng = rng::from_seed(rng_seed);
    add_noise(&mut i_samples, model.noise_sigma, &mut rng);
    add_noise(&mut q_samples, model.noise_sigma, &mut rng);
    Ok(IqTrace {
        i_samples,
        q_samples,
        dt: model.dt,
        t0,
        meta: PhaseSetting { phi_half, phi_pi },
    })
}
