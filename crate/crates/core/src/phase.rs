//! Hahn-echo phase: window extraction, quadrature oracle, neural regression
//! and phase sweeps.
//!
//! The regressor never sees absolute time, so it is trained to report the
//! *local* carrier phase at the window center, `φ_echo + ω·t_center`, encoded
//! as `(cos, sin)`. [`predict_phase`] removes `ω·t_center` again using the
//! window's timestamp. This keeps predictions independent of where the
//! argmax lands on a noisy envelope.

use serde::{Deserialize, Serialize};

use crate::circular::{angular_error, circular_linear_fit, circular_mean, signed_diff, wrap360};
use crate::error::{invalid, Error, Result};
use crate::neural::{self, Dataset, DenseNetwork, Head, TrainConfig, TrainReport};
use crate::par::{self, Exec};
use crate::signal::{rms_envelope, whole_period_len};
use crate::sim::{echo_phase_deg, synth_hahn, HahnTiming, IqTrace, SignalModel};
use crate::rng;

/// Samples taken on each side of the I-channel envelope maximum.
pub const HALF_WIDTH: usize = 40;
pub const WINDOW_LEN: usize = 2 * HALF_WIDTH;
/// Regressor input: I window followed by Q window.
pub const INPUT_LEN: usize = 2 * WINDOW_LEN;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseWindow {
    pub i_window: Vec<f64>,
    pub q_window: Vec<f64>,
    /// Time of sample `HALF_WIDTH`, the envelope maximum.
    pub center_time: f64,
    pub dt: f64,
}

impl PhaseWindow {
    pub fn time(&self, k: usize) -> f64 {
        self.center_time + (k as f64 - HALF_WIDTH as f64) * self.dt
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            i_window: self.i_window.iter().map(|v| v * factor).collect(),
            q_window: self.q_window.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}

/// Smoothing length for envelope peak search: the shortest whole number of
/// carrier periods, which cancels the carrier ripple.
pub fn envelope_len(model_dt: f64, carrier_mhz: f64) -> usize {
    whole_period_len(1e3 / (carrier_mhz * model_dt), 16)
}

/// Cuts the 40+40-sample window around the smoothed |I| envelope maximum.
pub fn extract_echo_window(trace: &IqTrace, carrier_mhz: f64, noise_sigma: f64) -> Result<PhaseWindow> {
    if trace.is_empty() || trace.q_samples.len() != trace.len() {
        return Err(Error::DimensionMismatch {
            expected: trace.len(),
            got: trace.q_samples.len(),
        });
    }
    let env = rms_envelope(&trace.i_samples, envelope_len(trace.dt, carrier_mhz));
    let (peak, peak_val) = env
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (k, &v)| if v > b.1 { (k, v) } else { b });
    let threshold = 3.0 * noise_sigma;
    if !(peak_val > threshold) {
        return Err(Error::NoEcho {
            threshold,
            peak: peak_val,
        });
    }
    if peak < HALF_WIDTH || peak + HALF_WIDTH > trace.len() {
        return Err(Error::EchoAtEdge {
            index: peak,
            half_width: HALF_WIDTH,
            len: trace.len(),
        });
    }
    let range = peak - HALF_WIDTH..peak + HALF_WIDTH;
    Ok(PhaseWindow {
        i_window: trace.i_samples[range.clone()].to_vec(),
        q_window: trace.q_samples[range].to_vec(),
        center_time: trace.time(peak),
        dt: trace.dt,
    })
}

/// Quadrature demodulation at the carrier: rotate `I + jQ` by `-ωt`, average
/// over the central whole number of carrier periods, and take the angle.
pub fn oracle_phase(window: &PhaseWindow, carrier_mhz: f64) -> Result<f64> {
    let spp = 1e3 / (carrier_mhz * window.dt);
    if !(spp >= 4.0) || !spp.is_finite() {
        return Err(invalid("carrier_mhz", format!("{spp} samples per period is not resolvable")));
    }
    let n = window.i_window.len();
    let periods = (n as f64 / spp).floor().max(1.0);
    let used = ((periods * spp).round() as usize).min(n);
    let start = (n - used) / 2;
    let omega = 2.0 * std::f64::consts::PI * carrier_mhz * 1e-3;
    let (re, im) = (start..start + used).fold((0.0, 0.0), |(re, im), k| {
        let (s, c) = (omega * window.time(k)).sin_cos();
        let (i, q) = (window.i_window[k], window.q_window[k]);
        // (i + jq)(c - js)
        (re + i * c + q * s, im + q * c - i * s)
    });
    Ok(wrap360(im.atan2(re).to_degrees()))
}

/// Regressor input: both channels divided by their joint max |value|.
pub fn phase_input(window: &PhaseWindow) -> Vec<f64> {
    let peak = window
        .i_window
        .iter()
        .chain(&window.q_window)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
    window
        .i_window
        .iter()
        .chain(&window.q_window)
        .map(|v| v * scale)
        .collect()
}

fn center_rotation_deg(window: &PhaseWindow, carrier_mhz: f64) -> f64 {
    (2.0 * std::f64::consts::PI * carrier_mhz * 1e-3 * window.center_time).to_degrees()
}

/// Regression target for an echo of phase `echo_deg` seen through `window`.
pub fn encode_target(window: &PhaseWindow, echo_deg: f64, carrier_mhz: f64) -> Vec<f64> {
    let local = (echo_deg + center_rotation_deg(window, carrier_mhz)).to_radians();
    vec![local.cos(), local.sin()]
}

fn check_regressor(net: &DenseNetwork) -> Result<()> {
    if net.head != Head::Regressor {
        return Err(Error::WrongHead {
            expected: "regressor",
            found: net.head.name(),
        });
    }
    if net.input_dim() != INPUT_LEN || net.output_dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: INPUT_LEN,
            got: net.input_dim(),
        });
    }
    Ok(())
}

/// Echo phase in [0, 360) decoded from the regressor's `(cos, sin)` output.
pub fn predict_phase(net: &DenseNetwork, window: &PhaseWindow, carrier_mhz: f64) -> Result<f64> {
    check_regressor(net)?;
    let out = net.forward(&phase_input(window))?;
    let local = out[1].atan2(out[0]).to_degrees();
    Ok(wrap360(local - center_rotation_deg(window, carrier_mhz)))
}

/// One training or test example: a window and the π/2-pulse phase that
/// produced it (π-pulse phase zero).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseItem {
    pub window: PhaseWindow,
    pub target: f64,
}

impl PhaseItem {
    pub fn echo_phase(&self) -> f64 {
        echo_phase_deg(self.target, 0.0)
    }
}

pub fn training_set(items: &[PhaseItem], carrier_mhz: f64) -> Dataset {
    Dataset {
        inputs: items.iter().map(|it| phase_input(&it.window)).collect(),
        targets: items
            .iter()
            .map(|it| encode_target(&it.window, it.echo_phase(), carrier_mhz))
            .collect(),
    }
}

pub fn train_regressor(
    items: &[PhaseItem],
    carrier_mhz: f64,
    hidden: &[usize],
    cfg: &TrainConfig,
) -> Result<(DenseNetwork, TrainReport)> {
    let net = DenseNetwork::regressor(INPUT_LEN, hidden, rng::derive(cfg.seed, "phase-init"))?;
    neural::train(&net, &training_set(items, carrier_mhz), cfg)
}

/// Mean angular error of the regressor against the quadrature oracle.
pub fn mean_abs_error(net: &DenseNetwork, items: &[PhaseItem], carrier_mhz: f64) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::Empty("phase items"));
    }
    let errs = par::map(Exec::default(), items, |it| -> Result<f64> {
        Ok(angular_error(
            predict_phase(net, &it.window, carrier_mhz)?,
            oracle_phase(&it.window, carrier_mhz)?,
        ))
    });
    let errs: Vec<f64> = errs.into_iter().collect::<Result<_>>()?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

#[derive(Clone, Copy, Debug)]
pub struct HahnSetup {
    pub timing: HahnTiming,
    pub model: SignalModel,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub input_phases: Vec<f64>,
    pub predicted_phases: Vec<f64>,
    pub oracle_phases: Vec<f64>,
    /// Circular-linear slope of predicted phase against the swept phase.
    pub slope: f64,
    /// Same fit applied to the oracle phases.
    pub oracle_slope: f64,
    /// 360 / |slope|.
    pub period: f64,
    /// Offset along the swept variable, in [0, 360).
    pub bias: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum SweptPulse {
    HalfPi,
    Pi,
}

impl SweptPulse {
    fn nominal_slope(self) -> f64 {
        match self {
            SweptPulse::HalfPi => -1.0,
            SweptPulse::Pi => 2.0,
        }
    }
}

/// Sweeps the π/2-pulse phase over `phases + bias` with the π pulse at zero.
/// The bias is recovered against the unbiased expectation `-phase`.
pub fn sweep_pi2(net: &DenseNetwork, phases: &[f64], bias: f64, setup: &HahnSetup) -> Result<SweepResult> {
    sweep(net, phases, bias, setup, SweptPulse::HalfPi)
}

/// Sweeps the π-pulse phase with the π/2 pulse at zero.
pub fn sweep_pi(net: &DenseNetwork, phases: &[f64], setup: &HahnSetup) -> Result<SweepResult> {
    sweep(net, phases, 0.0, setup, SweptPulse::Pi)
}

fn sweep(net: &DenseNetwork, phases: &[f64], bias: f64, setup: &HahnSetup, pulse: SweptPulse) -> Result<SweepResult> {
    if phases.len() < 8 {
        return Err(Error::SweepTooShort(phases.len()));
    }
    check_regressor(net)?;
    let carrier = setup.model.carrier_mhz;
    let label = match pulse {
        SweptPulse::HalfPi => "sweep-pi2",
        SweptPulse::Pi => "sweep-pi",
    };
    let points = par::map_range(Exec::default(), phases.len(), |k| -> Result<(f64, f64)> {
        let (half, pi) = match pulse {
            SweptPulse::HalfPi => (phases[k] + bias, 0.0),
            SweptPulse::Pi => (0.0, phases[k] + bias),
        };
        let seed = rng::derive(setup.seed, &format!("{label}-{k}"));
        let trace = synth_hahn(half, pi, &setup.timing, &setup.model, seed)?;
        let window = extract_echo_window(&trace, carrier, setup.model.noise_sigma)?;
        Ok((predict_phase(net, &window, carrier)?, oracle_phase(&window, carrier)?))
    });
    let (predicted, oracle): (Vec<f64>, Vec<f64>) = points.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();

    let nominal = pulse.nominal_slope();
    let (slope, _) = circular_linear_fit(phases, &predicted);
    let (oracle_slope, _) = circular_linear_fit(phases, &oracle);
    let offsets: Vec<f64> = phases
        .iter()
        .zip(&predicted)
        .map(|(x, p)| nominal.signum() * signed_diff(*p, wrap360(nominal * x)))
        .collect();
    Ok(SweepResult {
        input_phases: phases.to_vec(),
        predicted_phases: predicted,
        oracle_phases: oracle,
        slope,
        oracle_slope,
        period: 360.0 / slope.abs(),
        bias: circular_mean(&offsets).unwrap_or(0.0),
    })
}

/// `start, start+step, …` strictly below `end`.
pub fn phase_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(end > start) {
        return Err(invalid("sweep", format!("bad range {start}:{end}:{step}")));
    }
    let n = ((end - start) / step - 1e-9).ceil() as usize;
    Ok((0..n).map(|k| start + k as f64 * step).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noiseless() -> SignalModel {
        SignalModel::default().with_noise(0.0)
    }

    fn window(phi_half: f64, phi_pi: f64, model: &SignalModel, seed: u64) -> PhaseWindow {
        let tr = synth_hahn(phi_half, phi_pi, &HahnTiming::default(), model, seed).unwrap();
        extract_echo_window(&tr, model.carrier_mhz, model.noise_sigma).unwrap()
    }

    #[test]
    fn window_centers_on_echo() {
        let m = noiseless();
        for phi in [0.0, 37.0, 123.0, 301.0] {
            let w = window(phi, 0.0, &m, 0);
            assert_eq!(w.i_window.len(), WINDOW_LEN);
            assert!((w.center_time - HahnTiming::default().echo_center()).abs() <= 2.0 * m.dt);
        }
    }

    #[test]
    fn edge_echo_is_rejected() {
        let m = noiseless();
        let mut tr = synth_hahn(0.0, 0.0, &HahnTiming::default(), &m, 0).unwrap();
        let keep = tr.len() / 2 + 20;
        tr.i_samples.drain(..keep);
        tr.q_samples.drain(..keep);
        assert!(matches!(
            extract_echo_window(&tr, m.carrier_mhz, 0.0),
            Err(Error::EchoAtEdge { .. })
        ));
    }

    #[test]
    fn silent_trace_has_no_echo() {
        let tr = IqTrace {
            i_samples: vec![0.0; 500],
            q_samples: vec![0.0; 500],
            dt: 1.0,
            t0: 0.0,
            meta: crate::sim::PhaseSetting { phi_half: 0.0, phi_pi: 0.0 },
        };
        assert!(matches!(extract_echo_window(&tr, 90.0, 0.05), Err(Error::NoEcho { .. })));
    }

    #[test]
    fn oracle_constructed_phases() {
        let m = noiseless();
        // φ_echo = 30° from φ_π/2 = 330°, φ_π = 0.
        let p = oracle_phase(&window(330.0, 0.0, &m, 0), m.carrier_mhz).unwrap();
        assert!(angular_error(p, 30.0) < 0.5);
        let a = oracle_phase(&window(0.0, 0.0, &m, 0), m.carrier_mhz).unwrap();
        let b = oracle_phase(&window(180.0, 0.0, &m, 0), m.carrier_mhz).unwrap();
        assert!((angular_error(a, b) - 180.0).abs() < 0.5);
        // (2·0 − 40) mod 360 = 320.
        let c = oracle_phase(&window(40.0, 0.0, &m, 0), m.carrier_mhz).unwrap();
        assert!(angular_error(c, 320.0) < 0.5);
        let d = oracle_phase(&window(0.0, 90.0, &m, 0), m.carrier_mhz).unwrap();
        assert!(angular_error(d, 180.0) < 0.5);
    }

    #[test]
    fn oracle_rejects_unresolvable_carrier() {
        let w = window(0.0, 0.0, &noiseless(), 0);
        assert!(oracle_phase(&w, 400.0).is_err());
    }

    #[test]
    fn encoding_inverts_through_decoder() {
        let m = noiseless();
        let w = window(77.0, 0.0, &m, 0);
        let t = encode_target(&w, 283.0, m.carrier_mhz);
        let local = t[1].atan2(t[0]).to_degrees();
        let back = wrap360(local - center_rotation_deg(&w, m.carrier_mhz));
        assert!(angular_error(back, 283.0) < 1e-9);
    }

    #[test]
    fn predict_requires_regressor() {
        let w = window(0.0, 0.0, &noiseless(), 0);
        let clf = DenseNetwork::classifier(INPUT_LEN, &[4], 0).unwrap();
        assert!(matches!(predict_phase(&clf, &w, 90.0), Err(Error::WrongHead { .. })));
    }

    #[test]
    fn grid_counts() {
        assert_eq!(phase_grid(0.0, 360.0, 2.0).unwrap().len(), 180);
        assert_eq!(phase_grid(0.0, 360.0, 3.0).unwrap().len(), 120);
        assert_eq!(phase_grid(0.0, 360.0, 7.0).unwrap().len(), 52);
        assert!(phase_grid(0.0, 360.0, 0.0).is_err());
    }
}
