use echo_readout::circular::angular_error;
use echo_readout::phase::{extract_echo_window, oracle_phase};
use echo_readout::sim::{
    echo_phase_deg, echo_schedule, synth_hahn, synth_storage_retrieval, BitSequence, HahnTiming, SequenceTiming,
    SignalModel,
};
use proptest::prelude::*;

fn noiseless() -> SignalModel {
    SignalModel::default().with_noise(0.0)
}

proptest! {
    #[test]
    fn same_seed_same_trace(j in 0u8..16, seed in any::<u64>()) {
        let seq = BitSequence::from_decimal(j).unwrap();
        let t = SequenceTiming::default();
        let m = SignalModel::default();
        let a = synth_storage_retrieval(&seq, &t, &m, seed).unwrap();
        let b = synth_storage_retrieval(&seq, &t, &m, seed).unwrap();
        prop_assert!(a.samples.iter().zip(&b.samples).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn echo_train_is_linear(j in 0u8..16) {
        let seq = BitSequence::from_decimal(j).unwrap();
        let t = SequenceTiming::default();
        let whole = synth_storage_retrieval(&seq, &t, &noiseless(), 0).unwrap();
        let mut sum = vec![0.0; whole.len()];
        for i in 1..=4 {
            if seq.bit(i) == 1 {
                let mut bits = [0u8; 4];
                bits[i - 1] = 1;
                let single = synth_storage_retrieval(&BitSequence::from_bits(bits).unwrap(), &t, &noiseless(), 0).unwrap();
                for (s, v) in sum.iter_mut().zip(&single.samples) {
                    *s += v;
                }
            }
        }
        for (a, b) in whole.samples.iter().zip(&sum) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn schedule_sources_descend(j in 1u8..16) {
        let sched = echo_schedule(&BitSequence::from_decimal(j).unwrap(), &SequenceTiming::default());
        for w in sched.windows(2) {
            prop_assert!(w[0].center < w[1].center);
            prop_assert!(w[0].source > w[1].source);
        }
    }

    #[test]
    fn hahn_phase_law(a in 0.0f64..360.0, b in 0.0f64..360.0) {
        let m = noiseless();
        let trace = synth_hahn(a, b, &HahnTiming::default(), &m, 0).unwrap();
        let w = extract_echo_window(&trace, m.carrier_mhz, 0.0).unwrap();
        let p = oracle_phase(&w, m.carrier_mhz).unwrap();
        prop_assert!(angular_error(p, echo_phase_deg(a, b)) < 1.0);
    }
}

#[test]
fn echo_peaks_decay_with_time() {
    let t = SequenceTiming::default();
    let m = noiseless();
    let seq = BitSequence::from_decimal(15).unwrap();
    let trace = synth_storage_retrieval(&seq, &t, &m, 0).unwrap();
    let peaks: Vec<f64> = echo_schedule(&seq, &t)
        .iter()
        .map(|e| {
            (0..trace.len())
                .filter(|&k| (trace.time(k) - e.center).abs() <= m.support_half_width())
                .map(|k| trace.samples[k].abs())
                .fold(0.0, f64::max)
        })
        .collect();
    assert!(peaks.windows(2).all(|w| w[0] > w[1]), "{peaks:?}");
    for (p, e) in peaks.iter().zip(echo_schedule(&seq, &t)) {
        assert!((p - m.peak_amplitude(e.precession)).abs() < 0.02);
    }
}

#[test]
fn trace_covers_all_echoes_with_margin() {
    let t = SequenceTiming::default();
    let m = SignalModel::default();
    let trace = synth_storage_retrieval(&BitSequence::from_decimal(15).unwrap(), &t, &m, 1).unwrap();
    let end = trace.time(trace.len() - 1);
    for e in echo_schedule(&BitSequence::from_decimal(15).unwrap(), &t) {
        assert!(e.center - trace.t0 >= 4.0 * m.env_sigma);
        assert!(end - e.center >= 4.0 * m.env_sigma);
    }
}

#[test]
fn invalid_models_are_rejected() {
    let t = SequenceTiming::default();
    let seq = BitSequence::from_decimal(3).unwrap();
    for m in [
        SignalModel { amp0: 0.0, ..SignalModel::default() },
        SignalModel { t_m: -1.0, ..SignalModel::default() },
        SignalModel { noise_sigma: -0.1, ..SignalModel::default() },
        SignalModel { dt: 0.0, ..SignalModel::default() },
    ] {
        assert!(synth_storage_retrieval(&seq, &t, &m, 0).is_err());
    }
    assert!(BitSequence::from_decimal(16).is_err());
}
