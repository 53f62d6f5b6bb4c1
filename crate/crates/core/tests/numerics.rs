use irrisim_core::encoder::CropProfile;
use irrisim_core::encoder::{calibrate_encoder, EncoderSpec};
use irrisim_core::neuron::{measure_rate, step_neuron, FiSettings, NeuronParams, NeuronState};
use irrisim_core::state_machine::state_core_config;
use proptest::prelude::*;

/// Integrate a neuron that cannot spike for `n_tau` time constants.
fn settle(p: &NeuronParams, i_in: f64, dt_ms: f64, n_tau: f64) -> f64 {
    let p = NeuronParams {
        i_spike_threshold: 1e9,
        ..*p
    };
    let steps = (n_tau * p.tau_ms / dt_ms).round() as u64;
    let dt_us = (dt_ms * 1000.0).round() as u64;
    let mut s = NeuronState::default();
    for k in 0..steps {
        s = step_neuron(s, &p, i_in, k * dt_us, dt_ms).unwrap().0;
    }
    s.i_mem
}

#[test]
fn state_core_neuron_reaches_closed_form() {
    let p = state_core_config().neuron;
    let i_in = 0.37;
    let expected = i_in * p.i_gain / (p.i_tau - p.i_a);
    let got = settle(&p, i_in, p.tau_ms / 100.0, 40.0);
    assert!(
        ((got - expected) / expected).abs() < 1e-3,
        "{got} vs {expected}"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn steady_state_within_a_tenth_of_a_percent(
        tau_ms in 2.0f64..50.0,
        i_gain in 0.1f64..100.0,
        i_tau in 0.5f64..5.0,
        feedback in 0.0f64..0.9,
        i_in in 0.001f64..10.0,
    ) {
        let p = NeuronParams {
            tau_ms,
            i_gain,
            i_tau,
            i_a: feedback * i_tau,
            ..NeuronParams::default()
        };
        let expected = i_in * i_gain / (i_tau - p.i_a);
        // the slowest mode decays with tau / (1 - I_a/I_tau)
        let n_tau = 20.0 / (1.0 - feedback);
        let got = settle(&p, i_in, tau_ms / 100.0, n_tau);
        prop_assert!(((got - expected) / expected).abs() < 1e-3, "{} vs {}", got, expected);
    }

    #[test]
    fn membrane_never_negative(i_in in -5.0f64..5.0, i_dc in -1.0f64..1.0) {
        let p = NeuronParams { i_dc, ..NeuronParams::default() };
        let mut s = NeuronState::default();
        for k in 0..500u64 {
            s = step_neuron(s, &p, i_in, k * 100, 0.1).unwrap().0;
            prop_assert!(s.i_mem >= 0.0);
        }
    }
}

fn fi_settings(dt_ms: f64) -> FiSettings {
    FiSettings {
        dt_ms,
        warmup_ms: 200.0,
        window_ms: 10_000.0,
    }
}

/// Largest relative change of the rate when the step is halved, over
/// inputs giving at least `min_hz` at the coarse step.
fn max_halving_change(p: &NeuronParams, inputs: &[f64], dt_ms: f64, min_hz: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for &i in inputs {
        let coarse = measure_rate(p, i, &fi_settings(dt_ms)).unwrap();
        let fine = measure_rate(p, i, &fi_settings(dt_ms / 2.0)).unwrap();
        if coarse < min_hz {
            continue;
        }
        worst = worst.max(((fine - coarse) / coarse).abs());
    }
    worst
}

#[test]
fn halving_dt_moves_state_core_rates_less_than_two_percent() {
    let p = state_core_config().neuron;
    let inputs: Vec<f64> = (1..=12).map(|k| 0.5 + 0.25 * k as f64).collect();
    let worst = max_halving_change(&p, &inputs, 0.1, 5.0);
    assert!(worst < 0.02, "worst change {worst}");
}

#[test]
fn halving_dt_moves_calibrated_encoder_rates_less_than_two_percent() {
    let spec = EncoderSpec::for_profile(&CropProfile::apple()).unwrap();
    let cal = calibrate_encoder(&spec, &FiSettings::default()).unwrap();
    let inputs: Vec<f64> = (0..=20).map(|k| 0.05 * k as f64 + spec.pedestal).collect();
    for p in &cal.params {
        let worst = max_halving_change(p, &inputs, 0.1, 5.0);
        assert!(worst < 0.02, "worst change {worst} for i_dc {}", p.i_dc);
    }
}
