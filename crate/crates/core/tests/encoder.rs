use irrisim_core::encoder::{
    build_encoder, calibrate_encoder, Calibration, CropProfile, EncoderSpec,
};
use irrisim_core::fabric::{run_simulation, MismatchModel, SimConfig, Stimulus};
use irrisim_core::neuron::{measure_rate, FiSettings};

fn calibrated(profile: &CropProfile) -> (EncoderSpec, Calibration) {
    let spec = EncoderSpec::for_profile(profile).unwrap();
    let cal = calibrate_encoder(&spec, &FiSettings::default()).unwrap();
    (spec, cal)
}

/// Sweep points across [0, c_max], skipping a margin around each boundary.
fn sweep(spec: &EncoderSpec, margin: f64) -> Vec<f64> {
    let lower = spec.bands.lower();
    (0..=40)
        .map(|k| spec.bands.c_max * k as f64 / 40.0)
        .filter(|c| lower[1..].iter().all(|l| (c - l).abs() > margin))
        .collect()
}

#[test]
fn calibration_hits_every_target() {
    for profile in [CropProfile::apple(), CropProfile::kiwi()] {
        let (spec, cal) = calibrated(&profile);
        for (e, t) in cal.entries.iter().zip(spec.targets()) {
            assert_eq!(e.target, t);
            assert!(e.rel_error.abs() <= 0.02, "{}", cal.report());
        }
    }
}

#[test]
fn isolated_fi_curves_switch_on_at_band_edges() {
    let (spec, cal) = calibrated(&CropProfile::apple());
    let lower = spec.bands.lower();
    for c in sweep(&spec, 0.02) {
        for b in 0..3 {
            let r =
                measure_rate(&cal.params[b], c + spec.pedestal, &FiSettings::default()).unwrap();
            if c >= lower[b] {
                assert!(r >= spec.active_rate_hz, "group {b} silent at {c}: {r}");
            } else {
                assert_eq!(r, 0.0, "group {b} fires at {c}");
            }
        }
    }
}

fn group_rates(spec: &EncoderSpec, cal: &Calibration, c: f64, cv: f64, seed: u64) -> [f64; 3] {
    let net = build_encoder(spec, cal);
    let stim: Vec<Stimulus> = (0..3)
        .map(|b| Stimulus::current(&EncoderSpec::group(b), c + spec.pedestal, 0.0, 300.0))
        .collect();
    let cfg = SimConfig {
        duration_ms: 300.0,
        mismatch: MismatchModel { cv, seed },
        ..SimConfig::default()
    };
    let log = run_simulation(&net, &stim, &cfg).unwrap();
    [0, 1, 2].map(|b| log.rate(&EncoderSpec::group(b), 150_000, 300_000).unwrap())
}

#[test]
fn only_the_matching_group_stays_active() {
    for profile in [CropProfile::apple(), CropProfile::kiwi()] {
        let (spec, cal) = calibrated(&profile);
        for seed in 0..3 {
            for c in sweep(&spec, 0.02) {
                let rates = group_rates(&spec, &cal, c, 0.1, seed);
                let want = spec.bands.band_of(c);
                for (b, r) in rates.iter().enumerate() {
                    if b == want {
                        assert!(
                            *r > spec.active_rate_hz,
                            "{}: band {b} weak at {c}: {rates:?}",
                            profile.name
                        );
                    } else {
                        assert!(
                            *r <= spec.active_rate_hz,
                            "{}: band {b} leaks at {c}: {rates:?}",
                            profile.name
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn top_group_rate_never_falls_as_input_rises() {
    let (spec, cal) = calibrated(&CropProfile::apple());
    let mut prev = 0.0;
    for k in 0..=8 {
        let c =
            spec.bands.c_on + 0.01 + (spec.bands.c_max - spec.bands.c_on - 0.01) * k as f64 / 8.0;
        let r = group_rates(&spec, &cal, c, 0.0, 0)[2];
        assert!(r > 0.0 && r >= prev, "{c}: {r} after {prev}");
        prev = r;
    }
}
