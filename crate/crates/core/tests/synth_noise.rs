// SPDX-License-Identifier: MIT OR Apache-2.0
use intsamp::model::PiecewiseConfig;
use intsamp::synth::{self, NoiseModel};

fn moments(x: &[f64], lag: usize) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let cov = x.windows(lag + 1).map(|w| (w[0] - m) * (w[lag] - m)).sum::<f64>() / n;
    (var, cov / var)
}

fn flat(n: usize) -> PiecewiseConfig {
    PiecewiseConfig::new(n, vec![], vec![0.0]).unwrap()
}

#[test]
fn iid_has_unit_variance() {
    let e = synth::gen_noise(NoiseModel::Iid, &flat(1_000_000), 1).unwrap();
    let (var, r1) = moments(&e, 1);
    assert!((var - 1.0).abs() < 0.01, "{var}");
    assert!(r1.abs() < 0.005, "{r1}");
}

#[test]
fn ma3_autocorrelation() {
    let e = synth::gen_noise(NoiseModel::Ma3, &flat(1_000_000), 2).unwrap();
    let (var, r1) = moments(&e, 1);
    let (_, r2) = moments(&e, 2);
    let (_, r3) = moments(&e, 3);
    assert!((var - 1.0).abs() < 0.01, "{var}");
    assert!((r1 - 0.625 / 1.3125).abs() < 0.02, "{r1}");
    assert!((r2 - 0.25 / 1.3125).abs() < 0.02, "{r2}");
    assert!(r3.abs() < 0.01, "{r3}");
}

#[test]
fn ar1_autocorrelation() {
    let e = synth::gen_noise(NoiseModel::Ar1 { phi: 0.2 }, &flat(1_000_000), 3).unwrap();
    let (var, r1) = moments(&e, 1);
    let (_, r2) = moments(&e, 2);
    assert!((var - 1.0).abs() < 0.01, "{var}");
    assert!((r1 - 0.2).abs() < 0.01, "{r1}");
    assert!((r2 - 0.04).abs() < 0.01, "{r2}");
    // stationary from the first draw
    let firsts: Vec<f64> = (0..4000).map(|s| synth::gen_noise(NoiseModel::Ar1 { phi: 0.9 }, &flat(2), s).unwrap()[0]).collect();
    let (v0, _) = moments(&firsts, 1);
    assert!((v0 - 1.0).abs() < 0.1, "{v0}");
}

#[test]
fn hetero_regimes_follow_layout() {
    let c = synth::even_config(80_000, 7, 1.0).unwrap();
    let e = synth::gen_noise(NoiseModel::Hetero, &c, 4).unwrap();
    assert_eq!(e.len(), 80_000);
    let mut seen = std::collections::BTreeSet::new();
    for i in (1..=80_000).step_by(997) {
        seen.insert(synth::hetero_regime(&c, i).unwrap());
    }
    assert!(seen.len() > 1);
    assert!(synth::gen_noise(NoiseModel::Hetero, &synth::even_config(1000, 2, 1.0).unwrap(), 0).is_err());
}
