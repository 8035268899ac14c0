use advspeech::defense::{smooth, smooth_var, SeedPolicy, SmoothingConfig};
use advspeech::tensor::Tape;
use proptest::prelude::*;

#[test]
fn smoothing_noise_has_the_declared_moments() {
    let sigma = 0.05f32;
    let cfg = SmoothingConfig::new(sigma).unwrap();
    let n = 100_000;
    let x = vec![0.25f32; n];
    let y = smooth(&x, &cfg, 42);
    let noise: Vec<f64> = y.iter().zip(&x).map(|(a, b)| (a - b) as f64).collect();
    let mean = noise.iter().sum::<f64>() / n as f64;
    let std = (noise.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    assert!(
        mean.abs() < 3.0 * sigma as f64 / (n as f64).sqrt(),
        "mean {mean}"
    );
    assert!((std / sigma as f64 - 1.0).abs() < 0.02, "std {std}");
}

#[test]
fn seed_policies() {
    let fresh = SmoothingConfig::new(0.1).unwrap();
    let fixed = SmoothingConfig {
        seed_policy: SeedPolicy::FixedPerUtterance,
        ..fresh
    };
    assert_ne!(fresh.call_seed(7, 0), fresh.call_seed(7, 1));
    assert_eq!(fixed.call_seed(7, 0), fixed.call_seed(7, 1));
    assert_ne!(fixed.call_seed(7, 0), fixed.call_seed(8, 0));
}

#[test]
fn negative_sigma_is_rejected() {
    assert!(SmoothingConfig::new(-0.1).is_err());
    assert!(SmoothingConfig::new(f32::INFINITY).is_err());
}

proptest! {
    #[test]
    fn zero_sigma_is_the_identity(x in prop::collection::vec(-1.0f32..1.0, 1..300), seed in any::<u64>()) {
        let cfg = SmoothingConfig::new(0.0).unwrap();
        prop_assert_eq!(smooth(&x, &cfg, seed), x.clone());
        let tape = Tape::new();
        let v = tape.input(vec![x.len()], x.clone(), true).unwrap();
        prop_assert_eq!(smooth_var(v, &cfg, seed).unwrap().value(), x);
    }

    #[test]
    fn same_seed_same_noise(len in 1usize..200, seed in any::<u64>(), sigma in 1e-4f32..1.0) {
        let cfg = SmoothingConfig::new(sigma).unwrap();
        let x = vec![0.0f32; len];
        prop_assert_eq!(smooth(&x, &cfg, seed), smooth(&x, &cfg, seed));
    }
}
