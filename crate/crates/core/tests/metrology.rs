use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use birefsense_core::metrology::{heisenberg_reference, shot_noise_reference, DEFAULT_STEP};
use birefsense_core::{
    optimize_phi_su, sensitivity_at, Basis, DetectionSpec, Estimator, InterferometerConfig, ModeIndex,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn seed() -> impl Strategy<Value = BTreeMap<ModeIndex, Complex64>> {
    prop::collection::btree_map(
        (0..4usize).prop_map(|i| ModeIndex::ALL[i]),
        (0.1..20.0f64, 0.0..2.0 * PI).prop_map(|(r, t)| Complex64::from_polar(r, t)),
        1..4,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn classical_light_never_beats_shot_noise(
        seed in seed(),
        phi_b in -PI..PI,
        delta in 0.0..PI,
        phi_su in 0.0..2.0 * PI,
        ad in any::<bool>(),
    ) {
        let cfg = InterferometerConfig {
            gain: 0.0,
            seed,
            phi_b,
            delta,
            phi_su,
            detection: DetectionSpec::new(ModeIndex::ALL, if ad { Basis::AD } else { Basis::HV }),
            ..Default::default()
        };
        let r = sensitivity_at(&cfg, DEFAULT_STEP).unwrap();
        prop_assert!(r.delta_n >= 0.0);
        if !r.insensitive {
            let n3 = 1.0 / r.snl_sq;
            prop_assert!(r.delta_phi_sq * n3 >= 1.0 - 1e-9, "{r:?}");
        }
    }

    #[test]
    fn variance_is_never_negative(gain in 0.0..2.0f64, loss in 0.0..0.9f64, phi_b in -PI..PI, phi_su in 0.0..2.0 * PI) {
        let cfg = InterferometerConfig { gain, loss, phi_b, phi_su, ..Default::default() };
        let r = sensitivity_at(&cfg, DEFAULT_STEP).unwrap();
        prop_assert!(r.delta_n >= 0.0 && r.delta_n.is_finite());
    }
}

#[test]
fn heisenberg_below_shot_noise() {
    assert_eq!(heisenberg_reference(100.0), 0.01);
    assert_eq!(heisenberg_reference(1.0), 1.0);
    for n in [1.5, 10.0, 1e8] {
        assert!(heisenberg_reference(n).powi(2) < shot_noise_reference(n));
    }
}

#[test]
fn squeezing_beats_shot_noise() {
    let cfg = InterferometerConfig {
        gain: 1.5,
        phi_b: 0.0,
        delta: FRAC_PI_2,
        detection: DetectionSpec::new([ModeIndex::IDLER_H], Basis::HV),
        ..Default::default()
    };
    let (_, r) = optimize_phi_su(&InterferometerConfig { phi_b: 0.01, ..cfg }, 16).unwrap();
    assert!(r.s2_db < -5.0, "{r:?}");
}

#[test]
fn optimizer_result_matches_direct_evaluation() {
    let cfg = InterferometerConfig {
        gain: 1.0,
        loss: 0.1,
        phi_b: 0.05,
        ..Default::default()
    };
    let est = Estimator::new(&cfg, DEFAULT_STEP).unwrap();
    let (phi_su, best) = est.optimize(cfg.phi_b, 16).unwrap();
    let direct = sensitivity_at(&InterferometerConfig { phi_su, ..cfg }, DEFAULT_STEP).unwrap();
    assert!((direct.s2_db - best.s2_db).abs() < 1e-12);
    for k in 0..64 {
        let r = est.evaluate(cfg.phi_b, k as f64 * PI / 32.0).unwrap();
        assert!(best.delta_phi_sq <= r.delta_phi_sq * (1.0 + 1e-9));
    }
}
