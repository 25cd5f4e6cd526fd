use loewner_core::chain::ArmSpec;
use loewner_core::experiments::{
    converge, gamma_of_eta, median, perturbed_three_arms, simulate, stability, ConvergeSpec, InitialSpec, Model,
    RunConfig, Stability, StabilitySpec,
};

#[test]
fn gamma_exponent() {
    assert_eq!(gamma_of_eta(2.0).unwrap(), 8.0);
    assert_eq!(gamma_of_eta(4.0).unwrap(), 8.0);
    assert!(gamma_of_eta(1.05).unwrap() > 100.0);
    assert!(gamma_of_eta(1.0).is_err());
}

#[test]
fn median_of_even_and_odd() {
    assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
    assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
}

#[test]
fn config_validation() {
    let ok = RunConfig::new(Model::Multinomial, InitialSpec::symmetric(3, 0.3), 2.0, 0.5, 1);
    let mut with_c = ok.clone();
    with_c.capacity = Some(0.01);
    with_c.validate().unwrap();

    let mut both = with_c.clone();
    both.model = Model::Ale;
    both.sigma = Some(1e-4);
    both.gamma = Some(2.0);
    assert!(both.validate().is_err());

    let mut neg = with_c.clone();
    neg.horizon = -1.0;
    assert!(neg.validate().is_err());

    let json = serde_json::to_string(&with_c).unwrap();
    assert_eq!(RunConfig::from_json(&json).unwrap(), with_c);
    let unknown = json.replacen('{', "{\"colour\":1,", 1);
    assert!(RunConfig::from_json(&unknown).is_err());
}

#[test]
fn simulate_is_deterministic() {
    let mut cfg = RunConfig::new(Model::Ale, InitialSpec::symmetric(2, 0.3), 2.0, 0.1, 9);
    cfg.capacity = Some(0.01);
    cfg.sigma = Some(1e-3);
    let a = simulate(&cfg).unwrap();
    let b = simulate(&cfg).unwrap();
    assert_eq!(a.events, b.events);
    assert_eq!(a.measure, b.measure);
    assert!((a.measure.total_mass() - 1.0).abs() < 1e-12);
}

#[test]
fn perturbation_stretches_only_the_first_arm() {
    let arms = perturbed_three_arms(0.1, 0.02);
    assert_eq!(arms.len(), 3);
    let flat = perturbed_three_arms(0.1, 0.0);
    assert_eq!(arms[1..], flat[1..]);
    assert!((arms[0].length - 0.102).abs() < 1e-15);
}

#[test]
fn unperturbed_stability_probe_is_neutral() {
    let mut spec = StabilitySpec::new(vec![2.0], 0.0, 0.1);
    spec.dt = 1e-2;
    let rows = stability(&spec, 1).unwrap();
    assert_eq!(rows[0].classification, Stability::Neutral);
}

/// A single arm grows straight in both models, so the tip deviation along
/// the ladder is pure round-off.
#[test]
fn single_arm_ladder_tracks_the_path_model() {
    let mut base = RunConfig::new(Model::Multinomial, InitialSpec::symmetric(1, 0.3), 2.0, 0.2, 0);
    base.initial.arms = vec![ArmSpec { angle: 0.5, length: 0.3 }];
    let mut spec = ConvergeSpec::new(base);
    spec.ladder = vec![0.04, 0.02, 0.01];
    spec.seeds = (0..10).collect();
    spec.models = vec![Model::Multinomial];
    spec.reference_dt = 1e-3;
    let report = converge(&spec, 2).unwrap();
    assert_eq!(report.rows.len(), 30);
    for r in &report.rows {
        assert!(r.error.is_none(), "{:?}", r.error);
        assert!(r.sup_tip_dev.unwrap() < 1e-8, "{r:?}");
        assert!(r.d_bw.unwrap() <= r.coarsening_bound * 2.0 + 1e-9, "{r:?}");
    }
}
