mod common;

use common::chi_square_uniform;
use loewner_core::angle::{unit, wrapped_diff};
use loewner_core::chain::{build_initial, ArmSpec, InitialConfig};
use loewner_core::lpm::lpm_run;
use loewner_core::rng::stream;
use loewner_core::tips::{multinomial_run, multinomial_run_with, write_tip_history_csv, Tip, TipState};
use num_complex::Complex64;
use std::f64::consts::{PI, TAU};
use std::sync::Arc;

fn symmetric(k: usize) -> Arc<InitialConfig> {
    let arms: Vec<ArmSpec> = (0..k).map(|m| ArmSpec { angle: -1.0 + TAU * m as f64 / k as f64, length: 0.3 }).collect();
    Arc::new(build_initial(&arms, 1e-3, 1e-3).unwrap())
}

#[test]
fn weights_follow_the_second_derivative_ratio() {
    let tips = vec![
        Tip { angle: 0.0, second_deriv: Complex64::new(2.0, 0.0) },
        Tip { angle: 2.0, second_deriv: Complex64::from_polar(1.0, 0.3) },
    ];
    let s = TipState::new(tips.clone(), 2.0).unwrap();
    assert!((s.weights()[0] - 0.2).abs() < 1e-15 && (s.weights()[1] - 0.8).abs() < 1e-15);
    let flat = TipState::new(tips, 0.0).unwrap();
    assert_eq!(flat.weights(), &[0.5, 0.5]);
}

/// Growing each arm once by the same capacity keeps a symmetric cluster
/// symmetric up to O(c²).
#[test]
fn round_robin_restores_equal_weights() {
    let mut devs = Vec::new();
    for c in [1e-3, 1e-4, 1e-5, 1e-6] {
        let k = 3;
        let mut i = 0;
        let traj = multinomial_run_with(symmetric(k), 2.0, c, k as f64 * c, |_| {
            i += 1;
            i - 1
        })
        .unwrap();
        let dev = traj.state.weights().iter().map(|w| (w - 1.0 / k as f64).abs()).fold(0.0, f64::max);
        devs.push(dev);
    }
    assert!(devs[3] < 1e-10, "{devs:?}");
    assert!(devs.windows(2).all(|w| w[1] < w[0] / 20.0), "{devs:?}");
}

#[test]
fn single_arm_grows_straight() {
    let init = Arc::new(build_initial(&[ArmSpec { angle: 0.7, length: 0.2 }], 1e-3, 1e-3).unwrap());
    let a = multinomial_run(init.clone(), 2.0, 0.01, 0.5, &mut stream(1, 0)).unwrap();
    let b = multinomial_run(init, 2.0, 0.01, 0.5, &mut stream(2, 0)).unwrap();
    assert_eq!(a.driving_angles(), b.driving_angles());
    for th in a.driving_angles() {
        assert!(wrapped_diff(th, 0.7).abs() < 1e-12);
    }
    let tip = a.chain.evaluate(unit(a.state.tips()[0].angle)).unwrap();
    assert!(wrapped_diff(tip.arg(), 0.7).abs() < 1e-9);
}

#[test]
fn arm_draws_follow_the_weights() {
    let state = TipState::from_initial(&symmetric(4), 2.0).unwrap();
    let mut rng = stream(77, 0);
    // map arm m to the centre of the m-th quarter so the uniformity test applies
    let centres: Vec<f64> = (0..4).map(|m| -PI + TAU * (m as f64 + 0.5) / 4.0).collect();
    let draws: Vec<f64> = (0..10_000).map(|_| centres[state.draw_arm(&mut rng)]).collect();
    assert!(chi_square_uniform(&draws, 4) > 1e-3);
}

/// Tip spacing never collapses along a run, and the weights stay a
/// probability vector.
#[test]
fn spacing_and_weights_stay_controlled() {
    let arms = [ArmSpec { angle: 0.0, length: 0.5 }, ArmSpec { angle: TAU / 3.0, length: 0.25 }];
    let init = Arc::new(build_initial(&arms, 1e-3, 2e-2).unwrap());
    for seed in 0..4 {
        let t = multinomial_run(init.clone(), 2.0, 0.01, 0.5, &mut stream(seed, 0)).unwrap();
        let first = t.state.initial_spacing();
        assert!(t.state.min_spacing() > 0.25 * first);
        for s in &t.history {
            assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(s.weights.iter().all(|&w| w > 0.0));
        }
    }
}

/// Two tips repel: their preimage gap widens as the cluster grows.
#[test]
fn tips_repel() {
    let arms = [ArmSpec { angle: 0.0, length: 0.3 }, ArmSpec { angle: 1.0, length: 0.3 }];
    let init = Arc::new(build_initial(&arms, 1e-3, 1e-2).unwrap());
    let traj = lpm_run(init, 1.0, 1e-3, 0.3).unwrap();
    let gaps: Vec<f64> = traj.history.iter().map(|s| wrapped_diff(s.angles[1], s.angles[0]).abs()).collect();
    assert!(gaps.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    assert!(gaps.last().unwrap() > &(gaps[0] + 0.05));
}

#[test]
fn history_csv_has_one_row_per_step() {
    let t = multinomial_run(symmetric(2), 2.0, 0.05, 0.5, &mut stream(3, 0)).unwrap();
    let mut buf = Vec::new();
    write_tip_history_csv(&t.history, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,t,arm,phi_0,phi_1,p_0,p_1,abs_second_deriv_0,abs_second_deriv_1"
    );
    assert_eq!(lines.count(), 11);
}
