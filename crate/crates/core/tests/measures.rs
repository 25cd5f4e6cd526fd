mod common;

use common::{chi_square_uniform, d_bw_bruteforce, random_measure};
use loewner_core::measures::{
    coarsen, coarsening_bound, d_bw, d_bw_with, encode_particles, read_measure, write_measure, Atom, CylinderMeasure,
    CylinderMetric, DbwMethod, MeasureHeader,
};
use loewner_core::rng::stream;
use proptest::prelude::*;
use rand::RngExt;
use std::f64::consts::{PI, TAU};

fn d(mu: &CylinderMeasure, nu: &CylinderMeasure, m: &CylinderMetric) -> f64 {
    d_bw(mu, nu, m).unwrap().value
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metric_axioms(seed in 0u64..u64::MAX, ts in 0.1f64..10.0) {
        let mut rng = stream(seed, 0);
        let metric = CylinderMetric::new(ts).unwrap();
        let m: Vec<CylinderMeasure> = (0..3).map(|_| {
            let k = 1 + (rng.random::<f64>() * 8.0) as usize;
            random_measure(&mut rng, k, 1.0)
        }).collect();
        let ab = d(&m[0], &m[1], &metric);
        prop_assert!((0.0..=2.0 + 1e-12).contains(&ab));
        prop_assert!((ab - d(&m[1], &m[0], &metric)).abs() < 1e-9);
        prop_assert!(d(&m[0], &m[0], &metric).abs() < 1e-12);
        prop_assert!(d(&m[0], &m[2], &metric) <= ab + d(&m[1], &m[2], &metric) + 1e-9);
    }

    #[test]
    fn matches_the_vertex_enumeration(seed in 0u64..u64::MAX) {
        let mut rng = stream(seed, 1);
        let k = 1 + (rng.random::<f64>() * 3.0) as usize;
        let mu = random_measure(&mut rng, k, 2.0);
        let nu = random_measure(&mut rng, 4 - k, 2.0);
        let metric = CylinderMetric::new(0.5).unwrap();
        prop_assert!((d(&mu, &nu, &metric) - d_bw_bruteforce(&mu, &nu, &metric)).abs() < 1e-8);
    }

    /// Any coupling bounds `W₁`, and `d_BW ≤ W₁·TV/(W₁ + TV)`.
    #[test]
    fn bounded_by_any_coupling(seed in 0u64..u64::MAX) {
        let mut rng = stream(seed, 2);
        let mu = random_measure(&mut rng, 10, 1.0);
        let nu = random_measure(&mut rng, 10, 1.0);
        let metric = CylinderMetric::default();
        // north-west corner plan in atom order
        let (a, b) = (mu.atoms(), nu.atoms());
        let (mut i, mut j, mut ra, mut rb, mut cost) = (0, 0, a[0].mass, b[0].mass, 0.0);
        while i < a.len() && j < b.len() {
            let f = ra.min(rb);
            cost += f * metric.distance(&a[i], &b[j]);
            ra -= f;
            rb -= f;
            if ra <= rb {
                i += 1;
                ra = a.get(i).map_or(0.0, |x| x.mass);
            } else {
                j += 1;
                rb = b.get(j).map_or(0.0, |x| x.mass);
            }
        }
        let tv = 2.0;
        prop_assert!(d(&mu, &nu, &metric) <= cost * tv / (cost + tv) + 1e-9);
    }
}

#[test]
fn half_dirac() {
    let metric = CylinderMetric::default();
    for gap in [0.2, 1.0, 2.5] {
        let x = Atom { theta: 0.0, t: 0.3, mass: 1.0 };
        let y = Atom { theta: gap, t: 0.3, mass: 0.5 };
        let mu = CylinderMeasure::new(vec![x], 1.0).unwrap();
        let nu = CylinderMeasure::new(vec![Atom { mass: 0.5, ..x }, y], 1.0).unwrap();
        let dist = metric.distance(&x, &y);
        assert!((d(&mu, &nu, &metric) - dist / (2.0 + dist)).abs() < 1e-12);
    }
}

#[test]
fn simplex_and_transport_routes_agree() {
    let mut rng = stream(31, 0);
    let metric = CylinderMetric::new(2.0).unwrap();
    for _ in 0..30 {
        let mu = random_measure(&mut rng, 8, 1.0);
        let nu = random_measure(&mut rng, 9, 1.0);
        let s = d_bw_with(&mu, &nu, &metric, DbwMethod::Simplex, 100).unwrap().value;
        let t = d_bw_with(&mu, &nu, &metric, DbwMethod::Transport, 100).unwrap().value;
        assert!((s - t).abs() < 1e-9, "{s} vs {t}");
    }
}

#[test]
fn monotone_in_the_time_scale() {
    let mut rng = stream(32, 0);
    let mu = random_measure(&mut rng, 6, 1.0);
    let nu = random_measure(&mut rng, 6, 1.0);
    let vals: Vec<f64> = [0.1, 0.5, 1.0, 4.0, 20.0].iter().map(|&s| d(&mu, &nu, &CylinderMetric::new(s).unwrap())).collect();
    assert!(vals.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{vals:?}");
}

#[test]
fn coarsening_moves_by_at_most_its_bound() {
    let mut rng = stream(33, 0);
    let metric = CylinderMetric::default();
    for (nth, nti) in [(16, 8), (64, 16)] {
        let m = random_measure(&mut rng, 200, 1.0);
        let c = coarsen(&m, nth, nti).unwrap();
        assert!((c.total_mass() - 1.0).abs() < 1e-12);
        assert!(c.len() <= nth * nti);
        let gap = d(&m, &c, &metric);
        assert!(gap <= coarsening_bound(&metric, nth, nti, 1.0) + 1e-12, "{gap}");
    }
}

#[test]
fn particles_tile_the_horizon() {
    let events: Vec<(f64, f64)> = (0..10).map(|i| (0.1 * i as f64, 0.1)).collect();
    let m = encode_particles(&events, 1.0).unwrap();
    assert_eq!(m.len(), 10);
    for (k, a) in m.atoms().iter().enumerate() {
        assert!((a.t - 0.1 * k as f64 - 0.05).abs() < 1e-12 && (a.mass - 0.1).abs() < 1e-12);
    }
    assert!(encode_particles(&events[..5], 1.0).is_err());
}

/// Uniform attachment angles encode to a measure whose angular marginal
/// passes a uniformity test.
#[test]
fn uniform_angles_encode_uniformly() {
    let mut rng = stream(34, 0);
    let events: Vec<(f64, f64)> = (0..20_000).map(|_| (PI - TAU * rng.random::<f64>(), 5e-5)).collect();
    let m = encode_particles(&events, 1.0).unwrap();
    let thetas: Vec<f64> = m.atoms().iter().map(|a| a.theta).collect();
    assert!(chi_square_uniform(&thetas, 32) > 1e-3);
}

#[test]
fn files_round_trip() {
    let dir = std::env::temp_dir().join(format!("loewner-measure-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("m.csv");
    let mut rng = stream(35, 0);
    let m = random_measure(&mut rng, 12, 0.7);
    let header = MeasureHeader::new(0.7, &CylinderMetric::new(3.0).unwrap(), serde_json::json!({"model": "test"}));
    write_measure(&path, &m, &header).unwrap();
    let (back, h) = read_measure(&path).unwrap();
    assert_eq!(back, m);
    assert_eq!(h.time_scale, 3.0);
    assert_eq!(h.provenance["model"], "test");
    std::fs::remove_dir_all(&dir).unwrap();
}
