use loewner_core::angle::unit;
use loewner_core::slit::{
    distance_estimate_check, slit_geometry, slit_map, slit_map_deriv, slit_map_inverse, RotatedSlit,
};
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::PI;

fn exterior() -> impl Strategy<Value = Complex64> {
    (1.001f64..6.0, -PI..PI).prop_map(|(r, a)| Complex64::from_polar(r, a))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn rotation_equivariance(c in 1e-5f64..0.9, theta in -PI..PI, z in exterior()) {
        let s0 = RotatedSlit::with_capacity(c, 0.0).unwrap();
        let s = RotatedSlit::with_capacity(c, theta).unwrap();
        let r = unit(theta);
        let lhs = slit_map(&s, r * z).unwrap();
        let rhs = r * slit_map(&s0, z).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-13 * rhs.norm().max(1.0));
    }

    #[test]
    fn inverse_round_trip(c in 1e-5f64..0.9, theta in -PI..PI, z in exterior()) {
        let s = RotatedSlit::with_capacity(c, theta).unwrap();
        let w = slit_map(&s, z).unwrap();
        let back = slit_map_inverse(&s, w).unwrap();
        prop_assert!((back - z).norm() <= 1e-10 * z.norm());
    }

    #[test]
    fn image_stays_outside_the_disc(c in 1e-5f64..0.9, z in exterior()) {
        let s = RotatedSlit::with_capacity(c, 0.3).unwrap();
        prop_assert!(slit_map(&s, z).unwrap().norm() > 1.0);
    }

    /// Points whose image lies within √c of the circle (in log-radius)
    /// have |f'| > 1.
    #[test]
    fn expands_next_to_the_circle(c in 1e-4f64..0.05, frac in 0.001f64..1.0, a in 0.01f64..(2.0 * PI - 0.01)) {
        let s = RotatedSlit::with_capacity(c, 0.0).unwrap();
        let zeta = slit_map_inverse(&s, Complex64::from_polar((frac * c.sqrt()).exp(), a)).unwrap();
        prop_assert!(slit_map_deriv(&s, zeta).unwrap().norm() > 1.0);
    }
}

#[test]
fn far_field_has_logarithmic_capacity() {
    for c in [1e-4, 0.01, 0.3] {
        let s = RotatedSlit::with_capacity(c, 1.0).unwrap();
        let z = Complex64::new(1e7, 3e6);
        let ratio = slit_map(&s, z).unwrap() / z;
        assert!((ratio.norm() - f64::exp(c)).abs() < 1e-6 * f64::exp(c), "c = {c}: {ratio}");
    }
}

#[test]
fn square_root_behaviour_at_the_base_point() {
    for c in [1e-4, 1e-2, 0.2] {
        let g = slit_geometry(c).unwrap();
        let base = unit(g.half_arc());
        for k in 4..9 {
            let eps = g.half_arc() * 10f64.powi(-k);
            let ratio = distance_estimate_check(&g, base * (1.0 + eps)).unwrap();
            assert!((ratio - 1.0).abs() < 50.0 * eps.sqrt() / g.half_arc().sqrt(), "c={c} eps={eps}: {ratio}");
        }
    }
}

#[test]
fn slit_length_and_half_arc_scale_like_root_capacity() {
    for c in [1e-8, 1e-6, 1e-4] {
        let g = slit_geometry(c).unwrap();
        let s = 2.0 * f64::sqrt(c);
        assert!((g.length() / s - 1.0).abs() < 2.0 * c.sqrt());
        assert!((g.half_arc() / s - 1.0).abs() < 2.0 * c.sqrt());
    }
}

#[test]
fn tip_preimage_is_the_critical_point() {
    let s = RotatedSlit::with_capacity(0.05, -2.0).unwrap();
    assert!((slit_map(&s, unit(-2.0)).unwrap() - s.tip()).norm() < 1e-14);
    let near = slit_map_deriv(&s, unit(-2.0) * (1.0 + 1e-8)).unwrap();
    assert!(near.norm() < 1e-6);
}
