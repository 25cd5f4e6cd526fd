//! Angle bookkeeping on the unit circle.

use num_complex::Complex64;
use std::f64::consts::{PI, TAU};

/// Wraps an angle into `(-π, π]`.
pub fn normalize(theta: f64) -> f64 {
    let mut a = theta % TAU;
    if a <= -PI {
        a += TAU;
    } else if a > PI {
        a -= TAU;
    }
    a
}

/// Signed difference `a - b` wrapped into `(-π, π]`.
pub fn wrapped_diff(a: f64, b: f64) -> f64 {
    normalize(a - b)
}

/// Chord length `|e^{ia} - e^{ib}|`.
pub fn chord(a: f64, b: f64) -> f64 {
    2.0 * (0.5 * wrapped_diff(a, b)).sin().abs()
}

#[inline]
pub fn unit(theta: f64) -> Complex64 {
    Complex64::from_polar(1.0, theta)
}

/// Minimum pairwise chordal distance of a set of angles (`+∞` for fewer than two).
pub fn min_chord_spacing(angles: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, &a) in angles.iter().enumerate() {
        for &b in &angles[i + 1..] {
            best = best.min(chord(a, b));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_range() {
        assert_eq!(normalize(PI), PI);
        assert_eq!(normalize(-PI), PI);
        assert!((normalize(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize(0.1 - TAU) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn chord_is_symmetric_and_bounded() {
        assert!((chord(0.0, PI) - 2.0).abs() < 1e-15);
        assert!((chord(0.3, -2.0) - chord(-2.0, 0.3)).abs() < 1e-15);
        assert!((chord(3.1, -3.1) - (unit(3.1) - unit(-3.1)).norm()).abs() < 1e-14);
    }
}
