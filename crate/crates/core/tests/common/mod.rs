#![allow(dead_code)]

use loewner_core::measures::{Atom, CylinderMeasure, CylinderMetric};
use rand::{Rng, RngExt};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::f64::consts::{PI, TAU};

/// p-value of a chi-square uniformity test of angles in `(−π, π]`.
pub fn chi_square_uniform(angles: &[f64], bins: usize) -> f64 {
    let mut counts = vec![0usize; bins];
    for &a in angles {
        let b = (((a + PI) / TAU) * bins as f64).floor() as usize;
        counts[b.min(bins - 1)] += 1;
    }
    let e = angles.len() as f64 / bins as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(stat)
}

pub fn random_measure<R: Rng + ?Sized>(rng: &mut R, atoms: usize, horizon: f64) -> CylinderMeasure {
    let raw: Vec<f64> = (0..atoms).map(|_| 0.05 + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let atoms = raw
        .iter()
        .map(|m| Atom { theta: PI - TAU * rng.random::<f64>(), t: horizon * rng.random::<f64>(), mass: m / total })
        .collect();
    CylinderMeasure::new(atoms, horizon).unwrap()
}

/// Exhaustive search over the vertices of
/// `max Σ wᵢφᵢ  s.t.  φᵢ − φⱼ ≤ (1 − a)dᵢⱼ, |φᵢ| ≤ a, 0 ≤ a ≤ 1`
/// on the union support of `μ − ν`.
pub fn d_bw_bruteforce(mu: &CylinderMeasure, nu: &CylinderMeasure, metric: &CylinderMetric) -> f64 {
    let mut pts: Vec<Atom> = Vec::new();
    let mut w: Vec<f64> = Vec::new();
    for (m, sign) in [(mu, 1.0), (nu, -1.0)] {
        for a in m.atoms() {
            match pts.iter().position(|p| p.theta == a.theta && p.t == a.t) {
                Some(i) => w[i] += sign * a.mass,
                None => {
                    pts.push(*a);
                    w.push(sign * a.mass);
                }
            }
        }
    }
    let n = pts.len();
    let vars = n + 1; // φ_0..φ_{n−1}, a
    // rows g·x ≤ h
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d = metric.distance(&pts[i], &pts[j]);
                let mut g = vec![0.0; vars];
                g[i] = 1.0;
                g[j] = -1.0;
                g[n] = d;
                rows.push((g, d));
            }
        }
        for s in [1.0, -1.0] {
            let mut g = vec![0.0; vars];
            g[i] = s;
            g[n] = -1.0;
            rows.push((g, 0.0));
        }
    }
    let mut g = vec![0.0; vars];
    g[n] = 1.0;
    rows.push((g.clone(), 1.0));
    g[n] = -1.0;
    rows.push((g, 0.0));

    let mut best = f64::NEG_INFINITY;
    let mut pick = vec![0usize; vars];
    combinations(rows.len(), vars, 0, 0, &mut pick, &mut |idx| {
        let a: Vec<Vec<f64>> = idx.iter().map(|&r| rows[r].0.clone()).collect();
        let b: Vec<f64> = idx.iter().map(|&r| rows[r].1).collect();
        if let Some(x) = solve(a, b) {
            if rows.iter().all(|(g, h)| g.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() <= h + 1e-9) {
                let v: f64 = (0..n).map(|i| w[i] * x[i]).sum();
                best = best.max(v);
            }
        }
    });
    best
}

fn combinations(n: usize, k: usize, start: usize, depth: usize, pick: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if depth == k {
        f(pick);
        return;
    }
    for i in start..n {
        pick[depth] = i;
        combinations(n, k, i + 1, depth + 1, pick, f);
    }
}

fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-12 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                if f != 0.0 {
                    for k in c..n {
                        a[r][k] -= f * a[c][k];
                    }
                    b[r] -= f * b[c];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}
