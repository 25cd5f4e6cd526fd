//! `d_BW(μ, ν) = sup { ∫φ d(μ − ν) : ‖φ‖_Lip + ‖φ‖_∞ ≤ 1 }`.
//!
//! On the union support this is the linear program
//! `max Σ wᵢφᵢ` s.t. `φᵢ − φⱼ ≤ b·dᵢⱼ`, `|φᵢ| ≤ a`, `a + b ≤ 1`.
//! Small supports go straight to the simplex. Larger ones use the fact that,
//! for balanced masses and fixed `b` (with `a = 1 − b`), the inner problem
//! is a transport problem with the truncated metric `min(b·dᵢⱼ, 2(1 − b))`.
//! Its value is concave in `b`; every optimal plan yields an affine upper
//! bound, and Kelley's cutting-plane method closes the gap.

use super::transport;
use super::{Atom, CylinderMeasure, CylinderMetric};
use crate::angle::chord;
use crate::error::{Error, Result};
use microlp::{ComparisonOp, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};

pub const DEFAULT_SUPPORT_CAP: usize = 4000;

/// Largest union support handed to the simplex under [`DbwMethod::Auto`].
const SIMPLEX_LIMIT: usize = 24;
const KELLEY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DbwMethod {
    Auto,
    Simplex,
    Transport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbwSolution {
    pub value: f64,
    /// Attained sup-norm bound.
    pub a: f64,
    /// Attained Lipschitz bound.
    pub b: f64,
    pub method: DbwMethod,
}

pub fn d_bw(mu: &CylinderMeasure, nu: &CylinderMeasure, metric: &CylinderMetric) -> Result<DbwSolution> {
    d_bw_with(mu, nu, metric, DbwMethod::Auto, DEFAULT_SUPPORT_CAP)
}

pub fn d_bw_with(
    mu: &CylinderMeasure,
    nu: &CylinderMeasure,
    metric: &CylinderMetric,
    method: DbwMethod,
    support_cap: usize,
) -> Result<DbwSolution> {
    let (mt, nt) = (mu.total_mass(), nu.total_mass());
    if (mt - nt).abs() > 1e-9 {
        return Err(Error::domain(format!("total masses differ: {mt} vs {nt}")));
    }
    let (points, w) = signed_difference(mu, nu);
    if points.len() > support_cap {
        return Err(Error::domain(format!(
            "union support has {} points (cap {support_cap}); coarsen the measures first",
            points.len()
        )));
    }
    if points.is_empty() {
        return Ok(DbwSolution { value: 0.0, a: 1.0, b: 0.0, method });
    }
    let use_simplex = match method {
        DbwMethod::Simplex => true,
        DbwMethod::Transport => false,
        DbwMethod::Auto => points.len() <= SIMPLEX_LIMIT,
    };
    let mut sol = if use_simplex { by_simplex(&points, &w, metric)? } else { by_transport(&points, &w, metric)? };
    sol.method = if use_simplex { DbwMethod::Simplex } else { DbwMethod::Transport };
    Ok(sol)
}

/// Union support and `μ − ν` on it, with zero entries dropped.
fn signed_difference(mu: &CylinderMeasure, nu: &CylinderMeasure) -> (Vec<Atom>, Vec<f64>) {
    let mut all: Vec<(Atom, f64)> = mu
        .atoms()
        .iter()
        .map(|a| (*a, a.mass))
        .chain(nu.atoms().iter().map(|a| (*a, -a.mass)))
        .collect();
    all.sort_by(|x, y| x.0.t.total_cmp(&y.0.t).then(x.0.theta.total_cmp(&y.0.theta)));
    let mut points: Vec<Atom> = Vec::new();
    let mut w: Vec<f64> = Vec::new();
    for (a, m) in all {
        match points.last() {
            Some(p) if p.t == a.t && p.theta == a.theta => *w.last_mut().unwrap() += m,
            _ => {
                points.push(a);
                w.push(m);
            }
        }
    }
    let keep: Vec<usize> = (0..w.len()).filter(|&i| w[i] != 0.0).collect();
    (keep.iter().map(|&i| points[i]).collect(), keep.iter().map(|&i| w[i]).collect())
}

fn by_simplex(points: &[Atom], w: &[f64], metric: &CylinderMetric) -> Result<DbwSolution> {
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let phi: Vec<_> = w.iter().map(|&wi| lp.add_var(wi, (-1.0, 1.0))).collect();
    let a = lp.add_var(0.0, (0.0, 1.0));
    let b = lp.add_var(0.0, (0.0, 1.0));
    lp.add_constraint([(a, 1.0), (b, 1.0)], ComparisonOp::Le, 1.0);
    for i in 0..points.len() {
        lp.add_constraint([(phi[i], 1.0), (a, -1.0)], ComparisonOp::Le, 0.0);
        lp.add_constraint([(phi[i], -1.0), (a, -1.0)], ComparisonOp::Le, 0.0);
        for j in 0..points.len() {
            if i != j {
                let d = metric.distance(&points[i], &points[j]);
                lp.add_constraint([(phi[i], 1.0), (phi[j], -1.0), (b, -d)], ComparisonOp::Le, 0.0);
            }
        }
    }
    let sol = lp
        .solve()
        .map_err(|e| Error::Numeric(format!("d_BW linear program: {e}")))?
        .into_solution()
        .map_err(|_| Error::Numeric("d_BW linear program was interrupted".into()))?;
    Ok(DbwSolution {
        value: sol.objective().max(0.0),
        a: sol.var_value(a),
        b: sol.var_value(b),
        method: DbwMethod::Simplex,
    })
}

fn by_transport(points: &[Atom], w: &[f64], metric: &CylinderMetric) -> Result<DbwSolution> {
    let src: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0).collect();
    let snk: Vec<usize> = (0..w.len()).filter(|&i| w[i] < 0.0).collect();
    let supply: Vec<f64> = src.iter().map(|&i| w[i]).collect();
    let demand: Vec<f64> = snk.iter().map(|&j| -w[j]).collect();
    let dist: Vec<Vec<f64>> = src
        .iter()
        .map(|&i| snk.iter().map(|&j| metric.distance(&points[i], &points[j])).collect())
        .collect();
    let mass: f64 = supply.iter().sum();

    // V(b) and the affine cut (intercept, slope) from its optimal plan
    let evaluate = |b: f64| -> Result<(f64, (f64, f64))> {
        let cap = 2.0 * (1.0 - b);
        let cost: Vec<Vec<f64>> = dist.iter().map(|row| row.iter().map(|&d| (b * d).min(cap)).collect()).collect();
        let plan = transport::solve(&supply, &demand, &cost)?;
        let (mut lin, mut flat) = (0.0, 0.0);
        for &(i, j, f) in &plan.flows {
            if b * dist[i][j] <= cap {
                lin += f * dist[i][j];
            } else {
                flat += f;
            }
        }
        Ok((plan.cost, (2.0 * flat, lin - 2.0 * flat)))
    };

    let plain = transport::solve(&supply, &demand, &dist)?;
    let mut cuts = vec![(0.0, plain.cost), (2.0 * mass, -2.0 * mass)];
    let mut best = (0.0, 0.0);
    for _ in 0..500 {
        let (b_star, upper) = envelope_max(&cuts);
        let (v, cut) = evaluate(b_star)?;
        if v > best.0 {
            best = (v, b_star);
        }
        if upper - best.0 <= KELLEY_TOL * upper.max(1.0) {
            return Ok(DbwSolution { value: best.0, a: 1.0 - best.1, b: best.1, method: DbwMethod::Transport });
        }
        cuts.push(cut);
    }
    Err(Error::Numeric("cutting planes for d_BW did not converge".into()))
}

/// Maximiser over `[0, 1]` of the lower envelope of affine functions.
fn envelope_max(cuts: &[(f64, f64)]) -> (f64, f64) {
    let env = |b: f64| cuts.iter().map(|&(c, s)| c + s * b).fold(f64::INFINITY, f64::min);
    let mut cands = vec![0.0, 1.0];
    for (k, &(c1, s1)) in cuts.iter().enumerate() {
        for &(c2, s2) in &cuts[k + 1..] {
            if (s1 - s2).abs() > 1e-300 {
                let b = (c2 - c1) / (s1 - s2);
                if (0.0..=1.0).contains(&b) {
                    cands.push(b);
                }
            }
        }
    }
    cands.into_iter().map(|b| (b, env(b))).fold((0.0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc })
}

/// Largest displacement introduced by [`super::coarsen`], an upper bound on
/// the `d_BW` perturbation it causes.
pub fn coarsening_bound(metric: &CylinderMetric, n_theta: usize, n_time: usize, horizon: f64) -> f64 {
    chord(0.0, std::f64::consts::PI / n_theta as f64) + metric.time_scale * horizon / (2.0 * n_time as f64)
}
