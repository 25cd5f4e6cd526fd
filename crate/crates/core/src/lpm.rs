//! Laplacian path model by operator splitting: each macro step of length
//! `dt` freezes the weights `p_j ∝ |Φ''(x_j)|^{−η}` and attaches a slit of
//! capacity `p_j·dt` at every tip in turn, sweeping the arms forwards on
//! even steps and backwards on odd ones.
//!
//! A k-fold symmetric state is advanced instead by the root map of a single
//! slit, which is the exact flow for equal weights and keeps the symmetry to
//! rounding.

use crate::angle::{chord, normalize};
use crate::chain::{ConformalChain, InitialConfig};
use crate::error::{Error, Result};
use crate::measures::{Atom, CylinderMeasure};
use crate::tips::{step_count, TipSnapshot, TipState};
use serde::Serialize;
use std::io::Write;
use std::sync::Arc;

pub const MIN_DT: f64 = 1e-7;
pub const MAX_DT: f64 = 1e-2;

/// Weight-scaled capacities below this are skipped (they would underflow
/// the slit constants); the skipped mass is below rounding of `dt`.
const MIN_MICRO_CAPACITY: f64 = 1e-300;

#[derive(Debug, Clone, Serialize)]
pub struct LpmTrajectory {
    #[serde(skip)]
    pub chain: ConformalChain,
    pub eta: f64,
    pub dt: f64,
    pub horizon: f64,
    pub integrator: String,
    /// Snapshot at `t = n·dt` for `n = 0..=steps`; weights are the ones
    /// used during the step starting there.
    pub history: Vec<TipSnapshot>,
}

impl LpmTrajectory {
    pub fn steps(&self) -> usize {
        self.history.len() - 1
    }

    /// Snapshot in force at time `t` (piecewise constant, left-continuous
    /// grid lookup).
    pub fn snapshot_at(&self, t: f64) -> &TipSnapshot {
        let i = ((t / self.dt) + 1e-9).floor().max(0.0) as usize;
        &self.history[i.min(self.history.len() - 1)]
    }
}

pub fn lpm_run(initial: Arc<InitialConfig>, eta: f64, dt: f64, horizon: f64) -> Result<LpmTrajectory> {
    if !(MIN_DT..=MAX_DT).contains(&dt) {
        return Err(Error::domain(format!("dt must lie in [{MIN_DT}, {MAX_DT}], got {dt}")));
    }
    if !(horizon > 0.0) {
        return Err(Error::domain(format!("horizon must be positive, got {horizon}")));
    }
    if initial.tips.is_empty() {
        return Err(Error::domain("the path model needs at least one arm"));
    }
    let mut state = TipState::from_initial(&initial, eta)?;
    let mut chain = ConformalChain::new(initial);
    let steps = step_count(horizon, dt);
    let mut history = Vec::with_capacity(steps + 1);
    history.push(TipSnapshot::of(&state, 0, 0.0, None));
    for n in 1..=steps {
        if state.symmetric_phase().is_some() {
            state.attach_symmetric(&mut chain, dt)?;
        } else {
            let weights = state.weights().to_vec();
            let k = weights.len();
            for i in 0..k {
                let j = if n % 2 == 1 { i } else { k - 1 - i };
                let c = weights[j] * dt;
                if c >= MIN_MICRO_CAPACITY {
                    state.attach(&mut chain, j, c)?;
                }
            }
        }
        history.push(TipSnapshot::of(&state, n, n as f64 * dt, None));
    }
    Ok(LpmTrajectory {
        chain,
        eta,
        dt,
        horizon,
        integrator: "splitting: frozen weights, alternating round-robin micro-slits; exact root map on symmetric states".into(),
        history,
    })
}

/// Tip-angle ODE `φ_j' = Σ_{l≠j} p_l cot((φ_j − φ_l)/2)` integrated by RK4
/// with the trajectory's weights held piecewise constant; returns the
/// largest chordal deviation from the splitting angles over the grid.
pub fn tip_ode_crosscheck(traj: &LpmTrajectory) -> Result<f64> {
    if traj.history.len() < 10 {
        return Err(Error::domain("cross-check needs at least 10 grid points"));
    }
    let mut phi = traj.history[0].angles.clone();
    let rhs = |phi: &[f64], p: &[f64]| -> Vec<f64> {
        phi.iter()
            .enumerate()
            .map(|(j, &a)| {
                phi.iter()
                    .enumerate()
                    .filter(|&(l, _)| l != j)
                    .map(|(l, &b)| p[l] / (0.5 * (a - b)).tan())
                    .sum()
            })
            .collect()
    };
    let axpy = |x: &[f64], k: &[f64], h: f64| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + h * b).collect() };
    let mut worst: f64 = 0.0;
    for w in traj.history.windows(2) {
        let p = &w[0].weights;
        let h = w[1].t - w[0].t;
        let k1 = rhs(&phi, p);
        let k2 = rhs(&axpy(&phi, &k1, 0.5 * h), p);
        let k3 = rhs(&axpy(&phi, &k2, 0.5 * h), p);
        let k4 = rhs(&axpy(&phi, &k3, h), p);
        for j in 0..phi.len() {
            phi[j] = normalize(phi[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]));
        }
        for (a, b) in phi.iter().zip(&w[1].angles) {
            worst = worst.max(chord(*a, *b));
        }
    }
    Ok(worst)
}

/// `Σ_j p_j δ_{φ_j} ⊗ dt/T` sampled on `time_cells` equal cells: atoms sit
/// at cell midpoints and use the state at the left end of the cell.
pub fn encode_driving(traj: &LpmTrajectory, time_cells: usize) -> Result<CylinderMeasure> {
    let steps = traj.steps();
    if time_cells == 0 || !steps.is_multiple_of(time_cells) {
        return Err(Error::domain(format!("{time_cells} cells do not divide {steps} steps")));
    }
    let stride = steps / time_cells;
    let cell = stride as f64 * traj.dt;
    let mut atoms = Vec::new();
    for i in 0..time_cells {
        let s = &traj.history[i * stride];
        let start = s.t;
        let end = (start + cell).min(traj.horizon);
        if end <= start {
            break;
        }
        let weight = (end - start) / traj.horizon;
        for (phi, p) in s.angles.iter().zip(&s.weights) {
            atoms.push(Atom { theta: *phi, t: 0.5 * (start + end), mass: p * weight });
        }
    }
    CylinderMeasure::new(atoms, traj.horizon)
}

/// CSV with columns `t, phi_j…, p_j…, abs_second_deriv_j…`.
pub fn write_trajectory_csv<W: Write>(traj: &LpmTrajectory, writer: W) -> Result<()> {
    let k = traj.history.first().map_or(0, |s| s.angles.len());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string()];
    header.extend((0..k).map(|j| format!("phi_{j}")));
    header.extend((0..k).map(|j| format!("p_{j}")));
    header.extend((0..k).map(|j| format!("abs_second_deriv_{j}")));
    w.write_record(&header)?;
    for s in &traj.history {
        let mut rec = vec![s.t.to_string()];
        rec.extend(s.angles.iter().chain(&s.weights).chain(&s.abs_second).map(|x| x.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angle::wrapped_diff;
    use crate::chain::{build_initial, ArmSpec};
    use std::f64::consts::TAU;

    #[test]
    fn symmetric_arms_stay_put() {
        let arms: Vec<ArmSpec> = (0..3).map(|m| ArmSpec { angle: 0.2 + TAU * m as f64 / 3.0, length: 0.4 }).collect();
        let init = Arc::new(build_initial(&arms, 1e-3, 1e-3).unwrap());
        let traj = lpm_run(init, 2.0, 1e-2, 0.2).unwrap();
        for s in &traj.history {
            for (j, a) in s.angles.iter().enumerate() {
                assert!(wrapped_diff(*a, arms[j].angle).abs() < 1e-10, "t={} j={j} dev={:e}", s.t, wrapped_diff(*a, arms[j].angle));
                assert!((s.weights[j] - 1.0 / 3.0).abs() < 1e-12);
            }
        }
        assert!(tip_ode_crosscheck(&traj).unwrap() < 1e-10);
        let m = encode_driving(&traj, 20).unwrap();
        assert_eq!(m.len(), 60);
    }

    #[test]
    fn single_arm_capacity_grows_linearly() {
        let init = Arc::new(build_initial(&[ArmSpec { angle: 0.0, length: 0.3 }], 1e-3, 1e-3).unwrap());
        let c0 = init.capacity();
        let traj = lpm_run(init, 2.0, 1e-2, 0.3).unwrap();
        let z = num_complex::Complex64::new(1e8, 0.0);
        let slope = traj.chain.evaluate(z).unwrap().re / 1e8;
        assert!((slope / (c0 + 0.3).exp() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn dt_range_is_enforced() {
        let init = Arc::new(build_initial(&[ArmSpec { angle: 0.0, length: 0.3 }], 1e-3, 1e-3).unwrap());
        assert!(lpm_run(init.clone(), 2.0, 0.1, 1.0).is_err());
        assert!(lpm_run(init, 2.0, 1e-8, 1.0).is_err());
    }
}
