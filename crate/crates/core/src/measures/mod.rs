//! Finitely supported probability measures on the cylinder `𝕋 × [0, T]` and
//! the bounded-Lipschitz distance between them.

mod dbw;
mod io;
mod transport;

pub use dbw::{coarsening_bound, d_bw, d_bw_with, DbwMethod, DbwSolution, DEFAULT_SUPPORT_CAP};
pub use io::{read_measure, write_measure, MeasureHeader};

use crate::angle::{chord, normalize};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub theta: f64,
    pub t: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CylinderMeasure {
    atoms: Vec<Atom>,
    horizon: f64,
}

/// `d((θ₁,t₁),(θ₂,t₂)) = |e^{iθ₁} − e^{iθ₂}| + time_scale·|t₁ − t₂|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylinderMetric {
    pub time_scale: f64,
}

impl Default for CylinderMetric {
    fn default() -> Self {
        Self { time_scale: 1.0 }
    }
}

impl CylinderMetric {
    pub fn new(time_scale: f64) -> Result<Self> {
        if !(time_scale > 0.0) || !time_scale.is_finite() {
            return Err(Error::domain(format!("time scale must be positive, got {time_scale}")));
        }
        Ok(Self { time_scale })
    }

    #[inline]
    pub fn distance(&self, a: &Atom, b: &Atom) -> f64 {
        chord(a.theta, b.theta) + self.time_scale * (a.t - b.t).abs()
    }
}

impl CylinderMeasure {
    /// Builds a probability measure, merging atoms at identical points and
    /// dropping massless ones.
    pub fn new(atoms: Vec<Atom>, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::domain(format!("horizon must be positive, got {horizon}")));
        }
        let slack = 1e-12 * horizon;
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            if !(a.mass >= 0.0) || !a.mass.is_finite() || !a.theta.is_finite() {
                return Err(Error::domain(format!("invalid atom {a:?}")));
            }
            if a.t < -slack || a.t > horizon + slack {
                return Err(Error::domain(format!("atom time {} outside [0, {horizon}]", a.t)));
            }
            if a.mass > 0.0 {
                merged.push(Atom { theta: normalize(a.theta), t: a.t.clamp(0.0, horizon), mass: a.mass });
            }
        }
        merged.sort_by(|x, y| x.t.total_cmp(&y.t).then(x.theta.total_cmp(&y.theta)));
        merged.dedup_by(|next, kept| {
            if next.t == kept.t && next.theta == kept.theta {
                kept.mass += next.mass;
                true
            } else {
                false
            }
        });
        let total: f64 = merged.iter().map(|a| a.mass).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("masses sum to {total}, not 1")));
        }
        Ok(Self { atoms: merged, horizon })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }
}

/// One atom per particle at the midpoint of its capacity interval, mass
/// proportional to its capacity; the interval running past `horizon` is
/// clipped.
pub fn encode_particles(events: &[(f64, f64)], horizon: f64) -> Result<CylinderMeasure> {
    let mut atoms = Vec::with_capacity(events.len());
    let mut start = 0.0;
    for &(theta, capacity) in events {
        if start >= horizon {
            break;
        }
        let end = (start + capacity).min(horizon);
        atoms.push(Atom { theta, t: 0.5 * (start + end), mass: (end - start) / horizon });
        start += capacity;
    }
    if start < horizon * (1.0 - 1e-12) {
        return Err(Error::domain(format!("particles cover capacity {start} < horizon {horizon}")));
    }
    CylinderMeasure::new(atoms, horizon)
}

/// Bins masses to the centres of a regular `n_theta × n_time` grid.
pub fn coarsen(m: &CylinderMeasure, n_theta: usize, n_time: usize) -> Result<CylinderMeasure> {
    if n_theta < 2 || n_time < 2 {
        return Err(Error::domain("coarsening grid needs at least 2 × 2 cells"));
    }
    let wt = TAU / n_theta as f64;
    let ht = m.horizon / n_time as f64;
    let atoms = m
        .atoms
        .iter()
        .map(|a| {
            let i = (((a.theta + PI) / wt).floor() as isize).clamp(0, n_theta as isize - 1);
            let k = ((a.t / ht).floor() as isize).clamp(0, n_time as isize - 1);
            Atom {
                theta: -PI + (i as f64 + 0.5) * wt,
                t: (k as f64 + 0.5) * ht,
                mass: a.mass,
            }
        })
        .collect();
    CylinderMeasure::new(atoms, m.horizon)
}
