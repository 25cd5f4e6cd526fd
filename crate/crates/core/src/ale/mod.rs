//! Aggregate Loewner evolution ALE(α, η, σ) and the auxiliary model.
//!
//! ALE attaches particle `n + 1` at an angle drawn from
//! `h(θ) ∝ |Φ_n'(e^{σ+iθ})|^{−η}` with capacity `𝐜|Φ_n'(e^{σ+iθ})|^{−α}`.
//! The tip state runs alongside: the new particle's tip replaces the tip of
//! the nearest arm, which keeps the tip windows of the sampler on the
//! points where the density actually peaks.
//!
//! The auxiliary model snaps each draw to the nearest tip and rotates the
//! cluster by the offset `δ`. Rotations commute through the composition, so
//! the stored chain is grown exactly at tips and only the running rotation
//! `δ_1 + ⋯ + δ_n` is kept on the side.

mod sampler;

pub use sampler::{
    log_density_unnormalized, partition_estimate, peak_integral, sample_attachment, AleDensity, AttachmentSampler,
    PartitionEstimate, QuadratureSpec,
};

use crate::angle::{chord, wrapped_diff};
use crate::chain::{ConformalChain, InitialConfig};
use crate::error::{Error, Result};
use crate::measures::{encode_particles, CylinderMeasure};
use crate::slit::MAX_CAPACITY;
use crate::tips::{step_count, tip_local_scale, TipSnapshot, TipState};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::sync::Arc;

pub const DEFAULT_PARTICLE_BUDGET: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AleParams {
    pub eta: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub capacity: f64,
    pub horizon: f64,
    pub budget: usize,
}

impl AleParams {
    pub fn new(eta: f64, sigma: f64, capacity: f64, horizon: f64) -> Result<Self> {
        let p = Self { eta, sigma, alpha: 0.0, capacity, horizon, budget: DEFAULT_PARTICLE_BUDGET };
        p.validate()?;
        Ok(p)
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        Self { alpha, ..self }
    }

    pub fn with_budget(self, budget: usize) -> Self {
        Self { budget, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::domain(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.capacity > 0.0 && self.capacity < MAX_CAPACITY) {
            return Err(Error::domain(format!("capacity must lie in (0, 1), got {}", self.capacity)));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::domain(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !self.eta.is_finite() || !self.alpha.is_finite() {
            return Err(Error::domain("eta and alpha must be finite"));
        }
        if self.alpha == 0.0 {
            let needed = step_count(self.horizon, self.capacity);
            if needed > self.budget {
                return Err(Error::Budget { needed, budget: self.budget });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AleVariant {
    Ale,
    Aux,
}

/// One particle. For the auxiliary model `theta` is the flattened angle
/// actually attached in the stored chain; the sampled angle is
/// `theta + δ_1 + ⋯ + δ_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AleEvent {
    pub n: usize,
    pub theta: f64,
    pub capacity: f64,
    pub nearest_tip: Option<usize>,
    /// Signed offset of the draw from the nearest tip preimage.
    pub delta: Option<f64>,
    /// `Z_n`, absent if it overflows a float.
    pub z_estimate: Option<f64>,
}

impl AleEvent {
    pub fn chord_to_tip(&self) -> Option<f64> {
        self.delta.map(|d| chord(d, 0.0))
    }
}

#[derive(Debug, Clone)]
pub struct AleTrajectory {
    pub variant: AleVariant,
    pub params: AleParams,
    pub chain: ConformalChain,
    pub events: Vec<AleEvent>,
    /// Tip state after each particle (index 0 is the initial state); empty
    /// when no tips are tracked.
    pub history: Vec<TipSnapshot>,
    /// `log Z_n` per step.
    pub log_z: Vec<f64>,
    /// Share of `Z_n` inside the tip windows per step.
    pub tip_mass: Vec<f64>,
    /// Accumulated rotation `δ_1 + ⋯ + δ_n` (auxiliary model only).
    pub rotation: f64,
}

impl AleTrajectory {
    /// `(θ_n, c_n)` per particle.
    pub fn driving(&self) -> Vec<(f64, f64)> {
        self.events.iter().map(|e| (e.theta, e.capacity)).collect()
    }

    /// Cylinder encoding of the driving function.
    pub fn encode(&self) -> Result<CylinderMeasure> {
        encode_ale(self)
    }
}

/// One atom per particle at `(θ_n, (n − ½)𝐜)`, mass `c_n/T`.
pub fn encode_ale(traj: &AleTrajectory) -> Result<CylinderMeasure> {
    encode_particles(&traj.driving(), traj.params.horizon)
}

pub fn ale_run<R: Rng + ?Sized>(
    initial: Arc<InitialConfig>,
    params: &AleParams,
    quad: &QuadratureSpec,
    rng: &mut R,
) -> Result<AleTrajectory> {
    run(AleVariant::Ale, initial, params, quad, rng)
}

pub fn aux_run<R: Rng + ?Sized>(
    initial: Arc<InitialConfig>,
    params: &AleParams,
    quad: &QuadratureSpec,
    rng: &mut R,
) -> Result<AleTrajectory> {
    if initial.tips.is_empty() {
        return Err(Error::domain("the auxiliary model needs at least one arm"));
    }
    run(AleVariant::Aux, initial, params, quad, rng)
}

fn run<R: Rng + ?Sized>(
    variant: AleVariant,
    initial: Arc<InitialConfig>,
    params: &AleParams,
    quad: &QuadratureSpec,
    rng: &mut R,
) -> Result<AleTrajectory> {
    params.validate()?;
    // without arms and without peaks there is nothing to track
    let tracking = !initial.tips.is_empty() || params.eta != 0.0;
    let mut state = TipState::from_initial(&initial, params.eta)?;
    let mut chain = ConformalChain::new(initial);
    let mut events = Vec::new();
    let mut history = Vec::new();
    if tracking && !state.is_empty() {
        history.push(TipSnapshot::of(&state, 0, 0.0, None));
    }
    let (mut log_z, mut tip_mass) = (Vec::new(), Vec::new());
    let mut grown = 0.0;
    let mut rotation = 0.0;
    let mut n = 0;
    // constant capacities: a fixed particle count, free of summation drift
    let fixed = (params.alpha == 0.0).then(|| step_count(params.horizon, params.capacity));
    while fixed.map_or(grown < params.horizon * (1.0 - 1e-12), |steps| n < steps) {
        if n >= params.budget {
            return Err(Error::Budget { needed: n + 1, budget: params.budget });
        }
        n += 1;
        let density = AleDensity::new(&chain, state.tips(), params.eta, params.sigma)?;
        let (theta, est) = if params.eta == 0.0 {
            (sampler::uniform_angle(rng), None)
        } else {
            let s = AttachmentSampler::new(density.clone(), tip_local_scale(&chain, &state), quad)?;
            (s.sample(rng)?, Some(s.estimate().clone()))
        };
        let capacity = if params.alpha == 0.0 {
            params.capacity
        } else {
            params.capacity * (-params.alpha * density.log_abs_deriv(theta)).exp()
        };
        if !(capacity > 0.0 && capacity <= MAX_CAPACITY) {
            return Err(Error::Numeric(format!("α-rule capacity {capacity:e} at step {n} is out of (0, 1]")));
        }
        let (lz, mass) = match &est {
            Some(e) => (e.log_z, e.tip_mass.iter().sum()),
            None => (std::f64::consts::TAU.ln(), 0.0),
        };
        log_z.push(lz);
        tip_mass.push(mass);

        let nearest = state.nearest(theta);
        let delta = nearest.map(|(j, _)| wrapped_diff(theta, state.tips()[j].angle));
        let attached = match (variant, nearest) {
            (AleVariant::Aux, Some((j, _))) => {
                let phi = state.tips()[j].angle;
                state.attach(&mut chain, j, capacity)?;
                rotation += delta.unwrap_or(0.0);
                phi
            }
            (AleVariant::Ale, Some((j, _))) if tracking => {
                state.attach_at(&mut chain, theta, capacity, j, false)?;
                theta
            }
            (AleVariant::Ale, None) if tracking => {
                state.attach_new_arm(&mut chain, theta, capacity)?;
                theta
            }
            _ => {
                chain.push(crate::slit::RotatedSlit::with_capacity(capacity, theta)?);
                theta
            }
        };
        grown = if fixed.is_some() { n as f64 * capacity } else { grown + capacity };
        if tracking {
            history.push(TipSnapshot::of(&state, n, grown, nearest.map(|(j, _)| j)));
        }
        let z = lz.exp();
        events.push(AleEvent {
            n,
            theta: attached,
            capacity,
            nearest_tip: nearest.map(|(j, _)| j),
            delta,
            z_estimate: z.is_finite().then_some(z),
        });
    }
    Ok(AleTrajectory { variant, params: *params, chain, events, history, log_z, tip_mass, rotation })
}

/// Event log as JSON lines.
pub fn write_events_jsonl<W: Write>(events: &[AleEvent], mut writer: W) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut writer, e)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_events_jsonl<R: std::io::BufRead>(reader: R) -> Result<Vec<AleEvent>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
