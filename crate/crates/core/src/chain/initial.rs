//! Initial needle configurations `K₀`.
//!
//! Equally spaced arms of equal length are realised exactly by the root map.
//! Anything else is grown: the root map (equal spacing) or one exact slit
//! (the longest arm) provides a seed, and the remaining arms are extended by
//! micro-slits attached at their exact tip preimages until every tip radius
//! is within tolerance of `1 + d_j`.

use super::base::{BaseMap, SymmetricRootMap};
use super::ConformalChain;
use crate::angle::{min_chord_spacing, normalize, unit, wrapped_diff};
use crate::error::{Error, Result};
use crate::slit::{slit_map_second_deriv_at_tip, RotatedSlit, SlitGeometry};
use crate::tips::pull_back;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::sync::Arc;

/// Hard cap on micro-slits used by the greedy constructor.
const MAX_MICRO_EVENTS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmSpec {
    pub angle: f64,
    pub length: f64,
}

/// Realised tip of one arm after construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmTip {
    pub preimage_angle: f64,
    pub second_deriv: Complex64,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialConfig {
    pub arms: Vec<ArmSpec>,
    pub base: BaseMap,
    pub realization: Vec<RotatedSlit>,
    pub symmetric_exact: bool,
    pub tips: Vec<ArmTip>,
    pub micro_capacity: f64,
    pub tolerance: f64,
}

impl InitialConfig {
    /// No arms: `Φ₀` is the identity.
    pub fn trivial() -> Self {
        Self {
            arms: Vec::new(),
            base: BaseMap::Identity,
            realization: Vec::new(),
            symmetric_exact: true,
            tips: Vec::new(),
            micro_capacity: 0.0,
            tolerance: 0.0,
        }
    }

    pub fn arm_count(&self) -> usize {
        self.arms.len()
    }

    /// Capacity of `K₀`.
    pub fn capacity(&self) -> f64 {
        self.base.capacity() + self.realization.iter().map(|e| e.capacity()).sum::<f64>()
    }

    pub fn into_chain(self) -> ConformalChain {
        ConformalChain::new(Arc::new(self))
    }
}

fn validate(arms: &[ArmSpec], micro_capacity: f64, tolerance: f64) -> Result<()> {
    for (j, a) in arms.iter().enumerate() {
        if !(a.length > 0.0) || !a.length.is_finite() || !a.angle.is_finite() {
            return Err(Error::domain(format!("arm {j}: need a finite positive length, got {a:?}")));
        }
    }
    let angles: Vec<f64> = arms.iter().map(|a| a.angle).collect();
    if min_chord_spacing(&angles) < 1e-9 {
        return Err(Error::domain("arm angles must be pairwise distinct"));
    }
    if !(micro_capacity > 0.0 && micro_capacity <= crate::slit::MAX_CAPACITY) {
        return Err(Error::domain(format!("micro capacity must lie in (0, 1], got {micro_capacity}")));
    }
    if !(tolerance > 0.0) {
        return Err(Error::domain(format!("tolerance must be positive, got {tolerance}")));
    }
    Ok(())
}

/// Phase and per-arm symmetric slots, if the arms are equally spaced.
fn equal_spacing(arms: &[ArmSpec]) -> Option<(f64, Vec<f64>)> {
    let k = arms.len();
    let phase = normalize(arms[0].angle);
    let step = TAU / k as f64;
    let mut slots = Vec::with_capacity(k);
    let mut seen = vec![false; k];
    for a in arms {
        let m = (wrapped_diff(a.angle, phase) / step).round().rem_euclid(k as f64) as usize;
        let exact = normalize(phase + step * m as f64);
        if seen[m] || wrapped_diff(a.angle, exact).abs() > 1e-9 {
            return None;
        }
        seen[m] = true;
        slots.push(exact);
    }
    Some((phase, slots))
}

struct Growing {
    angle: f64,
    second: Option<Complex64>,
    radius: f64,
    target: f64,
    done: bool,
}

pub fn build_initial(arms: &[ArmSpec], micro_capacity: f64, tolerance: f64) -> Result<InitialConfig> {
    validate(arms, micro_capacity, tolerance)?;
    if arms.is_empty() {
        return Ok(InitialConfig { micro_capacity, tolerance, ..InitialConfig::trivial() });
    }
    let k = arms.len();
    let mut config = InitialConfig {
        arms: arms.to_vec(),
        base: BaseMap::Identity,
        realization: Vec::new(),
        symmetric_exact: false,
        tips: Vec::new(),
        micro_capacity,
        tolerance,
    };

    let min_len = arms.iter().map(|a| a.length).fold(f64::INFINITY, f64::min);
    let max_len = arms.iter().map(|a| a.length).fold(0.0, f64::max);
    let equal_lengths = max_len - min_len <= 1e-12 * max_len;

    let mut growing: Vec<Growing>;
    if k == 1 {
        let slit = RotatedSlit::new(SlitGeometry::from_length(arms[0].length)?, arms[0].angle);
        config.tips.push(ArmTip {
            preimage_angle: slit.angle(),
            second_deriv: slit_map_second_deriv_at_tip(&slit),
            radius: slit.tip().norm(),
        });
        config.realization.push(slit);
        config.symmetric_exact = true;
        return Ok(config);
    } else if let Some((phase, slots)) = equal_spacing(arms) {
        let root = SymmetricRootMap::with_arm_length(k, phase, min_len)?;
        let radius = root.tip_radius();
        growing = Vec::with_capacity(k);
        for (a, &slot) in arms.iter().zip(&slots) {
            let jet = root.jet(unit(slot))?;
            growing.push(Growing {
                angle: slot,
                second: Some(jet.second),
                radius,
                target: 1.0 + a.length,
                done: false,
            });
        }
        config.base = BaseMap::Symmetric(root);
        if equal_lengths {
            config.symmetric_exact = true;
            config.tips = growing
                .iter()
                .map(|g| ArmTip { preimage_angle: g.angle, second_deriv: g.second.unwrap(), radius })
                .collect();
            return Ok(config);
        }
    } else {
        let longest = (0..k)
            .max_by(|&a, &b| arms[a].length.total_cmp(&arms[b].length).then(b.cmp(&a)))
            .unwrap();
        let slit = RotatedSlit::new(SlitGeometry::from_length(arms[longest].length)?, arms[longest].angle);
        growing = arms
            .iter()
            .enumerate()
            .map(|(j, a)| {
                if j == longest {
                    Growing {
                        angle: slit.angle(),
                        second: Some(slit_map_second_deriv_at_tip(&slit)),
                        radius: slit.tip().norm(),
                        target: 1.0 + a.length,
                        done: false,
                    }
                } else {
                    Growing {
                        angle: slit.circle_preimage(a.angle),
                        second: None,
                        radius: 1.0,
                        target: 1.0 + a.length,
                        done: false,
                    }
                }
            })
            .collect();
        config.realization.push(slit);
    }

    let mut chain = ConformalChain::new(Arc::new(InitialConfig {
        realization: Vec::new(),
        tips: Vec::new(),
        ..config.clone()
    }));
    for e in &config.realization {
        chain.push(*e);
    }

    let geometry = SlitGeometry::new(micro_capacity)?;
    loop {
        let pick = growing
            .iter()
            .enumerate()
            .filter(|(_, g)| !g.done)
            .max_by(|(i, a), (j, b)| (a.target - a.radius).total_cmp(&(b.target - b.radius)).then(j.cmp(i)))
            .map(|(i, _)| i);
        let Some(j) = pick else { break };
        let deficit = growing[j].target - growing[j].radius;
        if deficit <= 0.0 {
            growing[j].done = true;
            continue;
        }
        if chain.len() >= MAX_MICRO_EVENTS {
            return Err(Error::Construction(format!(
                "more than {MAX_MICRO_EVENTS} micro-slits needed; increase micro_capacity"
            )));
        }
        let slit = RotatedSlit::new(geometry, growing[j].angle);
        let at_tip = chain.evaluate_with_derivs(slit.tip())?;
        let radius = at_tip.value.norm();
        if (growing[j].target - radius).abs() >= deficit.abs() {
            growing[j].done = true;
            continue;
        }
        let mut moved = Vec::with_capacity(k);
        for (l, g) in growing.iter().enumerate() {
            if l == j {
                moved.push((g.angle, Complex64::new(1.0, 0.0)));
            } else {
                moved.push(pull_back(&slit, g.angle, l)?);
            }
        }
        for (l, (g, (angle, fp))) in growing.iter_mut().zip(moved).enumerate() {
            if l == j {
                g.second = Some(slit_map_second_deriv_at_tip(&slit) * at_tip.first);
                g.radius = radius;
            } else {
                g.angle = angle;
                g.second = g.second.map(|s| s * fp * fp);
            }
        }
        chain.push(slit);
    }

    for (j, g) in growing.iter().enumerate() {
        let miss = (g.target - g.radius).abs();
        if miss > tolerance || g.second.is_none() {
            return Err(Error::Construction(format!(
                "arm {j} ended {miss:.3e} from its target radius (tolerance {tolerance:.1e}); \
                 use a smaller micro_capacity"
            )));
        }
    }
    config.realization = chain.events().iter().filter_map(|e| e.as_slit().copied()).collect();
    config.tips = growing
        .iter()
        .map(|g| ArmTip { preimage_angle: g.angle, second_deriv: g.second.unwrap(), radius: g.radius })
        .collect();
    Ok(config)
}
