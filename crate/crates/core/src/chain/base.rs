//! Maps applied after all slit events: the identity, or the exact k-fold
//! symmetric needle map `Φ₀(z) = (f^{c₀}(z^k))^{1/k}`.

use crate::angle::unit;
use crate::error::{Error, Result};
use crate::slit::{SlitGeometry, SlitJet};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseMap {
    Identity,
    Symmetric(SymmetricRootMap),
}

impl BaseMap {
    pub fn capacity(&self) -> f64 {
        match self {
            BaseMap::Identity => 0.0,
            BaseMap::Symmetric(m) => m.capacity(),
        }
    }

    #[inline]
    pub fn map(&self, z: Complex64) -> Complex64 {
        match self {
            BaseMap::Identity => z,
            BaseMap::Symmetric(m) => m.map(z),
        }
    }

    #[inline]
    pub fn jet(&self, z: Complex64) -> Result<SlitJet> {
        match self {
            BaseMap::Identity => Ok(SlitJet {
                value: z,
                first: Complex64::new(1.0, 0.0),
                second: Complex64::new(0.0, 0.0),
            }),
            BaseMap::Symmetric(m) => m.jet(z),
        }
    }
}

/// `Φ₀(z) = e^{iφ₀} (f^{c₀}((e^{−iφ₀} z)^k))^{1/k}`, the exterior map of `k`
/// equal needles at angles `φ₀ + 2πm/k` with tip radius `(1 + d(c₀))^{1/k}`.
///
/// With `ζ = y^k` and `f(ζ)/ζ = e^{c₀} H(ζ)²`, `H = (1 + 1/ζ + Q/ζ)/2` has
/// positive real part on the closed exterior disc, so the root is taken as
/// `y e^{c₀/k} exp((2/k) Log H)` with the principal logarithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "RootRepr", try_from = "RootRepr")]
pub struct SymmetricRootMap {
    arms: usize,
    phase: f64,
    slit: SlitGeometry,
    rot: Complex64,
}

#[derive(Serialize, Deserialize)]
struct RootRepr {
    arms: usize,
    phase: f64,
    slit_capacity: f64,
}

impl From<SymmetricRootMap> for RootRepr {
    fn from(m: SymmetricRootMap) -> Self {
        Self { arms: m.arms, phase: m.phase, slit_capacity: m.slit.capacity() }
    }
}

impl TryFrom<RootRepr> for SymmetricRootMap {
    type Error = Error;
    fn try_from(r: RootRepr) -> Result<Self> {
        SymmetricRootMap::new(r.arms, r.phase, SlitGeometry::new(r.slit_capacity)?)
    }
}

impl SymmetricRootMap {
    pub fn new(arms: usize, phase: f64, slit: SlitGeometry) -> Result<Self> {
        if arms == 0 {
            return Err(Error::domain("symmetric map needs at least one arm"));
        }
        Ok(Self { arms, phase, slit, rot: unit(phase) })
    }

    /// The map whose needles all have length `length`.
    pub fn with_arm_length(arms: usize, phase: f64, length: f64) -> Result<Self> {
        if !(length > 0.0) {
            return Err(Error::domain(format!("arm length must be positive, got {length}")));
        }
        let radius_k = (1.0 + length).powi(arms as i32);
        let slit = SlitGeometry::from_length(radius_k - 1.0).map_err(|e| {
            Error::Construction(format!("symmetric {arms}-arm configuration of length {length}: {e}"))
        })?;
        Self::new(arms, phase, slit)
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn slit(&self) -> &SlitGeometry {
        &self.slit
    }

    pub fn capacity(&self) -> f64 {
        self.slit.capacity() / self.arms as f64
    }

    pub fn tip_radius(&self) -> f64 {
        (1.0 + self.slit.length()).powf(1.0 / self.arms as f64)
    }

    pub fn tip_angles(&self) -> Vec<f64> {
        (0..self.arms)
            .map(|m| crate::angle::normalize(self.phase + TAU * m as f64 / self.arms as f64))
            .collect()
    }

    /// Angular distance from a tip preimage to the nearest singular point.
    pub fn local_scale(&self) -> f64 {
        self.slit.half_arc() / self.arms as f64
    }

    #[inline]
    fn root_ratio(&self, zeta: Complex64, q: Complex64) -> Complex64 {
        let h = (Complex64::new(1.0, 0.0) + zeta.inv() + q / zeta) * 0.5;
        let k = self.arms as f64;
        (h.ln() * (2.0 / k) + self.slit.capacity() / k).exp()
    }

    #[inline]
    pub fn map(&self, z: Complex64) -> Complex64 {
        let y = z * self.rot.conj();
        let zeta = y.powu(self.arms as u32);
        let (q, _, _) = self.slit.log_jet_raw(zeta);
        self.rot * y * self.root_ratio(zeta, q)
    }

    pub fn jet(&self, z: Complex64) -> Result<SlitJet> {
        let y = z * self.rot.conj();
        let k = self.arms;
        let y_km1 = if k == 1 { Complex64::new(1.0, 0.0) } else { y.powu((k - 1) as u32) };
        let zeta = y_km1 * y;
        if self.slit.near_base(zeta) {
            return Err(Error::Singularity {
                event: usize::MAX,
                detail: format!("{z} is a base point of the symmetric initial map"),
            });
        }
        let (q, g, dg) = self.slit.log_jet_raw(zeta);
        let value = y * self.root_ratio(zeta, q);
        let log_deriv = y_km1 * g;
        let first = value * log_deriv;
        let kf = k as f64;
        let extra = if k == 1 {
            dg
        } else {
            (kf - 1.0) * (y_km1 / y) * g + kf * y_km1 * y_km1 * dg
        };
        let second = first * log_deriv + value * extra;
        Ok(SlitJet {
            value: self.rot * value,
            first,
            second: second * self.rot.conj(),
        })
    }
}
