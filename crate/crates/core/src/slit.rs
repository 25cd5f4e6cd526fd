//! The single-slit building block `f^{c}` and its rotations.
//!
//! `f^{c}` maps the exterior disc conformally onto the exterior disc minus the
//! radial segment `(1, 1+d]`, normalised by `f(z) ~ e^{c} z` at infinity. With
//! `β` the base half-arc (`f(e^{±iβ}) = 1`) and
//!
//! ```text
//! Q(z) = z · √(1 − e^{iβ}/z) · √(1 − e^{−iβ}/z)      (principal roots)
//! ```
//!
//! the map has the closed form `f(z) = e^{c} (z + 1 + Q(z))² / (4z)`. Each
//! root factor has non-negative real part on `|z| ≥ 1`, so `Q` is analytic on
//! the closed exterior disc away from the two base points and behaves like `z`
//! at infinity; no branch bookkeeping is needed.
//!
//! The derivative is `f'(z) = f(z)/z · (z − 1)/Q(z)`. The inverse has the same
//! shape, `f⁻¹(w) = e^{−c} (w + 1 + P(w))² / (4w)`, where `P` is built from the
//! real roots `1 + d` and `1/(1 + d)` and has its cut along the slit.

use crate::angle::{normalize, unit};
use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Largest capacity accepted for a single particle.
pub const MAX_CAPACITY: f64 = 1.0;

/// Distance to a base point below which derivatives are refused.
pub const SINGULAR_RADIUS: f64 = 1e-12;

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Principal square root without the polar round trip.
#[inline]
pub(crate) fn csqrt(w: Complex64) -> Complex64 {
    let (a, b) = (w.re, w.im);
    let s = (0.5 * (w.norm() + a.abs())).sqrt();
    if s == 0.0 {
        return Complex64::new(0.0, b);
    }
    if a >= 0.0 {
        Complex64::new(s, 0.5 * b / s)
    } else {
        Complex64::new(0.5 * b.abs() / s, s.copysign(b))
    }
}

/// Derived constants of the slit map with log-capacity `capacity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "GeometryRepr", try_from = "GeometryRepr")]
pub struct SlitGeometry {
    capacity: f64,
    length: f64,
    half_arc: f64,
    /// `1 − e^{−c}`.
    b: f64,
    consts: Consts,
}

#[derive(Serialize, Deserialize)]
struct GeometryRepr {
    capacity: f64,
    #[serde(default)]
    length: f64,
    #[serde(default)]
    half_arc: f64,
}

impl From<SlitGeometry> for GeometryRepr {
    fn from(g: SlitGeometry) -> Self {
        Self { capacity: g.capacity, length: g.length, half_arc: g.half_arc }
    }
}

impl TryFrom<GeometryRepr> for SlitGeometry {
    type Error = Error;
    fn try_from(r: GeometryRepr) -> Result<Self> {
        SlitGeometry::new(r.capacity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct Consts {
    exp_c: f64,
    cos_beta: f64,
    base: Complex64,
    base_conj: Complex64,
    /// roots of `w² − 2(2e^{c} − 1)w + 1`: `1 + d` and its reciprocal.
    root_hi: f64,
    root_lo: f64,
}

impl SlitGeometry {
    pub fn new(capacity: f64) -> Result<Self> {
        if !(capacity > 0.0 && capacity <= MAX_CAPACITY) || !capacity.is_finite() {
            return Err(Error::domain(format!(
                "slit capacity must lie in (0, {MAX_CAPACITY}], got {capacity}"
            )));
        }
        let b = -(-capacity).exp_m1();
        let s = b.sqrt();
        // d = 2s/(1 − s), equivalently 2(e^c − 1) + 2√(e^{2c} − e^c).
        let length = 2.0 * s / (1.0 - s);
        let half_arc = 2.0 * capacity.exp_m1().sqrt().atan();
        Ok(Self::assemble(capacity, length, half_arc, b))
    }

    /// The capacity whose slit has length `length`.
    pub fn from_length(length: f64) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::domain(format!("slit length must be positive, got {length}")));
        }
        // (d+2)²/(4(d+1)) = 1 + d²/(4(d+1))
        let capacity = (length * length / (4.0 * (length + 1.0))).ln_1p();
        Self::new(capacity)
    }

    fn assemble(capacity: f64, length: f64, half_arc: f64, b: f64) -> Self {
        let exp_c = capacity.exp();
        let base = unit(half_arc);
        Self {
            capacity,
            length,
            half_arc,
            b,
            consts: Consts {
                exp_c,
                cos_beta: half_arc.cos(),
                base,
                base_conj: base.conj(),
                root_hi: 1.0 + length,
                root_lo: 1.0 / (1.0 + length),
            },
        }
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    /// Slit length `d`.
    pub fn length(&self) -> f64 {
        self.length
    }

    /// Base half-arc `β`, with `f(e^{±iβ}) = 1`.
    pub fn half_arc(&self) -> f64 {
        self.half_arc
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn exp_capacity(&self) -> f64 {
        self.consts.exp_c
    }

    #[inline]
    fn q(&self, z: Complex64) -> Complex64 {
        let inv = z.inv();
        // (z − e^{±iβ})/z rather than 1 − e^{±iβ}/z: exact zero at the base points
        z * csqrt((z - self.consts.base) * inv) * csqrt((z - self.consts.base_conj) * inv)
    }

    /// Unrotated map.
    #[inline]
    pub(crate) fn map_raw(&self, z: Complex64) -> Complex64 {
        let q = self.q(z);
        let t = z + ONE + q;
        t * t * (0.25 * self.consts.exp_c) / z
    }

    /// Unrotated `(f, f', f'')`.
    #[inline]
    pub(crate) fn jet_raw(&self, z: Complex64) -> SlitJet {
        let q = self.q(z);
        let t = z + ONE + q;
        let value = t * t * (0.25 * self.consts.exp_c) / z;
        let zq_inv = (z * q).inv();
        let g = (z - ONE) * zq_inv;
        let first = value * g;
        let dg = zq_inv - g * (z.inv() + (z - self.consts.cos_beta) / (q * q));
        let second = first * g + value * dg;
        SlitJet { value, first, second }
    }

    /// `Q(z)`, `g = f'/f = (z − 1)/(zQ)` and `g'`, shared with maps built on
    /// top of the slit map.
    #[inline]
    pub(crate) fn log_jet_raw(&self, z: Complex64) -> (Complex64, Complex64, Complex64) {
        let q = self.q(z);
        let zq_inv = (z * q).inv();
        let g = (z - ONE) * zq_inv;
        let dg = zq_inv - g * (z.inv() + (z - self.consts.cos_beta) / (q * q));
        (q, g, dg)
    }

    /// Unrotated `(f, f')`.
    #[inline]
    pub(crate) fn value_deriv_raw(&self, z: Complex64) -> (Complex64, Complex64) {
        let q = self.q(z);
        let t = z + ONE + q;
        let value = t * t * (0.25 * self.consts.exp_c) / z;
        (value, value * (z - ONE) / (z * q))
    }

    #[inline]
    pub(crate) fn near_base(&self, z: Complex64) -> bool {
        (z - self.consts.base).norm() < SINGULAR_RADIUS
            || (z - self.consts.base_conj).norm() < SINGULAR_RADIUS
    }

    /// Unrotated inverse off the circle.
    pub(crate) fn inverse_raw(&self, w: Complex64) -> Complex64 {
        let inv = w.inv();
        let p = w
            * csqrt(ONE - self.consts.root_hi * inv)
            * csqrt(ONE - self.consts.root_lo * inv);
        let t = w + ONE + p;
        t * t * (0.25 / self.consts.exp_c) / w
    }

    /// Preimage angle of the circle point `e^{iψ}` (angles relative to the
    /// slit direction). `ψ = 0` is the slit base; its preimage is taken to be
    /// `+β` for `ψ = +0.0` and `−β` for `ψ = −0.0`.
    pub fn circle_preimage_angle(&self, psi: f64) -> f64 {
        let psi = normalize(psi);
        let (sh, ch) = (0.5 * psi).sin_cos();
        let e = self.consts.exp_c;
        let num = (e * sh * sh + (e - 1.0) * ch * ch).sqrt();
        let sign = if psi.is_sign_negative() { -1.0 } else { 1.0 };
        2.0 * (sign * num).atan2(ch.abs())
    }

    /// Image angle of the circle point `e^{iφ}` for `|φ| ≥ β` (relative
    /// angles); `None` on the base arc, which is mapped onto the slit.
    pub fn circle_image_angle(&self, phi: f64) -> Option<f64> {
        let phi = normalize(phi);
        if phi.abs() < self.half_arc {
            return None;
        }
        let (sh, ch) = (0.5 * phi).sin_cos();
        let e = self.consts.exp_c;
        // tan²(ψ/2) = (tan²(φ/2) − (e − 1))/e
        let num = ((sh * sh - (e - 1.0) * ch * ch) / e).max(0.0).sqrt();
        Some(2.0 * (phi.signum() * num).atan2(ch.abs()))
    }
}

/// Value, first and second derivative of a map at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlitJet {
    pub value: Complex64,
    pub first: Complex64,
    pub second: Complex64,
}

/// `f^{θ,c}(z) = e^{iθ} f^{c}(e^{−iθ} z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "RotatedSlitRepr", try_from = "RotatedSlitRepr")]
pub struct RotatedSlit {
    geometry: SlitGeometry,
    angle: f64,
    rot: Complex64,
}

#[derive(Serialize, Deserialize)]
struct RotatedSlitRepr {
    angle: f64,
    capacity: f64,
}

impl From<RotatedSlit> for RotatedSlitRepr {
    fn from(s: RotatedSlit) -> Self {
        Self { angle: s.angle, capacity: s.geometry.capacity }
    }
}

impl TryFrom<RotatedSlitRepr> for RotatedSlit {
    type Error = Error;
    fn try_from(r: RotatedSlitRepr) -> Result<Self> {
        Ok(RotatedSlit::new(SlitGeometry::new(r.capacity)?, r.angle))
    }
}

impl RotatedSlit {
    pub fn new(geometry: SlitGeometry, angle: f64) -> Self {
        let angle = normalize(angle);
        Self { geometry, angle, rot: unit(angle) }
    }

    pub fn with_capacity(capacity: f64, angle: f64) -> Result<Self> {
        Ok(Self::new(SlitGeometry::new(capacity)?, angle))
    }

    pub fn geometry(&self) -> &SlitGeometry {
        &self.geometry
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn capacity(&self) -> f64 {
        self.geometry.capacity
    }

    /// Image of the tip preimage `e^{iθ}`.
    pub fn tip(&self) -> Complex64 {
        self.rot * (1.0 + self.geometry.length)
    }

    #[inline]
    pub(crate) fn unrotate(&self, z: Complex64) -> Complex64 {
        z * self.rot.conj()
    }

    #[inline]
    pub(crate) fn map_unchecked(&self, z: Complex64) -> Complex64 {
        self.rot * self.geometry.map_raw(self.unrotate(z))
    }

    /// `(f, f', f'')` of the rotated map, without domain checks.
    #[inline]
    pub(crate) fn jet_unchecked(&self, z: Complex64) -> SlitJet {
        let j = self.geometry.jet_raw(self.unrotate(z));
        SlitJet {
            value: self.rot * j.value,
            first: j.first,
            second: j.second * self.rot.conj(),
        }
    }

    #[inline]
    pub(crate) fn value_deriv_unchecked(&self, z: Complex64) -> (Complex64, Complex64) {
        let (v, d) = self.geometry.value_deriv_raw(self.unrotate(z));
        (self.rot * v, d)
    }

    #[inline]
    pub(crate) fn near_base(&self, z: Complex64) -> bool {
        self.geometry.near_base(self.unrotate(z))
    }

    /// Preimage angle (absolute) of the circle point `e^{iψ}`.
    pub fn circle_preimage(&self, psi: f64) -> f64 {
        normalize(self.angle + self.geometry.circle_preimage_angle(psi - self.angle))
    }
}

fn check_exterior(z: Complex64) -> Result<()> {
    if !(z.norm() >= 1.0 - SINGULAR_RADIUS) {
        return Err(Error::domain(format!("point {z} lies inside the unit disc")));
    }
    Ok(())
}

pub fn slit_geometry(capacity: f64) -> Result<SlitGeometry> {
    SlitGeometry::new(capacity)
}

pub fn slit_map(s: &RotatedSlit, z: Complex64) -> Result<Complex64> {
    check_exterior(z)?;
    Ok(s.map_unchecked(z))
}

pub fn slit_map_deriv(s: &RotatedSlit, z: Complex64) -> Result<Complex64> {
    check_exterior(z)?;
    if s.near_base(z) {
        return Err(Error::Singularity {
            event: 0,
            detail: format!("{z} is within {SINGULAR_RADIUS} of a base point"),
        });
    }
    Ok(s.value_deriv_unchecked(z).1)
}

/// `f''(e^{iθ}) = e^{−iθ} (1 + d) / (2√(1 − e^{−c}))`.
pub fn slit_map_second_deriv_at_tip(s: &RotatedSlit) -> Complex64 {
    let g = &s.geometry;
    s.rot.conj() * ((1.0 + g.length) / (2.0 * g.b.sqrt()))
}

/// Inverse of the rotated slit map. Points on the unit circle go through the
/// closed circle-to-circle formula; the slit base `e^{iθ}` returns the
/// preimage `e^{i(θ+β)}`.
pub fn slit_map_inverse(s: &RotatedSlit, w: Complex64) -> Result<Complex64> {
    let g = &s.geometry;
    let omega = s.unrotate(w);
    let r = omega.norm();
    if r < 1.0 - SINGULAR_RADIUS {
        return Err(Error::domain(format!("{w} lies inside the unit disc")));
    }
    let on_slit_line = omega.im.abs() <= 1e-14 * r && omega.re > 0.0;
    if on_slit_line && omega.re > 1.0 + SINGULAR_RADIUS && omega.re < 1.0 + g.length {
        return Err(Error::domain(format!("{w} lies on the open slit")));
    }
    if (r - 1.0).abs() <= SINGULAR_RADIUS {
        let psi = if on_slit_line { 0.0 } else { omega.arg() };
        return Ok(s.rot * unit(g.circle_preimage_angle(psi)));
    }
    Ok(s.rot * g.inverse_raw(omega))
}

/// Ratio of `|f(w) − 1|` to its leading-order prediction
/// `2(e^{c} − 1)^{1/4} |w − e^{iβ}|^{1/2}` near the base point `e^{iβ}`.
pub fn distance_estimate_check(s: &SlitGeometry, w: Complex64) -> Result<f64> {
    let dist = (w - s.consts.base).norm();
    if dist == 0.0 {
        return Err(Error::domain("w coincides with the base point"));
    }
    if dist > 0.5 * s.half_arc || w.norm() < 1.0 - SINGULAR_RADIUS {
        return Err(Error::domain(format!(
            "need |w − e^(iβ)| ≤ β/2 and |w| ≥ 1, got distance {dist}"
        )));
    }
    let predicted = 2.0 * s.capacity.exp_m1().powf(0.25) * dist.sqrt();
    Ok((s.map_raw(w) - ONE).norm() / predicted)
}
