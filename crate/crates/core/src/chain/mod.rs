//! Compositions `Φ_n = Φ₀ ∘ f_1 ∘ ⋯ ∘ f_n` and their derivatives.

mod base;
mod initial;
mod trace;

pub use base::{BaseMap, SymmetricRootMap};
pub use initial::{build_initial, ArmSpec, ArmTip, InitialConfig};
pub use trace::{render_svg, trace_cluster, write_polylines_csv, Polyline, PolylinePoint};

use crate::error::{Error, Result};
use crate::slit::{RotatedSlit, SlitJet};
use num_complex::Complex64;
use std::sync::Arc;

/// One particle: attachment angle and capacity.
pub type AttachmentEvent = RotatedSlit;

/// An entry of the composition: a single slit, or `k` equal slits grown
/// simultaneously at equally spaced angles (the root map of one slit).
#[derive(Debug, Clone, PartialEq)]
pub enum ChainEvent {
    Slit(RotatedSlit),
    Fold(SymmetricRootMap),
}

impl ChainEvent {
    pub fn capacity(&self) -> f64 {
        match self {
            ChainEvent::Slit(s) => s.capacity(),
            ChainEvent::Fold(f) => f.capacity(),
        }
    }

    /// Attachment angle (first arm for folds).
    pub fn angle(&self) -> f64 {
        match self {
            ChainEvent::Slit(s) => s.angle(),
            ChainEvent::Fold(f) => f.phase(),
        }
    }

    pub fn as_slit(&self) -> Option<&RotatedSlit> {
        match self {
            ChainEvent::Slit(s) => Some(s),
            ChainEvent::Fold(_) => None,
        }
    }

    #[inline]
    fn map(&self, z: Complex64) -> Complex64 {
        match self {
            ChainEvent::Slit(s) => s.map_unchecked(z),
            ChainEvent::Fold(f) => f.map(z),
        }
    }

    #[inline]
    fn jet(&self, z: Complex64, index: usize) -> Result<SlitJet> {
        match self {
            ChainEvent::Slit(s) => {
                if s.near_base(z) {
                    return Err(Error::Singularity {
                        event: index,
                        detail: format!("intermediate point {z} sits on a base point"),
                    });
                }
                Ok(s.jet_unchecked(z))
            }
            ChainEvent::Fold(f) => f.jet(z).map_err(|e| match e {
                Error::Singularity { detail, .. } => Error::Singularity { event: index, detail },
                other => other,
            }),
        }
    }
}

/// `(Φ, Φ', log|Φ'|, Φ'')` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivs {
    pub value: Complex64,
    pub first: Complex64,
    pub log_abs_first: f64,
    pub second: Complex64,
}

/// An initial configuration plus an append-only list of slit events.
///
/// `events()` starts with the initial configuration's micro-slit prefix;
/// `grown()` is the part added afterwards.
#[derive(Debug, Clone)]
pub struct ConformalChain {
    initial: Arc<InitialConfig>,
    events: Vec<ChainEvent>,
    prefix_len: usize,
    cumulative_capacity: f64,
}

impl ConformalChain {
    pub fn new(initial: Arc<InitialConfig>) -> Self {
        let events: Vec<ChainEvent> = initial.realization.iter().map(|s| ChainEvent::Slit(*s)).collect();
        let cumulative_capacity =
            initial.base.capacity() + events.iter().map(|e| e.capacity()).sum::<f64>();
        Self { prefix_len: events.len(), initial, events, cumulative_capacity }
    }

    /// The chain with no arms and no events: the identity map.
    pub fn identity() -> Self {
        Self::new(Arc::new(InitialConfig::trivial()))
    }

    pub fn initial(&self) -> &Arc<InitialConfig> {
        &self.initial
    }

    pub fn events(&self) -> &[ChainEvent] {
        &self.events
    }

    pub fn grown(&self) -> &[ChainEvent] {
        &self.events[self.prefix_len..]
    }

    pub fn prefix_len(&self) -> usize {
        self.prefix_len
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn cumulative_capacity(&self) -> f64 {
        self.cumulative_capacity
    }

    pub fn push(&mut self, event: RotatedSlit) {
        self.cumulative_capacity += event.capacity();
        self.events.push(ChainEvent::Slit(event));
    }

    pub fn push_fold(&mut self, fold: SymmetricRootMap) {
        self.cumulative_capacity += fold.capacity();
        self.events.push(ChainEvent::Fold(fold));
    }

    /// Drops grown events beyond `len` (never the prefix).
    pub fn truncate(&mut self, len: usize) {
        let len = len.max(self.prefix_len);
        for e in self.events.drain(len.min(self.events.len())..) {
            self.cumulative_capacity -= e.capacity();
        }
    }

    /// `Φ_n(z)`.
    pub fn evaluate(&self, z: Complex64) -> Result<Complex64> {
        self.evaluate_upto(self.events.len(), z)
    }

    /// `Φ_m(z) = Φ₀ ∘ f_1 ∘ ⋯ ∘ f_m (z)` for a prefix of `m` events.
    pub fn evaluate_upto(&self, m: usize, z: Complex64) -> Result<Complex64> {
        check_exterior(z)?;
        Ok(self.evaluate_upto_unchecked(m, z))
    }

    pub(crate) fn evaluate_upto_unchecked(&self, m: usize, z: Complex64) -> Complex64 {
        let mut w = z;
        for e in self.events[..m].iter().rev() {
            w = e.map(w);
        }
        self.initial.base.map(w)
    }

    pub fn evaluate_with_derivs(&self, z: Complex64) -> Result<Derivs> {
        check_exterior(z)?;
        let mut w = z;
        let mut first = Complex64::new(1.0, 0.0);
        let mut second = Complex64::new(0.0, 0.0);
        let mut log_abs = 0.0;
        let n = self.events.len();
        for (k, e) in self.events.iter().enumerate().rev() {
            let j = e.jet(w, k)?;
            (first, second) = compose(j, first, second);
            log_abs += j.first.norm().ln();
            w = j.value;
        }
        let j = self.initial.base.jet(w).map_err(|err| match err {
            Error::Singularity { detail, .. } => Error::Singularity { event: n, detail },
            other => other,
        })?;
        (first, second) = compose(j, first, second);
        log_abs += j.first.norm().ln();
        Ok(Derivs { value: j.value, first, log_abs_first: log_abs, second })
    }

    /// `(Φ(z), Φ'(z))` without second derivatives.
    pub fn value_and_deriv(&self, z: Complex64) -> Result<(Complex64, Complex64)> {
        let d = self.evaluate_with_derivs(z)?;
        Ok((d.value, d.first))
    }

    /// `log|Φ'(z)|`, the hot path of the attachment density.
    ///
    /// Magnitudes are multiplied in plain floating point and folded into the
    /// logarithm only when they drift far from one.
    pub fn log_abs_deriv(&self, z: Complex64) -> f64 {
        let mut w = z;
        let mut acc = 0.0;
        let mut prod = 1.0_f64;
        for e in self.events.iter().rev() {
            let (v, d) = match e {
                ChainEvent::Slit(s) => s.value_deriv_unchecked(w),
                ChainEvent::Fold(f) => match f.jet(w) {
                    Ok(j) => (j.value, j.first),
                    // only base points fail, where |Φ'| blows up
                    Err(_) => return f64::INFINITY,
                },
            };
            prod *= d.norm_sqr();
            if !(1e-150..=1e150).contains(&prod) {
                acc += prod.ln();
                prod = 1.0;
            }
            w = v;
        }
        if let BaseMap::Symmetric(_) = self.initial.base {
            if let Ok(j) = self.initial.base.jet(w) {
                prod *= j.first.norm_sqr();
            } else {
                return f64::INFINITY;
            }
        }
        0.5 * (acc + prod.ln())
    }
}

#[inline]
fn compose(outer: SlitJet, first: Complex64, second: Complex64) -> (Complex64, Complex64) {
    (outer.first * first, outer.second * first * first + outer.first * second)
}

fn check_exterior(z: Complex64) -> Result<()> {
    if !(z.norm() >= 1.0 - crate::slit::SINGULAR_RADIUS) {
        return Err(Error::domain(format!("point {z} lies inside the unit disc")));
    }
    Ok(())
}
