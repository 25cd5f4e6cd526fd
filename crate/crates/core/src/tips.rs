//! Exact discrete tip dynamics and the multinomial model.
//!
//! A tip preimage `x_j = e^{iφ_j}` is a zero of `Φ'`. Attaching `f = f^{θ,c}`
//! moves it to `y = f⁻¹(x_j)` on the circle, and because `Φ'(x_j) = 0` the
//! second derivative transforms multiplicatively,
//! `(Φ∘f)''(y) = Φ''(x_j) f'(y)²`. The arm grown at `θ` keeps its angle and
//! picks up `(Φ∘f)''(e^{iθ}) = f''(e^{iθ}) Φ'(e^{iθ}(1 + d))`.

use crate::angle::{chord, min_chord_spacing, unit, wrapped_diff};
use crate::chain::{ConformalChain, InitialConfig};
use crate::error::{Error, Result};
use crate::slit::{slit_map_second_deriv_at_tip, RotatedSlit, SlitGeometry};
use num_complex::Complex64;
use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::sync::Arc;

/// Relative width of the refused zone around a new particle's base points.
pub const BASE_ARC_GUARD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tip {
    pub angle: f64,
    pub second_deriv: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TipState {
    tips: Vec<Tip>,
    weights: Vec<f64>,
    eta: f64,
    initial_spacing: f64,
}

/// Number of particles needed to reach capacity-time `horizon`.
pub fn step_count(horizon: f64, capacity: f64) -> usize {
    ((horizon / capacity) - 1e-9).ceil().max(0.0) as usize
}

/// `p_j ∝ |Φ''(x_j)|^{−η}`, normalised in log space.
pub fn multinomial_weights(tips: &[Tip], eta: f64) -> Result<Vec<f64>> {
    let mut logw = Vec::with_capacity(tips.len());
    for (j, t) in tips.iter().enumerate() {
        let m = t.second_deriv.norm();
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::DegenerateTip { arm: j, value: m });
        }
        logw.push(-eta * m.ln());
    }
    let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    Ok(w)
}

/// Moves a circle point through a new particle: returns the preimage angle
/// and `f'` there. Refuses preimages next to the particle's base points.
pub(crate) fn pull_back(slit: &RotatedSlit, angle: f64, arm: usize) -> Result<(f64, Complex64)> {
    let g = slit.geometry();
    let psi = wrapped_diff(angle, slit.angle());
    if psi.abs() < 1e-14 {
        return Err(Error::Geometry { arm, detail: "tip coincides with the attachment point".into() });
    }
    let rel = g.circle_preimage_angle(psi);
    if (rel.abs() - g.half_arc()).abs() < BASE_ARC_GUARD * g.half_arc() {
        return Err(Error::Geometry {
            arm,
            detail: format!("preimage {rel:.3e} within the guard band of the base arc ±{:.3e}", g.half_arc()),
        });
    }
    Ok(pull_back_unchecked(slit, rel))
}

fn pull_back_unchecked(slit: &RotatedSlit, rel: f64) -> (f64, Complex64) {
    let y = crate::angle::normalize(slit.angle() + rel);
    let (_, fp) = slit.value_deriv_unchecked(unit(y));
    (y, fp)
}

impl TipState {
    pub fn new(tips: Vec<Tip>, eta: f64) -> Result<Self> {
        let weights = multinomial_weights(&tips, eta)?;
        let angles: Vec<f64> = tips.iter().map(|t| t.angle).collect();
        Ok(Self { initial_spacing: min_chord_spacing(&angles), tips, weights, eta })
    }

    pub fn from_initial(initial: &InitialConfig, eta: f64) -> Result<Self> {
        Self::new(
            initial
                .tips
                .iter()
                .map(|t| Tip { angle: t.preimage_angle, second_deriv: t.second_deriv })
                .collect(),
            eta,
        )
    }

    pub fn tips(&self) -> &[Tip] {
        &self.tips
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn len(&self) -> usize {
        self.tips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tips.is_empty()
    }

    pub fn angles(&self) -> Vec<f64> {
        self.tips.iter().map(|t| t.angle).collect()
    }

    pub fn abs_second(&self) -> Vec<f64> {
        self.tips.iter().map(|t| t.second_deriv.norm()).collect()
    }

    pub fn min_spacing(&self) -> f64 {
        min_chord_spacing(&self.angles())
    }

    pub fn initial_spacing(&self) -> f64 {
        self.initial_spacing
    }

    /// Nearest tip to `theta` in chordal distance; ties go to the lower index.
    pub fn nearest(&self, theta: f64) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (j, t) in self.tips.iter().enumerate() {
            let d = chord(theta, t.angle);
            if best.is_none_or(|(_, b)| d < b) {
                best = Some((j, d));
            }
        }
        best
    }

    /// Draws an arm index from the weights.
    pub fn draw_arm<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (j, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return j;
            }
        }
        self.weights.len() - 1
    }

    /// Grows `arm` by a slit of `capacity` at its tip preimage.
    pub fn attach(&mut self, chain: &mut ConformalChain, arm: usize, capacity: f64) -> Result<()> {
        let angle = self
            .tips
            .get(arm)
            .ok_or_else(|| Error::domain(format!("arm {arm} out of range ({} arms)", self.tips.len())))?
            .angle;
        self.attach_at(chain, angle, capacity, arm, true)
    }

    /// Attaches a particle at `theta` and makes its tip the new tip of `arm`
    /// (whose old tip is covered). With `strict`, other tips landing next to
    /// the new base points abort the update; otherwise they are carried
    /// through unchanged in kind.
    pub fn attach_at(
        &mut self,
        chain: &mut ConformalChain,
        theta: f64,
        capacity: f64,
        arm: usize,
        strict: bool,
    ) -> Result<()> {
        if arm >= self.tips.len() {
            return Err(Error::domain(format!("arm {arm} out of range ({} arms)", self.tips.len())));
        }
        let slit = RotatedSlit::new(SlitGeometry::new(capacity)?, theta);
        let mut next = self.tips.clone();
        for (l, t) in next.iter_mut().enumerate() {
            if l == arm {
                continue;
            }
            let (angle, fp) = if strict {
                pull_back(&slit, t.angle, l)?
            } else {
                let psi = wrapped_diff(t.angle, slit.angle());
                pull_back_unchecked(&slit, slit.geometry().circle_preimage_angle(psi))
            };
            t.angle = angle;
            t.second_deriv *= fp * fp;
        }
        let outer = chain.evaluate_with_derivs(slit.tip())?;
        next[arm] = Tip { angle: slit.angle(), second_deriv: slit_map_second_deriv_at_tip(&slit) * outer.first };
        let weights = multinomial_weights(&next, self.eta)?;
        chain.push(slit);
        self.tips = next;
        self.weights = weights;
        Ok(())
    }

    /// Phase of an exactly k-fold symmetric state: equally spaced tips with
    /// equal weights.
    pub fn symmetric_phase(&self) -> Option<f64> {
        let k = self.tips.len();
        if k < 2 {
            return None;
        }
        let phase = self.tips[0].angle;
        let step = std::f64::consts::TAU / k as f64;
        let spaced = self
            .tips
            .iter()
            .enumerate()
            .all(|(m, t)| wrapped_diff(t.angle, phase + step * m as f64).abs() <= 1e-13);
        let even = self.weights.iter().all(|w| (w * k as f64 - 1.0).abs() <= 1e-13);
        (spaced && even).then_some(phase)
    }

    /// Grows all arms of a symmetric state at once by total capacity `dt`,
    /// with the exact k-fold root map of one slit. Tip angles are unchanged.
    pub fn attach_symmetric(&mut self, chain: &mut ConformalChain, dt: f64) -> Result<()> {
        let phase = self
            .symmetric_phase()
            .ok_or_else(|| Error::domain("state is not k-fold symmetric"))?;
        let k = self.tips.len();
        let fold = crate::chain::SymmetricRootMap::new(k, phase, SlitGeometry::new(k as f64 * dt)?)?;
        let mut next = self.tips.clone();
        for t in next.iter_mut() {
            let jet = fold.jet(unit(t.angle))?;
            let outer = chain.evaluate_with_derivs(jet.value)?;
            t.second_deriv = jet.second * outer.first;
        }
        let weights = multinomial_weights(&next, self.eta)?;
        chain.push_fold(fold);
        self.tips = next;
        self.weights = weights;
        Ok(())
    }

    /// Grows a new arm at `theta` (used when a cluster starts without arms).
    pub fn attach_new_arm(&mut self, chain: &mut ConformalChain, theta: f64, capacity: f64) -> Result<()> {
        self.tips.push(Tip { angle: theta, second_deriv: Complex64::new(1.0, 0.0) });
        let arm = self.tips.len() - 1;
        let r = self.attach_at(chain, theta, capacity, arm, false);
        if r.is_err() {
            self.tips.pop();
        }
        r
    }
}

/// Value-semantics form of [`TipState::attach`].
pub fn attach_at_tip(
    chain: &ConformalChain,
    state: &TipState,
    arm: usize,
    capacity: f64,
) -> Result<(ConformalChain, TipState)> {
    let mut c = chain.clone();
    let mut s = state.clone();
    s.attach(&mut c, arm, capacity)?;
    Ok((c, s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TipSnapshot {
    pub n: usize,
    pub t: f64,
    /// Arm grown at step `n` (`None` for the initial state).
    pub arm: Option<usize>,
    pub angles: Vec<f64>,
    pub weights: Vec<f64>,
    pub abs_second: Vec<f64>,
}

impl TipSnapshot {
    pub fn of(state: &TipState, n: usize, t: f64, arm: Option<usize>) -> Self {
        Self { n, t, arm, angles: state.angles(), weights: state.weights().to_vec(), abs_second: state.abs_second() }
    }
}

#[derive(Debug, Clone)]
pub struct MultinomialTrajectory {
    pub chain: ConformalChain,
    pub state: TipState,
    pub eta: f64,
    pub capacity: f64,
    pub horizon: f64,
    pub history: Vec<TipSnapshot>,
}

impl MultinomialTrajectory {
    /// Driving angles `θ_n`, one per particle.
    pub fn driving_angles(&self) -> Vec<f64> {
        self.chain.grown().iter().map(|e| e.angle()).collect()
    }
}

pub fn multinomial_run<R: Rng + ?Sized>(
    initial: Arc<InitialConfig>,
    eta: f64,
    capacity: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<MultinomialTrajectory> {
    multinomial_run_with(initial, eta, capacity, horizon, |s| s.draw_arm(rng))
}

/// Multinomial model with an externally supplied arm choice.
pub fn multinomial_run_with<F: FnMut(&TipState) -> usize>(
    initial: Arc<InitialConfig>,
    eta: f64,
    capacity: f64,
    horizon: f64,
    mut choose: F,
) -> Result<MultinomialTrajectory> {
    if initial.tips.is_empty() {
        return Err(Error::domain("the multinomial model needs at least one arm"));
    }
    let mut state = TipState::from_initial(&initial, eta)?;
    let mut chain = ConformalChain::new(initial);
    let steps = step_count(horizon, capacity);
    let mut history = Vec::with_capacity(steps + 1);
    history.push(TipSnapshot::of(&state, 0, 0.0, None));
    for n in 1..=steps {
        let arm = choose(&state);
        state.attach(&mut chain, arm, capacity)?;
        history.push(TipSnapshot::of(&state, n, n as f64 * capacity, Some(arm)));
    }
    Ok(MultinomialTrajectory { chain, state, eta, capacity, horizon, history })
}

/// CSV with columns `n, t, arm, phi_j…, p_j…, abs_second_deriv_j…`.
pub fn write_tip_history_csv<W: Write>(history: &[TipSnapshot], writer: W) -> Result<()> {
    let k = history.first().map_or(0, |s| s.angles.len());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["n".to_string(), "t".into(), "arm".into()];
    header.extend((0..k).map(|j| format!("phi_{j}")));
    header.extend((0..k).map(|j| format!("p_{j}")));
    header.extend((0..k).map(|j| format!("abs_second_deriv_{j}")));
    w.write_record(&header)?;
    for s in history {
        let mut rec = vec![s.n.to_string(), s.t.to_string(), s.arm.map_or(String::new(), |a| a.to_string())];
        rec.extend(s.angles.iter().chain(&s.weights).chain(&s.abs_second).map(|x| x.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Angular scale below which the local expansion of `Φ` at the tips is
/// trustworthy: a fraction of the base half-arc of the most recent
/// particles and of the tip spacing.
pub fn tip_local_scale(chain: &ConformalChain, state: &TipState) -> f64 {
    let mut scale = 0.5 * state.min_spacing().min(std::f64::consts::PI);
    let recent = 2 * state.len().max(1);
    for e in chain.events().iter().rev().take(recent) {
        let beta = match e {
            crate::chain::ChainEvent::Slit(s) => s.geometry().half_arc(),
            crate::chain::ChainEvent::Fold(f) => f.local_scale(),
        };
        scale = scale.min(0.5 * beta);
    }
    if let crate::chain::BaseMap::Symmetric(root) = &chain.initial().base {
        if chain.is_empty() {
            scale = scale.min(0.5 * root.local_scale());
        }
    }
    scale
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QLevel {
    pub h: f64,
    /// Radial offset of the evaluation point from the tip (0 on the circle).
    pub offset: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QIdentityReport {
    pub arm: usize,
    /// Relative residual against `2x_j²Φ''(x_j)` at the grown tip.
    pub grown: Vec<QLevel>,
    /// Absolute residuals against zero at the other tips, per arm.
    pub others: Vec<(usize, Vec<QLevel>)>,
    /// `|Φ'''(x_j) + 3e^{−iφ_j}Φ''(x_j)| / |Φ''(x_j)|` for every arm.
    pub third: Vec<f64>,
}

/// Growth-rate diagnostics at the tips of `state` for growth at `arm`.
///
/// `q(z) = ∂_t Φ` is estimated by Richardson-extrapolated forward
/// differences in `h` of `Φ ∘ f^{φ_j, h}`. At the grown tip the evaluation
/// point approaches `x_j` radially, with `h` shrinking faster than the
/// offset squared so that the particle stays small compared with the
/// distance to it; each level halves the offset.
pub fn q_identity_check(chain: &ConformalChain, state: &TipState, arm: usize, h: f64) -> Result<QIdentityReport> {
    if !(h > 0.0 && h < 1e-3) {
        return Err(Error::domain(format!("step h must lie in (0, 1e-3), got {h}")));
    }
    let tip = *state.tips().get(arm).ok_or_else(|| Error::domain(format!("no arm {arm}")))?;
    let local = tip_local_scale(chain, state);
    let x = unit(tip.angle);
    let target = 2.0 * x * x * tip.second_deriv;

    let rate = |z: Complex64, h: f64| -> Result<Complex64> {
        let phi0 = chain.evaluate(z)?;
        let d = |h: f64| -> Result<Complex64> {
            let s = RotatedSlit::with_capacity(h, tip.angle)?;
            Ok((chain.evaluate(s.map_unchecked(z))? - phi0) / h)
        };
        Ok(2.0 * d(0.5 * h)? - d(h)?)
    };

    let levels = 4;
    let offset0 = (0.25 * local).min(4.0 * h.sqrt());
    let mut grown = Vec::with_capacity(levels);
    for i in 0..levels {
        let r = offset0 * 0.5f64.powi(i as i32);
        let hi = h * 0.125f64.powi(i as i32);
        let q = rate(x * (1.0 + r), hi)?;
        grown.push(QLevel { h: hi, offset: r, residual: (q - target).norm() / target.norm() });
    }

    let mut others = Vec::new();
    for (l, t) in state.tips().iter().enumerate() {
        if l == arm {
            continue;
        }
        let mut lv = Vec::with_capacity(levels);
        for i in 0..levels {
            let hi = h * 0.5f64.powi(i as i32);
            let q = rate(unit(t.angle), hi)?;
            lv.push(QLevel { h: hi, offset: 0.0, residual: q.norm() });
        }
        others.push((l, lv));
    }

    let third = state
        .tips()
        .iter()
        .map(|t| third_derivative_residual(chain, t.angle, local))
        .collect::<Result<Vec<_>>>()?;
    Ok(QIdentityReport { arm, grown, others, third })
}

/// `|Φ'''(x) + 3e^{−iφ}Φ''(x)| / |Φ''(x)|` with `Φ'''` from a fourth-order
/// one-sided difference of `Φ''` along the outward radius.
pub fn third_derivative_residual(chain: &ConformalChain, angle: f64, local: f64) -> Result<f64> {
    let x = unit(angle);
    let step = local / 100.0;
    let mut s = [Complex64::new(0.0, 0.0); 5];
    for (k, v) in s.iter_mut().enumerate() {
        *v = chain.evaluate_with_derivs(x * (1.0 + k as f64 * step))?.second;
    }
    let d = (-25.0 * s[0] + 48.0 * s[1] - 36.0 * s[2] + 16.0 * s[3] - 3.0 * s[4]) / (12.0 * step);
    let third = d / x;
    Ok((third + 3.0 * x.conj() * s[0]).norm() / s[0].norm())
}
