//! The attachment density `h(θ) ∝ |Φ'(e^{σ+iθ})|^{−η}`, its normaliser and
//! exact draws from it.
//!
//! Near a tip preimage `φ_j` the density looks like `(σ² + (θ − φ_j)²)^{−η/2}`,
//! far too sharp for a fixed grid once `σ ≪ 𝐜`. Each tracked tip gets a
//! window in which `θ = φ_j + σ·tan(u)`; the substituted integrand is smooth
//! and bounded. The rest of the circle is covered by background panels.
//! All panels are refined adaptively (Gauss–Legendre with an embedded
//! lower-order estimate) until the total error is below `rtol·Z`; a draw
//! picks a panel by mass and inverts its CDF by safeguarded Newton steps.

use crate::angle::{normalize, unit, wrapped_diff};
use crate::chain::ConformalChain;
use crate::error::{Error, Result};
use crate::tips::{tip_local_scale, Tip, TipState};
use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;
use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::num::NonZeroUsize;

/// Below this `|e^{σ+iΔ} − 1|` the density at a tip is taken from the
/// second-order Taylor model of `Φ'` instead of the composition, which
/// cannot resolve points that close to the circle.
const TAYLOR_RADIUS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Target relative error of `Z`.
    pub rtol: f64,
    /// Gauss–Legendre nodes per panel; the error estimate uses half as many.
    pub order: usize,
    /// Initial number of background panels around the full circle.
    pub background_panels: usize,
    pub max_panels: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { rtol: 1e-8, order: 10, background_panels: 64, max_panels: 50_000 }
    }
}

/// `−η·log|Φ'(e^{σ+iθ})|` evaluated through the composition.
///
/// Exact for any `σ` that is representable next to 1 in floating point
/// (roughly `σ > 1e−15`); use [`AleDensity`] for smaller `σ`.
pub fn log_density_unnormalized(chain: &ConformalChain, eta: f64, sigma: f64, theta: f64) -> f64 {
    if eta == 0.0 {
        return 0.0;
    }
    -eta * chain.log_abs_deriv(unit(theta) * sigma.exp())
}

/// The attachment density of a chain whose tip preimages are known, valid
/// down to `σ` far below machine epsilon.
#[derive(Debug, Clone)]
pub struct AleDensity<'a> {
    chain: &'a ConformalChain,
    tips: Vec<Tip>,
    eta: f64,
    sigma: f64,
    radius: f64,
}

impl<'a> AleDensity<'a> {
    pub fn new(chain: &'a ConformalChain, tips: &[Tip], eta: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::domain(format!("sigma must be positive, got {sigma}")));
        }
        if !eta.is_finite() {
            return Err(Error::domain(format!("eta must be finite, got {eta}")));
        }
        Ok(Self { chain, tips: tips.to_vec(), eta, sigma, radius: sigma.exp() })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn tips(&self) -> &[Tip] {
        &self.tips
    }

    /// `log|Φ'(e^{σ+iθ})|`.
    pub fn log_abs_deriv(&self, theta: f64) -> f64 {
        for t in &self.tips {
            let delta = wrapped_diff(theta, t.angle);
            if delta.abs() < 2.0 * TAYLOR_RADIUS {
                // e = e^{σ+iΔ} − 1 without cancellation
                let e = Complex64::new(
                    self.sigma.exp_m1() * delta.cos() - 2.0 * (0.5 * delta).sin().powi(2),
                    self.radius * delta.sin(),
                );
                if e.norm() < TAYLOR_RADIUS {
                    // Φ'(x(1+e)) ≈ Φ''(x)·x·e·(1 − 3e/2), using Φ''' = −3x̄Φ''
                    return t.second_deriv.norm().ln() + e.norm().ln() + (1.0 - 1.5 * e).norm().ln();
                }
            }
        }
        self.chain.log_abs_deriv(unit(theta) * self.radius)
    }

    pub fn log_density(&self, theta: f64) -> f64 {
        if self.eta == 0.0 {
            return 0.0;
        }
        -self.eta * self.log_abs_deriv(theta)
    }
}

/// Where a panel lives: on the circle directly, or in the `u` variable of
/// one tip window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Region {
    Background,
    Window(usize),
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    region: Region,
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

struct ByError(Panel);

impl PartialEq for ByError {
    fn eq(&self, other: &Self) -> bool {
        self.0.err == other.0.err
    }
}
impl Eq for ByError {}
impl PartialOrd for ByError {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for ByError {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.err.total_cmp(&other.0.err)
    }
}

/// `Z = ∫ |Φ'(e^{σ+iθ})|^{−η} dθ` with its error and the share of each tip
/// window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionEstimate {
    pub log_z: f64,
    pub rel_error: f64,
    /// Fraction of `Z` inside each tip window.
    pub tip_mass: Vec<f64>,
    pub panels: usize,
    pub evaluations: usize,
}

impl PartitionEstimate {
    /// `Z` itself; `+∞` if it does not fit in a float.
    pub fn z(&self) -> f64 {
        self.log_z.exp()
    }
}

/// A ready-to-draw discretisation of the attachment density.
pub struct AttachmentSampler<'a> {
    density: AleDensity<'a>,
    windows: Vec<(f64, f64)>,
    panels: Vec<Panel>,
    cumulative: Vec<f64>,
    shift: f64,
    rule: Rule,
    estimate: PartitionEstimate,
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` at two orders.
struct Rule {
    high: Vec<(f64, f64)>,
    low: Vec<(f64, f64)>,
}

impl Rule {
    fn new(order: usize) -> Result<Self> {
        let n = NonZeroUsize::new(order.max(2)).ok_or_else(|| Error::domain("quadrature order"))?;
        let m = NonZeroUsize::new((order / 2).max(1)).ok_or_else(|| Error::domain("quadrature order"))?;
        Ok(Self {
            high: GaussLegendre::new(n).as_node_weight_pairs().to_vec(),
            low: GaussLegendre::new(m).as_node_weight_pairs().to_vec(),
        })
    }
}

impl<'a> AttachmentSampler<'a> {
    /// Builds the adaptive discretisation for `chain` with tip preimages
    /// `tips` (exact zeros of `Φ'`). `local_scale` bounds the tip windows.
    pub fn new(density: AleDensity<'a>, local_scale: f64, spec: &QuadratureSpec) -> Result<Self> {
        if !(spec.rtol > 0.0) || spec.max_panels == 0 || spec.background_panels == 0 {
            return Err(Error::domain(format!("invalid quadrature spec {spec:?}")));
        }
        let rule = Rule::new(spec.order)?;
        let sigma = density.sigma;
        let eta = density.eta;

        // windows only pay off for peaked densities
        let mut windows = Vec::new();
        if eta > 0.0 {
            let half = sigma.sqrt().min(0.5 * local_scale);
            if half > sigma {
                for t in &density.tips {
                    windows.push((t.angle, half));
                }
            }
        }

        // log-shift: the tip peaks, or a coarse scan of the circle
        let mut shift = f64::NEG_INFINITY;
        for t in &density.tips {
            shift = shift.max(-eta * (sigma.ln() + t.second_deriv.norm().ln()));
        }
        for i in 0..spec.background_panels {
            let l = density.log_density(-PI + TAU * (i as f64 + 0.5) / spec.background_panels as f64);
            if l.is_nan() {
                return Err(Error::Numeric("attachment density is NaN".into()));
            }
            shift = shift.max(l);
        }
        if !shift.is_finite() {
            return Err(Error::Numeric("attachment density vanishes on the scan grid".into()));
        }

        let mut sampler = Self {
            density,
            windows,
            panels: Vec::new(),
            cumulative: Vec::new(),
            shift,
            rule,
            estimate: PartitionEstimate {
                log_z: f64::NAN,
                rel_error: f64::NAN,
                tip_mass: Vec::new(),
                panels: 0,
                evaluations: 0,
            },
        };
        sampler.refine(spec)?;
        Ok(sampler)
    }

    fn integrand(&self, region: Region, v: f64) -> f64 {
        match region {
            Region::Background => (self.density.log_density(v) - self.shift).exp(),
            Region::Window(j) => {
                let (phi, _) = self.windows[j];
                let s = self.density.sigma;
                let c = v.cos();
                (self.density.log_density(phi + s * v.tan()) - self.shift).exp() * s / (c * c)
            }
        }
    }

    fn gl(&self, nodes: &[(f64, f64)], region: Region, a: f64, b: f64) -> f64 {
        let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
        h * nodes.iter().map(|&(x, w)| w * self.integrand(region, m + h * x)).sum::<f64>()
    }

    fn panel(&self, region: Region, a: f64, b: f64) -> Panel {
        let value = self.gl(&self.rule.high, region, a, b);
        let low = self.gl(&self.rule.low, region, a, b);
        Panel { region, a, b, value, err: (value - low).abs() }
    }

    fn refine(&mut self, spec: &QuadratureSpec) -> Result<()> {
        let mut initial = Vec::new();
        for (j, &(_, half)) in self.windows.iter().enumerate() {
            let umax = (half / self.density.sigma).atan();
            for i in 0..4 {
                let a = -umax + 0.5 * umax * i as f64;
                initial.push((Region::Window(j), a, a + 0.5 * umax));
            }
        }
        for (a, b) in self.background_gaps() {
            let pieces = (((b - a) / TAU) * spec.background_panels as f64).ceil().max(1.0) as usize;
            let w = (b - a) / pieces as f64;
            for i in 0..pieces {
                initial.push((Region::Background, a + w * i as f64, if i + 1 == pieces { b } else { a + w * (i + 1) as f64 }));
            }
        }

        let per_panel = self.rule.high.len() + self.rule.low.len();
        let mut evaluations = 0;
        let mut heap = BinaryHeap::new();
        let (mut total, mut error) = (0.0, 0.0);
        for (region, a, b) in initial {
            let p = self.panel(region, a, b);
            evaluations += per_panel;
            total += p.value;
            error += p.err;
            heap.push(ByError(p));
        }
        while error > spec.rtol * total {
            if !total.is_finite() {
                return Err(Error::Numeric("attachment density overflowed its log-shift".into()));
            }
            if heap.len() >= spec.max_panels {
                return Err(Error::Numeric(format!(
                    "quadrature did not reach rtol {:.1e} within {} panels (estimate {:.3e})",
                    spec.rtol,
                    spec.max_panels,
                    error / total
                )));
            }
            let Some(ByError(p)) = heap.pop() else { break };
            let mid = 0.5 * (p.a + p.b);
            if !(p.a < mid && mid < p.b) {
                // cannot split further; keep as is
                heap.push(ByError(Panel { err: 0.0, ..p }));
                error -= p.err;
                continue;
            }
            let (l, r) = (self.panel(p.region, p.a, mid), self.panel(p.region, mid, p.b));
            evaluations += 2 * per_panel;
            total += l.value + r.value - p.value;
            error += l.err + r.err - p.err;
            heap.push(ByError(l));
            heap.push(ByError(r));
        }

        let mut panels: Vec<Panel> = heap.into_iter().map(|b| b.0).collect();
        panels.sort_by(|x, y| {
            let key = |p: &Panel| match p.region {
                Region::Background => (0usize, p.a),
                Region::Window(j) => (j + 1, p.a),
            };
            let (kx, ky) = (key(x), key(y));
            kx.0.cmp(&ky.0).then(kx.1.total_cmp(&ky.1))
        });
        // exact re-summation in a fixed order
        let mut acc = 0.0;
        let mut err = 0.0;
        let mut cumulative = Vec::with_capacity(panels.len());
        let mut tip = vec![0.0; self.windows.len()];
        for p in &panels {
            acc += p.value;
            err += p.err;
            cumulative.push(acc);
            if let Region::Window(j) = p.region {
                tip[j] += p.value;
            }
        }
        if !(acc > 0.0) || !acc.is_finite() {
            return Err(Error::Numeric(format!("partition function estimate is {acc}")));
        }
        self.estimate = PartitionEstimate {
            log_z: self.shift + acc.ln(),
            rel_error: err / acc,
            tip_mass: tip.iter().map(|m| m / acc).collect(),
            panels: panels.len(),
            evaluations,
        };
        self.panels = panels;
        self.cumulative = cumulative;
        Ok(())
    }

    /// Complement of the tip windows as intervals in `[−π, π]`, possibly
    /// extending past `π` (angles are reduced when evaluated).
    fn background_gaps(&self) -> Vec<(f64, f64)> {
        if self.windows.is_empty() {
            return vec![(-PI, PI)];
        }
        let mut w: Vec<(f64, f64)> = self.windows.iter().map(|&(c, h)| (normalize(c), h)).collect();
        w.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut gaps = Vec::with_capacity(w.len());
        for i in 0..w.len() {
            let (c, h) = w[i];
            let (mut c2, h2) = w[(i + 1) % w.len()];
            if i + 1 == w.len() {
                c2 += TAU;
            }
            let (a, b) = (c + h, c2 - h2);
            if b > a {
                gaps.push((a, b));
            }
        }
        gaps
    }

    pub fn estimate(&self) -> &PartitionEstimate {
        &self.estimate
    }

    pub fn density(&self) -> &AleDensity<'a> {
        &self.density
    }

    /// Draws one angle in `(−π, π]`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let total = *self.cumulative.last().expect("sampler has panels");
        let target = rng.random::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= target).min(self.panels.len() - 1);
        let p = self.panels[i];
        let r: f64 = rng.random();
        let v = self.invert(&p, r * p.value)?;
        Ok(match p.region {
            Region::Background => normalize(v),
            Region::Window(j) => normalize(self.windows[j].0 + self.density.sigma * v.tan()),
        })
    }

    /// Solves `∫_a^x g = mass` inside one panel.
    fn invert(&self, p: &Panel, mass: f64) -> Result<f64> {
        let (mut lo, mut hi) = (p.a, p.b);
        let mut x = p.a + (p.b - p.a) * (mass / p.value).clamp(0.0, 1.0);
        for _ in 0..100 {
            let f = self.gl(&self.rule.high, p.region, p.a, x) - mass;
            // the integrand itself carries ~1e-12 relative noise near a tip
            if f.abs() <= 1e-11 * p.value {
                return Ok(x);
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let g = self.integrand(p.region, x);
            let mut next = if g > 0.0 { x - f / g } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 1e-13 * (p.b - p.a) || hi - lo <= 4.0 * f64::EPSILON * (p.b - p.a).max(x.abs()) {
                return Ok(next);
            }
            x = next;
        }
        Err(Error::Numeric("inverse CDF did not converge".into()))
    }
}

/// `Z_n` for a chain with the given tips.
pub fn partition_estimate(
    chain: &ConformalChain,
    tips: &TipState,
    eta: f64,
    sigma: f64,
    spec: &QuadratureSpec,
) -> Result<PartitionEstimate> {
    let density = AleDensity::new(chain, tips.tips(), eta, sigma)?;
    if eta == 0.0 {
        return Ok(PartitionEstimate {
            log_z: TAU.ln(),
            rel_error: 0.0,
            tip_mass: vec![0.0; tips.len()],
            panels: 1,
            evaluations: 0,
        });
    }
    Ok(AttachmentSampler::new(density, tip_local_scale(chain, tips), spec)?.estimate.clone())
}

/// One draw from `h_{n+1}`; uniform for `η = 0`.
pub fn sample_attachment<R: Rng + ?Sized>(
    chain: &ConformalChain,
    tips: &TipState,
    eta: f64,
    sigma: f64,
    spec: &QuadratureSpec,
    rng: &mut R,
) -> Result<f64> {
    if eta == 0.0 {
        return Ok(uniform_angle(rng));
    }
    let density = AleDensity::new(chain, tips.tips(), eta, sigma)?;
    AttachmentSampler::new(density, tip_local_scale(chain, tips), spec)?.sample(rng)
}

pub(crate) fn uniform_angle<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // (−π, π]
    PI - TAU * rng.random::<f64>()
}

/// `∫ (1 + x²)^{−η/2} dx` over the line, the tip-peak shape constant.
pub fn peak_integral(eta: f64) -> f64 {
    if !(eta > 1.0) {
        return f64::INFINITY;
    }
    // Beta(1/2, (η−1)/2) via the Gauss–Legendre rule in u = atan x
    let rule = GaussLegendre::new(NonZeroUsize::new(200).unwrap());
    rule.integrate(-FRAC_PI_2, FRAC_PI_2, |u| u.cos().powf(eta - 2.0))
}
