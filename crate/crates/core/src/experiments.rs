//! Experiment orchestration: run configuration, single simulations, the
//! convergence study against an LPM reference and the three-arm stability
//! probe. Persistence lives with the command-line front end.

use crate::ale::{ale_run, aux_run, AleEvent, AleParams, QuadratureSpec, DEFAULT_PARTICLE_BUDGET};
use crate::angle::unit;
use crate::chain::{build_initial, ArmSpec, ConformalChain, InitialConfig};
use crate::error::{Error, Result};
use crate::lpm::{encode_driving, lpm_run, LpmTrajectory};
use crate::measures::{coarsen, coarsening_bound, d_bw, encode_particles, CylinderMeasure, CylinderMetric};
use crate::rng;
use crate::tips::{multinomial_run, step_count, TipSnapshot};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::sync::Arc;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Environment variable capping concurrent sweep cells.
pub const WORKERS_ENV: &str = "LOEWNER_WORKERS";

/// Below this `σ` the attachment density is resolved only through the tip
/// Taylor model.
pub const SIGMA_WARNING: f64 = 1e-25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Ale,
    Aux,
    Multinomial,
    Lpm,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Ale => "ale",
            Model::Aux => "aux",
            Model::Multinomial => "multinomial",
            Model::Lpm => "lpm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub arms: Vec<ArmSpec>,
    #[serde(default = "default_micro")]
    pub micro_capacity: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_micro() -> f64 {
    1e-4
}
fn default_tolerance() -> f64 {
    1e-2
}

impl InitialSpec {
    pub fn build(&self) -> Result<Arc<InitialConfig>> {
        Ok(Arc::new(build_initial(&self.arms, self.micro_capacity, self.tolerance)?))
    }

    /// `k` equally spaced arms of equal length starting at angle 0.
    pub fn symmetric(k: usize, length: f64) -> Self {
        Self {
            arms: (0..k).map(|m| ArmSpec { angle: TAU * m as f64 / k as f64, length }).collect(),
            micro_capacity: default_micro(),
            tolerance: default_tolerance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub model: Model,
    pub initial: InitialSpec,
    pub eta: f64,
    #[serde(default)]
    pub alpha: f64,
    /// Particle capacity `𝐜` (not used by the path model).
    #[serde(default)]
    pub capacity: Option<f64>,
    /// `σ = 𝐜^γ`; exactly one of `gamma` and `sigma` for ALE-type models.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub sigma: Option<f64>,
    pub horizon: f64,
    /// Macro step of the path model.
    #[serde(default)]
    pub dt: Option<f64>,
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: String,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_ppp")]
    pub points_per_particle: usize,
}

fn default_output() -> String {
    "runs".into()
}
fn default_budget() -> usize {
    DEFAULT_PARTICLE_BUDGET
}
fn default_ppp() -> usize {
    8
}

impl RunConfig {
    pub fn new(model: Model, initial: InitialSpec, eta: f64, horizon: f64, seed: u64) -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            model,
            initial,
            eta,
            alpha: 0.0,
            capacity: None,
            gamma: None,
            sigma: None,
            horizon,
            dt: None,
            seed,
            output_dir: default_output(),
            quadrature: QuadratureSpec::default(),
            budget: default_budget(),
            points_per_particle: default_ppp(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::domain(format!(
                "config schema version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::domain("horizon must be positive"));
        }
        match self.model {
            Model::Lpm => {
                let dt = self.dt.ok_or_else(|| Error::domain("lpm needs dt"))?;
                let steps = step_count(self.horizon, dt);
                if steps > self.budget {
                    return Err(Error::Budget { needed: steps, budget: self.budget });
                }
            }
            m => {
                let c = self.capacity.ok_or_else(|| Error::domain(format!("{} needs a capacity", m.name())))?;
                if matches!(m, Model::Ale | Model::Aux) {
                    if self.gamma.is_some() == self.sigma.is_some() {
                        return Err(Error::domain("set exactly one of gamma and sigma"));
                    }
                    self.ale_params()?;
                } else {
                    let steps = step_count(self.horizon, c);
                    if steps > self.budget {
                        return Err(Error::Budget { needed: steps, budget: self.budget });
                    }
                }
            }
        }
        Ok(())
    }

    /// The `σ` actually used.
    pub fn sigma_value(&self) -> Option<f64> {
        match (self.sigma, self.gamma, self.capacity) {
            (Some(s), _, _) => Some(s),
            (None, Some(g), Some(c)) => Some(c.powf(g)),
            _ => None,
        }
    }

    pub fn ale_params(&self) -> Result<AleParams> {
        let c = self.capacity.ok_or_else(|| Error::domain("capacity missing"))?;
        let sigma = self.sigma_value().ok_or_else(|| Error::domain("sigma or gamma missing"))?;
        let p = AleParams { eta: self.eta, sigma, alpha: self.alpha, capacity: c, horizon: self.horizon, budget: self.budget };
        p.validate()?;
        Ok(p)
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if let Some(s) = self.sigma_value() {
            if matches!(self.model, Model::Ale | Model::Aux) && s < SIGMA_WARNING {
                w.push(format!("sigma = {s:e} is below {SIGMA_WARNING:e}; tips are resolved by the Taylor model only"));
            }
        }
        w
    }
}

/// `γ(η) = 2(η+2)/(η−1) ∨ (5η+10)/(2η) ∨ 8`.
pub fn gamma_of_eta(eta: f64) -> Result<f64> {
    if !(eta > 1.0) {
        return Err(Error::domain(format!("gamma(eta) needs eta > 1, got {eta}")));
    }
    Ok((2.0 * (eta + 2.0) / (eta - 1.0)).max((5.0 * eta + 10.0) / (2.0 * eta)).max(8.0))
}

/// Worker limit from [`WORKERS_ENV`], defaulting to the available cores.
pub fn worker_limit() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Numeric(format!("thread pool: {e}")))
}

/// Everything a single simulation produced.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub config: RunConfig,
    pub sigma: Option<f64>,
    pub chain: ConformalChain,
    pub events: Vec<AleEvent>,
    pub history: Vec<TipSnapshot>,
    pub measure: CylinderMeasure,
    pub warnings: Vec<String>,
    pub lpm: Option<LpmTrajectory>,
}

pub fn simulate(config: &RunConfig) -> Result<Simulation> {
    config.validate()?;
    let initial = config.initial.build()?;
    let mut rng = rng::stream(config.seed, 0);
    let warnings = config.warnings();
    match config.model {
        Model::Ale | Model::Aux => {
            let p = config.ale_params()?;
            let traj = if config.model == Model::Ale {
                ale_run(initial, &p, &config.quadrature, &mut rng)?
            } else {
                aux_run(initial, &p, &config.quadrature, &mut rng)?
            };
            let measure = traj.encode()?;
            Ok(Simulation {
                config: config.clone(),
                sigma: Some(p.sigma),
                chain: traj.chain,
                events: traj.events,
                history: traj.history,
                measure,
                warnings,
                lpm: None,
            })
        }
        Model::Multinomial => {
            let c = config.capacity.expect("validated");
            let traj = multinomial_run(initial, config.eta, c, config.horizon, &mut rng)?;
            let events = multinomial_events(&traj.history, &traj.driving_angles(), c);
            let measure = encode_particles(&events.iter().map(|e| (e.theta, e.capacity)).collect::<Vec<_>>(), config.horizon)?;
            Ok(Simulation {
                config: config.clone(),
                sigma: None,
                chain: traj.chain,
                events,
                history: traj.history,
                measure,
                warnings,
                lpm: None,
            })
        }
        Model::Lpm => {
            let dt = config.dt.expect("validated");
            let traj = lpm_run(initial, config.eta, dt, config.horizon)?;
            let measure = encode_driving(&traj, traj.steps())?;
            Ok(Simulation {
                config: config.clone(),
                sigma: None,
                chain: traj.chain.clone(),
                events: Vec::new(),
                history: traj.history.clone(),
                measure,
                warnings,
                lpm: Some(traj),
            })
        }
    }
}

fn multinomial_events(history: &[TipSnapshot], angles: &[f64], c: f64) -> Vec<AleEvent> {
    angles
        .iter()
        .enumerate()
        .map(|(i, &theta)| AleEvent {
            n: i + 1,
            theta,
            capacity: c,
            nearest_tip: history.get(i + 1).and_then(|s| s.arm),
            delta: Some(0.0),
            z_estimate: None,
        })
        .collect()
}

/// Sup-norm deviations of a tip history from the path model.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Deviation {
    /// `sup_t Σ_j |e^{iφ^j_t} − e^{iφ̄^j_t}|`
    pub tip: f64,
    /// `sup_t Σ_j |p^j_t − p̄^j_t|`
    pub weight: f64,
    /// sup of the sum of the two
    pub total: f64,
}

/// Deviations over the snapshot times of `history`.
pub fn tip_deviation(history: &[TipSnapshot], reference: &LpmTrajectory) -> Deviation {
    let mut d = Deviation::default();
    for s in history {
        let r = reference.snapshot_at(s.t.min(reference.horizon));
        let k = s.angles.len().min(r.angles.len());
        let dt: f64 = (0..k).map(|j| (unit(s.angles[j]) - unit(r.angles[j])).norm()).sum();
        let dw: f64 = (0..k).map(|j| (s.weights[j] - r.weights[j]).abs()).sum();
        d.tip = d.tip.max(dt);
        d.weight = d.weight.max(dw);
        d.total = d.total.max(dt + dw);
    }
    d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergeSpec {
    pub base: RunConfig,
    pub ladder: Vec<f64>,
    pub seeds: Vec<u64>,
    pub models: Vec<Model>,
    pub reference_dt: f64,
    pub grid: (usize, usize),
    pub time_scale: f64,
    /// Cap on the total number of particles across all cells.
    pub budget: usize,
}

impl ConvergeSpec {
    /// The default study: `T = 0.5`, the ladder `{0.04, 0.02, 0.01, 0.005}`,
    /// 20 seeds, reference step `1e−4`, a 256×64 grid.
    pub fn new(base: RunConfig) -> Self {
        Self {
            base,
            ladder: vec![0.04, 0.02, 0.01, 0.005],
            seeds: (0..20).collect(),
            models: vec![Model::Ale, Model::Multinomial],
            reference_dt: 1e-4,
            grid: (256, 64),
            time_scale: 1.0,
            budget: 10_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ladder.len() < 3 || self.ladder.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::domain("the capacity ladder needs at least 3 strictly decreasing rungs"));
        }
        if self.seeds.len() < 10 {
            return Err(Error::domain("the convergence study needs at least 10 seeds"));
        }
        if self.models.contains(&Model::Lpm) {
            return Err(Error::domain("the path model is the reference, not a rung model"));
        }
        let per_seed: usize = self.ladder.iter().map(|&c| step_count(self.base.horizon, c)).sum();
        let needed = per_seed * self.seeds.len() * self.models.len();
        if needed > self.budget {
            return Err(Error::Budget { needed, budget: self.budget });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergeRow {
    pub c: f64,
    pub seed: u64,
    pub model: Model,
    pub d_bw: Option<f64>,
    pub coarsening_bound: f64,
    pub sup_tip_dev: Option<f64>,
    pub sup_weight_dev: Option<f64>,
    pub sup_dev: Option<f64>,
    pub sigma: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergeSummary {
    pub c: f64,
    pub model: Model,
    pub median_d_bw: f64,
    pub median_sup_tip_dev: f64,
    pub median_sup_weight_dev: f64,
    pub median_sup_dev: f64,
    pub runs: usize,
    pub failures: usize,
}

#[derive(Debug, Clone)]
pub struct ConvergeReport {
    pub rows: Vec<ConvergeRow>,
    pub summary: Vec<ConvergeSummary>,
    pub reference: LpmTrajectory,
}

pub fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Runs the path-model reference once, then every `(𝐜, seed, model)` cell
/// on up to `workers` threads. Failed cells are reported, not fatal.
pub fn converge(spec: &ConvergeSpec, workers: usize) -> Result<ConvergeReport> {
    spec.validate()?;
    let initial = spec.base.initial.build()?;
    let horizon = spec.base.horizon;
    let reference = lpm_run(initial.clone(), spec.base.eta, spec.reference_dt, horizon)?;
    let metric = CylinderMetric::new(spec.time_scale)?;
    let (nth, nti) = spec.grid;
    let lpm_measure = coarsen(&encode_driving(&reference, reference.steps())?, nth, nti)?;
    let bound = coarsening_bound(&metric, nth, nti, horizon);

    let mut cells = Vec::new();
    for (ri, &c) in spec.ladder.iter().enumerate() {
        for &seed in &spec.seeds {
            for (mi, &model) in spec.models.iter().enumerate() {
                cells.push((ri, c, seed, mi, model));
            }
        }
    }
    let run_cell = |&(ri, c, seed, mi, model): &(usize, f64, u64, usize, Model)| -> ConvergeRow {
        let mut cfg = spec.base.clone();
        cfg.model = model;
        cfg.capacity = Some(c);
        let sigma = if matches!(model, Model::Ale | Model::Aux) { cfg.sigma_value() } else { None };
        let outcome = (|| -> Result<(f64, Deviation)> {
            let mut rng = rng::stream(seed, (ri * spec.models.len() + mi) as u64);
            let (history, measure) = match model {
                Model::Ale | Model::Aux => {
                    let p = cfg.ale_params()?;
                    let t = if model == Model::Ale {
                        ale_run(initial.clone(), &p, &cfg.quadrature, &mut rng)?
                    } else {
                        aux_run(initial.clone(), &p, &cfg.quadrature, &mut rng)?
                    };
                    let m = t.encode()?;
                    (t.history, m)
                }
                Model::Multinomial => {
                    let t = multinomial_run(initial.clone(), cfg.eta, c, horizon, &mut rng)?;
                    let driving: Vec<(f64, f64)> = t.driving_angles().into_iter().map(|a| (a, c)).collect();
                    let m = encode_particles(&driving, horizon)?;
                    (t.history, m)
                }
                Model::Lpm => unreachable!("rejected by validate"),
            };
            let d = d_bw(&coarsen(&measure, nth, nti)?, &lpm_measure, &metric)?.value;
            Ok((d, tip_deviation(&history, &reference)))
        })();
        match outcome {
            Ok((d, dev)) => ConvergeRow {
                c,
                seed,
                model,
                d_bw: Some(d),
                coarsening_bound: bound,
                sup_tip_dev: Some(dev.tip),
                sup_weight_dev: Some(dev.weight),
                sup_dev: Some(dev.total),
                sigma,
                error: None,
            },
            Err(e) => ConvergeRow {
                c,
                seed,
                model,
                d_bw: None,
                coarsening_bound: bound,
                sup_tip_dev: None,
                sup_weight_dev: None,
                sup_dev: None,
                sigma,
                error: Some(e.to_string()),
            },
        }
    };
    let rows: Vec<ConvergeRow> = pool(workers)?.install(|| cells.par_iter().map(run_cell).collect());
    let summary = summarize(&rows);
    Ok(ConvergeReport { rows, summary, reference })
}

/// Medians per `(𝐜, model)` over the successful cells, in ladder order.
pub fn summarize(rows: &[ConvergeRow]) -> Vec<ConvergeSummary> {
    let mut order: Vec<(f64, Model)> = Vec::new();
    let mut groups: BTreeMap<(usize, Model), Vec<&ConvergeRow>> = BTreeMap::new();
    for r in rows {
        let i = match order.iter().position(|&(c, m)| c == r.c && m == r.model) {
            Some(i) => i,
            None => {
                order.push((r.c, r.model));
                order.len() - 1
            }
        };
        groups.entry((i, r.model)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((i, model), rs)| {
            let ok: Vec<&&ConvergeRow> = rs.iter().filter(|r| r.error.is_none()).collect();
            let mut d: Vec<f64> = ok.iter().filter_map(|r| r.d_bw).collect();
            let mut t: Vec<f64> = ok.iter().filter_map(|r| r.sup_tip_dev).collect();
            let mut w: Vec<f64> = ok.iter().filter_map(|r| r.sup_weight_dev).collect();
            let mut s: Vec<f64> = ok.iter().filter_map(|r| r.sup_dev).collect();
            ConvergeSummary {
                c: order[i].0,
                model,
                median_d_bw: median(&mut d),
                median_sup_tip_dev: median(&mut t),
                median_sup_weight_dev: median(&mut w),
                median_sup_dev: median(&mut s),
                runs: ok.len(),
                failures: rs.len() - ok.len(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Contracting,
    Expanding,
    /// Spread stayed at rounding level (unperturbed configuration).
    Neutral,
}

/// Weight spreads below this are rounding noise.
pub const SPREAD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilitySpec {
    pub etas: Vec<f64>,
    pub epsilon: f64,
    pub horizon: f64,
    pub length: f64,
    pub dt: f64,
    pub micro_capacity: f64,
    pub tolerance: f64,
}

impl StabilitySpec {
    pub fn new(etas: Vec<f64>, epsilon: f64, horizon: f64) -> Self {
        Self { etas, epsilon, horizon, length: 0.05, dt: 1e-3, micro_capacity: 1e-5, tolerance: 5e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub eta: f64,
    /// `(t, max_j p_j − min_j p_j)` on the path-model grid.
    pub spread: Vec<(f64, f64)>,
    pub initial_spread: f64,
    pub final_spread: f64,
    pub classification: Stability,
}

/// The three-arm configuration with arm 0 stretched by `1 + ε`.
pub fn perturbed_three_arms(length: f64, epsilon: f64) -> Vec<ArmSpec> {
    (0..3)
        .map(|m| ArmSpec {
            angle: TAU * m as f64 / 3.0,
            length: if m == 0 { length * (1.0 + epsilon) } else { length },
        })
        .collect()
}

pub fn stability(spec: &StabilitySpec, workers: usize) -> Result<Vec<StabilityRow>> {
    if !(spec.epsilon >= 0.0 && spec.epsilon < 0.1) {
        return Err(Error::domain(format!("perturbation must lie in [0, 0.1), got {}", spec.epsilon)));
    }
    let initial = Arc::new(build_initial(
        &perturbed_three_arms(spec.length, spec.epsilon),
        spec.micro_capacity,
        spec.tolerance,
    )?);
    pool(workers)?.install(|| {
        spec.etas
            .par_iter()
            .map(|&eta| {
                let traj = lpm_run(initial.clone(), eta, spec.dt, spec.horizon)?;
                let spread: Vec<(f64, f64)> = traj
                    .history
                    .iter()
                    .map(|s| {
                        let hi = s.weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        let lo = s.weights.iter().copied().fold(f64::INFINITY, f64::min);
                        (s.t, hi - lo)
                    })
                    .collect();
                let initial_spread = spread[0].1;
                let final_spread = spread.last().unwrap().1;
                let classification = if initial_spread.max(final_spread) < SPREAD_FLOOR {
                    Stability::Neutral
                } else if final_spread < initial_spread {
                    Stability::Contracting
                } else {
                    Stability::Expanding
                };
                Ok(StabilityRow { eta, spread, initial_spread, final_spread, classification })
            })
            .collect()
    })
}
