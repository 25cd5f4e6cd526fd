//! Command implementations behind the `loewner` binary. Every command that
//! produces files writes them into a fresh timestamped run directory and
//! finishes with a `manifest.json` listing them.

use anyhow::{bail, Context, Result};
use chrono::Utc;
use loewner_core::ale::{read_events_jsonl, write_events_jsonl, AleEvent};
use loewner_core::chain::{render_svg, trace_cluster, write_polylines_csv};
use loewner_core::experiments::{
    converge, gamma_of_eta, simulate, stability, ConvergeReport, ConvergeSpec, Model, RunConfig, StabilityRow,
    StabilitySpec, CONFIG_SCHEMA_VERSION,
};
use loewner_core::lpm::{lpm_run, write_trajectory_csv};
use loewner_core::measures::{read_measure, write_measure, MeasureHeader};
use loewner_core::measures::{coarsen, coarsening_bound, d_bw, CylinderMetric};
use loewner_core::tips::write_tip_history_csv;
use loewner_core::{ConformalChain, RotatedSlit};
use serde::Serialize;
use serde_json::json;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const SVG_SIZE: u32 = 800;

/// Column layout of the convergence table.
pub const CONVERGE_HEADER: [&str; 10] =
    ["c", "seed", "model", "d_bw", "sup_tip_dev", "sup_weight_dev", "sup_dev", "coarsening_bound", "sigma", "error"];
pub const SUMMARY_HEADER: [&str; 8] =
    ["c", "model", "median_d_bw", "median_sup_tip_dev", "median_sup_weight_dev", "median_sup_dev", "runs", "failures"];
pub const STABILITY_HEADER: [&str; 3] = ["eta", "t", "spread"];
pub const STABILITY_SUMMARY_HEADER: [&str; 4] = ["eta", "initial_spread", "final_spread", "classification"];

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub versions: serde_json::Value,
    pub started: String,
    pub wall_clock_seconds: f64,
    pub workers: usize,
    pub warnings: Vec<String>,
    pub files: Vec<String>,
}

/// A run directory being filled.
pub struct RunDir {
    pub path: PathBuf,
    command: String,
    started: chrono::DateTime<Utc>,
    clock: Instant,
    files: Vec<String>,
}

impl RunDir {
    /// `<root>/<UTC timestamp>-<label>`, with a numeric suffix if taken.
    pub fn create(root: &Path, command: &str, label: &str) -> Result<Self> {
        let started = Utc::now();
        let stem = format!("{}-{label}", started.format("%Y%m%dT%H%M%S%.3fZ"));
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        let mut path = root.join(&stem);
        let mut i = 1;
        while path.exists() {
            path = root.join(format!("{stem}-{i}"));
            i += 1;
        }
        fs::create_dir(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self { path, command: command.into(), started, clock: Instant::now(), files: Vec::new() })
    }

    pub fn file(&mut self, name: &str) -> PathBuf {
        self.files.push(name.into());
        self.path.join(name)
    }

    pub fn writer(&mut self, name: &str) -> Result<BufWriter<File>> {
        let p = self.file(name);
        Ok(BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?))
    }

    pub fn finish(
        mut self,
        seed: Option<u64>,
        config: serde_json::Value,
        workers: usize,
        warnings: Vec<String>,
    ) -> Result<PathBuf> {
        self.files.sort();
        let m = Manifest {
            command: self.command,
            schema_version: CONFIG_SCHEMA_VERSION,
            seed,
            config,
            versions: json!({ "loewner": env!("CARGO_PKG_VERSION") }),
            started: self.started.to_rfc3339(),
            wall_clock_seconds: self.clock.elapsed().as_secs_f64(),
            workers,
            warnings,
            files: self.files,
        };
        let f = File::create(self.path.join("manifest.json"))?;
        serde_json::to_writer_pretty(BufWriter::new(f), &m)?;
        Ok(self.path)
    }
}

pub fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().with_context(|| format!("invalid config {}", path.display()))?;
    Ok(cfg)
}

fn write_pretty<T: Serialize>(dir: &mut RunDir, name: &str, value: &T) -> Result<()> {
    let mut w = dir.writer(name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_cluster(dir: &mut RunDir, chain: &ConformalChain, points_per_particle: usize) -> Result<()> {
    let polylines = trace_cluster(chain, points_per_particle)?;
    write_polylines_csv(&polylines, dir.writer("polylines.csv")?)?;
    fs::write(dir.file("cluster.svg"), render_svg(&polylines, SVG_SIZE))?;
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// `simulate`: one run of the configured model.
pub fn cmd_simulate(cfg: &RunConfig, out_root: Option<&Path>) -> Result<PathBuf> {
    let root = out_root.map_or_else(|| PathBuf::from(&cfg.output_dir), Path::to_path_buf);
    let mut dir = RunDir::create(&root, "simulate", &format!("{}-seed{}", cfg.model.name(), cfg.seed))?;
    write_pretty(&mut dir, "config.json", cfg)?;
    let sim = simulate(cfg).with_context(|| format!("{} run with seed {}", cfg.model.name(), cfg.seed))?;
    for w in &sim.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(traj) = &sim.lpm {
        write_trajectory_csv(traj, dir.writer("trajectory.csv")?)?;
    } else {
        write_events_jsonl(&sim.events, dir.writer("events.jsonl")?)?;
        if !sim.history.is_empty() {
            write_tip_history_csv(&sim.history, dir.writer("tips.csv")?)?;
        }
    }
    let metric = CylinderMetric::new(1.0)?;
    let provenance = json!({ "model": cfg.model.name(), "seed": cfg.seed, "sigma": sim.sigma, "eta": cfg.eta });
    write_measure(&dir.file("measure.csv"), &sim.measure, &MeasureHeader::new(cfg.horizon, &metric, provenance))?;
    dir.file("measure.json");
    write_cluster(&mut dir, &sim.chain, cfg.points_per_particle)?;
    let mut config = serde_json::to_value(cfg)?;
    config["sigma_used"] = json!(sim.sigma);
    dir.finish(Some(cfg.seed), config, 1, sim.warnings)
}

pub struct ConvergeOptions {
    pub ladder: Option<Vec<f64>>,
    pub seeds: Option<usize>,
    pub models: Option<Vec<Model>>,
    pub reference_dt: Option<f64>,
    pub gamma_of_eta: bool,
}

/// `converge`: the capacity ladder against the path-model reference.
pub fn cmd_converge(base: RunConfig, opts: &ConvergeOptions, workers: usize, out_root: Option<&Path>) -> Result<PathBuf> {
    let mut base = base;
    if opts.gamma_of_eta {
        base.gamma = Some(gamma_of_eta(base.eta)?);
        base.sigma = None;
    }
    let mut spec = ConvergeSpec::new(base);
    if let Some(l) = &opts.ladder {
        spec.ladder = l.clone();
    }
    if let Some(n) = opts.seeds {
        spec.seeds = (spec.base.seed..spec.base.seed + n as u64).collect();
    } else {
        spec.seeds = spec.seeds.iter().map(|s| s + spec.base.seed).collect();
    }
    if let Some(m) = &opts.models {
        spec.models = m.clone();
    }
    if let Some(dt) = opts.reference_dt {
        spec.reference_dt = dt;
    }
    spec.validate().context("invalid convergence study")?;
    let root = out_root.map_or_else(|| PathBuf::from(&spec.base.output_dir), Path::to_path_buf);
    let mut dir = RunDir::create(&root, "converge", &format!("seed{}", spec.base.seed))?;
    write_pretty(&mut dir, "spec.json", &spec)?;
    let report = converge(&spec, workers)?;
    write_converge(&mut dir, &report)?;
    write_trajectory_csv(&report.reference, dir.writer("reference.csv")?)?;

    let gamma_note = match (spec.base.gamma, gamma_of_eta(spec.base.eta)) {
        (Some(g), Ok(strict)) if g < strict => vec![format!(
            "sigma = c^{g} is larger than c^gamma(eta) = c^{strict}, the scaling under which convergence is proven; \
             the study tests a stronger empirical claim"
        )],
        _ => Vec::new(),
    };
    let failures: usize = report.summary.iter().map(|s| s.failures).sum();
    let mut warnings = gamma_note;
    if failures > 0 {
        warnings.push(format!("{failures} cells failed; see the error column"));
    }
    dir.finish(Some(spec.base.seed), serde_json::to_value(&spec)?, workers, warnings)
}

pub fn write_converge(dir: &mut RunDir, report: &ConvergeReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(dir.writer("converge.csv")?);
    w.write_record(CONVERGE_HEADER)?;
    for r in &report.rows {
        w.write_record([
            r.c.to_string(),
            r.seed.to_string(),
            r.model.name().to_string(),
            opt(r.d_bw),
            opt(r.sup_tip_dev),
            opt(r.sup_weight_dev),
            opt(r.sup_dev),
            r.coarsening_bound.to_string(),
            opt(r.sigma),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_writer(dir.writer("summary.csv")?);
    w.write_record(SUMMARY_HEADER)?;
    for s in &report.summary {
        w.write_record([
            s.c.to_string(),
            s.model.name().to_string(),
            s.median_d_bw.to_string(),
            s.median_sup_tip_dev.to_string(),
            s.median_sup_weight_dev.to_string(),
            s.median_sup_dev.to_string(),
            s.runs.to_string(),
            s.failures.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `stability`: weight spread of the perturbed three-arm path model.
pub fn cmd_stability(spec: &StabilitySpec, workers: usize, out_root: &Path) -> Result<(PathBuf, Vec<StabilityRow>)> {
    let mut dir = RunDir::create(out_root, "stability", &format!("eps{}", spec.epsilon))?;
    let rows = stability(spec, workers)?;
    let mut w = csv::Writer::from_writer(dir.writer("stability.csv")?);
    w.write_record(STABILITY_HEADER)?;
    for r in &rows {
        for (t, s) in &r.spread {
            w.write_record([r.eta.to_string(), t.to_string(), s.to_string()])?;
        }
    }
    w.flush()?;
    let mut w = csv::Writer::from_writer(dir.writer("stability_summary.csv")?);
    w.write_record(STABILITY_SUMMARY_HEADER)?;
    for r in &rows {
        let class = serde_json::to_value(r.classification)?;
        w.write_record([
            r.eta.to_string(),
            r.initial_spread.to_string(),
            r.final_spread.to_string(),
            class.as_str().unwrap_or_default().to_string(),
        ])?;
    }
    w.flush()?;
    let path = dir.finish(None, serde_json::to_value(spec)?, workers, Vec::new())?;
    Ok((path, rows))
}

#[derive(Debug, Serialize)]
pub struct DistanceReport {
    pub d_bw: f64,
    pub coarsening_bound: Option<f64>,
    pub time_scale: f64,
    pub method: String,
}

/// `distance`: `d_BW` between two measure files, optionally coarsened.
pub fn cmd_distance(a: &Path, b: &Path, time_scale: Option<f64>, grid: Option<(usize, usize)>) -> Result<DistanceReport> {
    let (mut ma, ha) = read_measure(a).with_context(|| format!("reading {}", a.display()))?;
    let (mut mb, hb) = read_measure(b).with_context(|| format!("reading {}", b.display()))?;
    if (ha.horizon - hb.horizon).abs() > 1e-12 * ha.horizon.max(hb.horizon) {
        bail!("horizons differ: {} vs {}", ha.horizon, hb.horizon);
    }
    let ts = time_scale.unwrap_or(ha.time_scale);
    let metric = CylinderMetric::new(ts)?;
    let mut bound = None;
    if let Some((nth, nti)) = grid {
        ma = coarsen(&ma, nth, nti)?;
        mb = coarsen(&mb, nth, nti)?;
        bound = Some(coarsening_bound(&metric, nth, nti, ha.horizon));
    }
    let sol = d_bw(&ma, &mb, &metric)?;
    Ok(DistanceReport { d_bw: sol.value, coarsening_bound: bound, time_scale: ts, method: format!("{:?}", sol.method) })
}

/// Rebuilds the cluster of a finished `simulate` run.
pub fn replay(run: &Path) -> Result<(RunConfig, ConformalChain)> {
    let cfg_path = run.join("config.json");
    let text = fs::read_to_string(&cfg_path).with_context(|| format!("reading {}", cfg_path.display()))?;
    let cfg: RunConfig = serde_json::from_str(&text)?;
    let initial = cfg.initial.build()?;
    if cfg.model == Model::Lpm {
        // the path model has no particle log; it is deterministic
        let traj = lpm_run(initial, cfg.eta, cfg.dt.context("lpm config without dt")?, cfg.horizon)?;
        return Ok((cfg, traj.chain));
    }
    let events_path = run.join("events.jsonl");
    let events: Vec<AleEvent> = read_events_jsonl(BufReader::new(
        File::open(&events_path).with_context(|| format!("opening {}", events_path.display()))?,
    ))?;
    let mut chain = ConformalChain::new(initial);
    for e in &events {
        chain.push(RotatedSlit::with_capacity(e.capacity, e.theta)?);
    }
    Ok((cfg, chain))
}

/// `render`: re-renders the SVG (and polylines) of a run into a new run
/// directory.
pub fn cmd_render(run: &Path, out_root: Option<&Path>, points_per_particle: Option<usize>) -> Result<PathBuf> {
    let (cfg, chain) = replay(run)?;
    let root = out_root.map_or_else(|| run.parent().unwrap_or(Path::new(".")).to_path_buf(), Path::to_path_buf);
    let mut dir = RunDir::create(&root, "render", &format!("{}-seed{}", cfg.model.name(), cfg.seed))?;
    write_cluster(&mut dir, &chain, points_per_particle.unwrap_or(cfg.points_per_particle))?;
    let config = json!({ "source": run.display().to_string(), "config": cfg });
    dir.finish(Some(cfg.seed), config, 1, Vec::new())
}
