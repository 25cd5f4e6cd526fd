use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use loewner_cli::*;
use loewner_core::experiments::{worker_limit, Model, StabilitySpec, WORKERS_ENV};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "loewner", version, about = "Aggregate Loewner evolution, Hastings–Levitov and Laplacian path model experiments")]
struct Cli {
    /// Concurrent sweep cells (defaults to the number of cores).
    #[arg(long, global = true, env = WORKERS_ENV)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one model from a JSON config.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Root for the run directory (overrides `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Capacity-ladder convergence study against the path model.
    Converge {
        config: PathBuf,
        /// First seed; seeds are consecutive from here.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        ladder: Option<Vec<f64>>,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long, value_delimiter = ',', value_parser = parse_model)]
        models: Option<Vec<Model>>,
        #[arg(long)]
        reference_dt: Option<f64>,
        /// Use sigma = c^gamma(eta), the proven-convergence scaling, instead of the config's gamma/sigma.
        #[arg(long)]
        gamma_of_eta: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Weight-spread probe of the perturbed three-arm path model.
    Stability {
        #[arg(long, value_delimiter = ',', default_value = "2,2.5,3,3.5,4")]
        etas: Vec<f64>,
        #[arg(long, default_value_t = 0.02)]
        epsilon: f64,
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        #[arg(long)]
        dt: Option<f64>,
        /// Unperturbed arm length.
        #[arg(long)]
        length: Option<f64>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Bounded-Lipschitz distance between two measure files.
    Distance {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        time_scale: Option<f64>,
        /// Coarsen both measures first, e.g. `256x64`.
        #[arg(long, value_parser = parse_grid)]
        grid: Option<(usize, usize)>,
    },
    /// Re-render the cluster of a finished simulate run.
    Render {
        run: PathBuf,
        #[arg(long)]
        points_per_particle: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_model(s: &str) -> Result<Model, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown model '{s}'"))
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once('x').ok_or("expected <angle cells>x<time cells>")?;
    Ok((a.parse().map_err(|e| format!("{e}"))?, b.parse().map_err(|e| format!("{e}"))?))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let workers = match cli.workers {
        Some(0) => bail!("--workers must be positive"),
        Some(n) => n,
        None => worker_limit(),
    };
    match cli.command {
        Command::Simulate { config, seed, out } => {
            let cfg = load_config(&config, seed)?;
            let dir = cmd_simulate(&cfg, out.as_deref())?;
            println!("{}", dir.display());
        }
        Command::Converge { config, seed, ladder, seeds, models, reference_dt, gamma_of_eta, out } => {
            let cfg = load_config(&config, seed)?;
            let opts = ConvergeOptions { ladder, seeds, models, reference_dt, gamma_of_eta };
            let dir = cmd_converge(cfg, &opts, workers, out.as_deref())?;
            println!("{}", dir.display());
        }
        Command::Stability { etas, epsilon, horizon, dt, length, out } => {
            let mut spec = StabilitySpec::new(etas, epsilon, horizon);
            if let Some(dt) = dt {
                spec.dt = dt;
            }
            if let Some(l) = length {
                spec.length = l;
            }
            let (dir, rows) = cmd_stability(&spec, workers, &out)?;
            for r in rows {
                println!("eta {:<6} spread {:.3e} -> {:.3e}  {:?}", r.eta, r.initial_spread, r.final_spread, r.classification);
            }
            println!("{}", dir.display());
        }
        Command::Distance { a, b, time_scale, grid } => {
            let r = cmd_distance(&a, &b, time_scale, grid)?;
            println!("{}", serde_json::to_string_pretty(&r).context("encoding result")?);
        }
        Command::Render { run, points_per_particle, out } => {
            let dir = cmd_render(&run, out.as_deref(), points_per_particle)?;
            println!("{}", dir.display());
        }
    }
    Ok(())
}
