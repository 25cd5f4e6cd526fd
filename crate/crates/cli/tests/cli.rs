use loewner_cli::*;
use loewner_core::experiments::{InitialSpec, Model, RunConfig, StabilitySpec};
use loewner_core::ArmSpec;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_loewner"))
}

fn two_arms() -> InitialSpec {
    InitialSpec {
        arms: vec![ArmSpec { angle: 0.0, length: 0.5 }, ArmSpec { angle: 2.0, length: 0.25 }],
        micro_capacity: 1e-3,
        tolerance: 2e-2,
    }
}

fn ale_config() -> RunConfig {
    let mut c = RunConfig::new(Model::Ale, two_arms(), 2.0, 0.12, 3);
    c.capacity = Some(0.04);
    c.gamma = Some(2.0);
    c
}

fn write_config(dir: &Path, cfg: &RunConfig) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn first_line(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap_or_default().to_string()
}

#[test]
fn config_schema_is_pinned() {
    let v = serde_json::to_value(ale_config()).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(
        keys,
        [
            "alpha",
            "budget",
            "capacity",
            "dt",
            "eta",
            "gamma",
            "horizon",
            "initial",
            "model",
            "output_dir",
            "points_per_particle",
            "quadrature",
            "schema_version",
            "seed",
            "sigma"
        ]
    );
    let mut bad = v.clone();
    bad["colour"] = serde_json::json!(1);
    assert!(RunConfig::from_json(&bad.to_string()).is_err());
    let mut old = v.clone();
    old["schema_version"] = serde_json::json!(0);
    assert!(RunConfig::from_json(&old.to_string()).is_err());
    let mut both = v;
    both["sigma"] = serde_json::json!(1e-3);
    assert!(RunConfig::from_json(&both.to_string()).is_err());
}

#[test]
fn simulate_writes_a_complete_run_directory() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &ale_config());
    let out = tmp.path().join("runs");
    let stdout = run_ok(bin().args(["simulate", cfg.to_str().unwrap(), "--seed", "11", "--out", out.to_str().unwrap()]));
    let run = PathBuf::from(stdout.trim());
    assert!(run.starts_with(&out));
    let name = run.file_name().unwrap().to_str().unwrap();
    assert!(name.ends_with("-ale-seed11") && name.starts_with("20"), "{name}");

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["config"]["seed"], 11);
    assert_eq!(manifest["config"]["sigma_used"], 0.04f64.powi(2));
    assert!(manifest["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
    assert!(manifest["versions"]["loewner"].is_string());
    let files: Vec<&str> = manifest["files"].as_array().unwrap().iter().map(|f| f.as_str().unwrap()).collect();
    assert_eq!(
        files,
        ["cluster.svg", "config.json", "events.jsonl", "measure.csv", "measure.json", "polylines.csv", "tips.csv"]
    );
    for f in &files {
        assert!(run.join(f).is_file(), "{f}");
    }

    assert_eq!(first_line(&run.join("tips.csv")), "n,t,arm,phi_0,phi_1,p_0,p_1,abs_second_deriv_0,abs_second_deriv_1");
    assert_eq!(first_line(&run.join("measure.csv")), "theta,t,mass");
    assert_eq!(first_line(&run.join("polylines.csv")), "event_index,t,re,im");
    let header: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("measure.json")).unwrap()).unwrap();
    let keys: Vec<&str> = header.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["horizon", "provenance", "schema_version", "time_scale"]);
    assert_eq!(header["provenance"]["seed"], 11);

    let events = fs::read_to_string(run.join("events.jsonl")).unwrap();
    assert_eq!(events.lines().count(), 3);
    for line in events.lines() {
        let e: serde_json::Value = serde_json::from_str(line).unwrap();
        let keys: Vec<&str> = e.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, ["capacity", "delta", "n", "nearest_tip", "theta", "z_estimate"]);
    }
    assert!(fs::read_to_string(run.join("cluster.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn same_seed_gives_identical_files() {
    let tmp = TempDir::new().unwrap();
    let cfg = ale_config();
    let a = cmd_simulate(&cfg, Some(&tmp.path().join("a"))).unwrap();
    let b = cmd_simulate(&cfg, Some(&tmp.path().join("b"))).unwrap();
    for f in ["events.jsonl", "tips.csv", "measure.csv", "polylines.csv", "cluster.svg"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let mut other = cfg.clone();
    other.seed += 1;
    let c = cmd_simulate(&other, Some(&tmp.path().join("c"))).unwrap();
    assert_ne!(fs::read(a.join("events.jsonl")).unwrap(), fs::read(c.join("events.jsonl")).unwrap());
}

#[test]
fn render_reproduces_the_cluster() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = ale_config();
    cfg.model = Model::Aux;
    let run = cmd_simulate(&cfg, Some(tmp.path())).unwrap();
    let out = run_ok(bin().args(["render", run.to_str().unwrap()]));
    let rendered = PathBuf::from(out.trim());
    assert_ne!(rendered, run);
    assert_eq!(fs::read(run.join("polylines.csv")).unwrap(), fs::read(rendered.join("polylines.csv")).unwrap());
    assert_eq!(fs::read(run.join("cluster.svg")).unwrap(), fs::read(rendered.join("cluster.svg")).unwrap());
}

#[test]
fn lpm_symmetric_run_has_constant_weights() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = RunConfig::new(Model::Lpm, InitialSpec::symmetric(3, 0.3), 2.0, 0.1, 0);
    cfg.dt = Some(1e-2);
    let run = cmd_simulate(&cfg, Some(tmp.path())).unwrap();
    let mut r = csv::Reader::from_path(run.join("trajectory.csv")).unwrap();
    let h: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(h, ["t", "phi_0", "phi_1", "phi_2", "p_0", "p_1", "p_2", "abs_second_deriv_0", "abs_second_deriv_1", "abs_second_deriv_2"]);
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.unwrap();
        for j in 4..7 {
            let p: f64 = rec[j].parse().unwrap();
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
        rows += 1;
    }
    assert_eq!(rows, 11);
    assert!(!run.join("events.jsonl").exists());
    // the path model is replayed, not logged
    let rendered = cmd_render(&run, Some(&tmp.path().join("r")), None).unwrap();
    assert_eq!(fs::read(run.join("polylines.csv")).unwrap(), fs::read(rendered.join("polylines.csv")).unwrap());
}

#[test]
fn distance_between_measure_files() {
    let tmp = TempDir::new().unwrap();
    let run = cmd_simulate(&ale_config(), Some(tmp.path())).unwrap();
    let m = run.join("measure.csv");
    let same = cmd_distance(&m, &m, None, None).unwrap();
    assert_eq!(same.d_bw, 0.0);
    // sharp peaks at the tips make other seeds coincide; uniform attachment differs
    let mut other = ale_config();
    other.eta = 0.0;
    let run2 = cmd_simulate(&other, Some(tmp.path())).unwrap();
    let d = cmd_distance(&m, &run2.join("measure.csv"), None, Some((256, 64))).unwrap();
    assert!(d.d_bw > 0.0 && d.d_bw <= 2.0);
    assert!(d.coarsening_bound.unwrap() > 0.0);
    let out = run_ok(bin().args(["distance", m.to_str().unwrap(), m.to_str().unwrap()]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["d_bw"], 0.0);
}

#[test]
fn stability_tables() {
    let tmp = TempDir::new().unwrap();
    let mut spec = StabilitySpec::new(vec![2.0, 4.0], 0.0, 0.05);
    spec.dt = 1e-2;
    let (run, rows) = cmd_stability(&spec, 2, tmp.path()).unwrap();
    for r in &rows {
        assert!(r.spread.iter().all(|(_, s)| *s < 1e-12));
    }
    assert_eq!(first_line(&run.join("stability.csv")), STABILITY_HEADER.join(","));
    let summary = fs::read_to_string(run.join("stability_summary.csv")).unwrap();
    assert_eq!(summary.lines().next().unwrap(), STABILITY_SUMMARY_HEADER.join(","));
    assert!(summary.lines().skip(1).all(|l| l.ends_with(",neutral")), "{summary}");
}

#[test]
fn converge_is_reproducible_across_worker_counts() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = RunConfig::new(Model::Multinomial, two_arms(), 2.0, 0.1, 0);
    cfg.capacity = Some(0.02);
    let path = write_config(tmp.path(), &cfg);
    let mut dirs = Vec::new();
    for workers in ["1", "3"] {
        let out = tmp.path().join(format!("w{workers}"));
        let stdout = run_ok(
            bin()
                .env("LOEWNER_WORKERS", workers)
                .args(["converge", path.to_str().unwrap(), "--ladder", "0.05,0.025,0.0125", "--seeds", "10"])
                .args(["--models", "multinomial", "--reference-dt", "1e-3", "--out", out.to_str().unwrap()]),
        );
        dirs.push(PathBuf::from(stdout.trim()));
    }
    for f in ["converge.csv", "summary.csv", "reference.csv"] {
        assert_eq!(fs::read(dirs[0].join(f)).unwrap(), fs::read(dirs[1].join(f)).unwrap(), "{f}");
    }
    assert_eq!(first_line(&dirs[0].join("converge.csv")), CONVERGE_HEADER.join(","));
    assert_eq!(first_line(&dirs[0].join("summary.csv")), SUMMARY_HEADER.join(","));
    assert_eq!(fs::read_to_string(dirs[0].join("converge.csv")).unwrap().lines().count(), 31);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dirs[1].join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["workers"], 3);
}

#[test]
fn bad_input_fails_with_a_message() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = ale_config();
    cfg.budget = 2;
    let path = write_config(tmp.path(), &cfg);
    let out = bin().args(["simulate", path.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));
    let out = bin().args(["simulate", "/nonexistent.json"]).output().unwrap();
    assert!(!out.status.success());
    let out = bin().env("LOEWNER_WORKERS", "0").args(["stability", "--out", tmp.path().to_str().unwrap()]).output().unwrap();
    assert!(!out.status.success());
}
