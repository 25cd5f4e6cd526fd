//! Exchange format: `<stem>.csv` with columns `theta,t,mass` and a JSON
//! header `<stem>.json` with horizon, time scale and provenance.

use super::{Atom, CylinderMeasure, CylinderMetric};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

pub const MEASURE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureHeader {
    pub schema_version: u32,
    pub horizon: f64,
    pub time_scale: f64,
    pub provenance: serde_json::Value,
}

impl MeasureHeader {
    pub fn new(horizon: f64, metric: &CylinderMetric, provenance: serde_json::Value) -> Self {
        Self { schema_version: MEASURE_SCHEMA_VERSION, horizon, time_scale: metric.time_scale, provenance }
    }
}

fn header_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes `path` (CSV) and its JSON header next to it.
pub fn write_measure(path: &Path, m: &CylinderMeasure, header: &MeasureHeader) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["theta", "t", "mass"])?;
    for a in m.atoms() {
        w.write_record([a.theta.to_string(), a.t.to_string(), a.mass.to_string()])?;
    }
    w.flush()?;
    serde_json::to_writer_pretty(BufWriter::new(File::create(header_path(path))?), header)?;
    Ok(())
}

pub fn read_measure(path: &Path) -> Result<(CylinderMeasure, MeasureHeader)> {
    let hp = header_path(path);
    let header: MeasureHeader = serde_json::from_reader(BufReader::new(
        File::open(&hp).map_err(|e| Error::Io(format!("{}: {e}", hp.display())))?,
    ))?;
    let mut r = csv::Reader::from_reader(BufReader::new(
        File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?,
    ));
    let atoms = r.deserialize::<Atom>().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((CylinderMeasure::new(atoms, header.horizon)?, header))
}
