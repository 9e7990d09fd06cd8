//! Run reports and their on-disk form: `<name>.csv` (per-trial rows),
//! `<name>.summary.json` (aggregates) and `<name>.timing.json` (wall clock,
//! kept apart so the first two are reproducible byte for byte).

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use super::config::{ExperimentSpec, Validation};
use crate::disorder::HASH_ID;
use crate::error::{Error, Result};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub spec: ExperimentSpec,
    pub validation: Validation,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub aggregates: Value,
    pub wall_clock_s: f64,
}

/// Shortest round-trip decimal form, so equal numbers print identically.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:?}")
    }
}

/// JSON for floats that may be non-finite.
pub fn jnum(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(num(x))
    }
}

pub fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

impl RunReport {
    pub fn summary(&self) -> Value {
        json!({
            "experiment": self.spec.experiment.name(),
            "code_version": CODE_VERSION,
            "hash_id": HASH_ID,
            "seed": self.spec.seed,
            "spec": to_value(&self.spec),
            "validation": to_value(&self.validation),
            "columns": self.header,
            "rows": self.rows.len(),
            "aggregates": self.aggregates,
        })
    }

    pub fn csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.to_string()))
    }

    pub fn summary_bytes(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(&self.summary()).expect("summary serializes");
        v.push(b'\n');
        v
    }

    /// Writes the three files into `dir`, returning their paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let name = self.spec.experiment.name();
        let timing = serde_json::to_vec_pretty(&json!({ "wall_clock_s": self.wall_clock_s })).expect("timing");
        let files = [
            (dir.join(format!("{name}.csv")), self.csv_bytes()?),
            (dir.join(format!("{name}.summary.json")), self.summary_bytes()),
            (dir.join(format!("{name}.timing.json")), timing),
        ];
        for (path, bytes) in &files {
            write_atomic(path, bytes)?;
        }
        Ok(files.into_iter().map(|f| f.0).collect())
    }
}

/// Writes through a temporary file in the same directory and renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.to_string()))?;
    Ok(())
}
