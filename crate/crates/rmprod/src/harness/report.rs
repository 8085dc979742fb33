//! JSON reports and CSV artifacts.

use crate::error::{Error, Result};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};

/// |z| above which a comparison counts as a failure.
pub const Z_FAIL: f64 = 4.0;
/// KS p-value below which a distributional comparison fails.
pub const KS_FAIL: f64 = 0.01;

/// One formula/estimate comparison.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct QueryResult {
    pub label: String,
    /// Factor counts or sizes the query refers to.
    pub m: Vec<usize>,
    /// Limit times the formula was evaluated at.
    pub t: Vec<f64>,
    pub c: Vec<f64>,
    pub formula: Option<f64>,
    pub estimate: Option<f64>,
    pub stderr: Option<f64>,
    pub z: Option<f64>,
    /// Exact finite-N value, where available.
    pub exact: Option<f64>,
    /// z-score of the estimate against `exact`.
    pub z_exact: Option<f64>,
    pub replicas: usize,
    pub note: Option<String>,
}

impl QueryResult {
    pub fn passed(&self) -> bool {
        [self.z, self.z_exact].iter().flatten().all(|z| z.abs() <= Z_FAIL)
    }
}

/// A scalar statistic with an optional pass bar.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Statistic {
    pub name: String,
    pub value: f64,
    pub p_value: Option<f64>,
    pub pass: bool,
}

/// Wall-clock metadata, kept apart from the deterministic payload.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Runtime {
    pub seconds: f64,
    pub workers: usize,
    pub version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub queries: Vec<QueryResult>,
    pub statistics: Vec<Statistic>,
    pub runtime: Runtime,
}

#[derive(Serialize)]
struct Payload<'a> {
    experiment: &'a str,
    config_hash: &'a str,
    config: &'a serde_json::Value,
    queries: &'a [QueryResult],
    statistics: &'a [Statistic],
}

impl ExperimentReport {
    pub fn new(experiment: &str, config: &crate::harness::config::ExperimentConfig) -> Self {
        Self {
            experiment: experiment.into(),
            config_hash: config.hash(),
            config: serde_json::to_value(config).expect("config serialises"),
            queries: Vec::new(),
            statistics: Vec::new(),
            runtime: Runtime { version: env!("CARGO_PKG_VERSION").into(), ..Runtime::default() },
        }
    }

    /// True when every z-score and statistic passes.
    pub fn passed(&self) -> bool {
        self.queries.iter().all(QueryResult::passed) && self.statistics.iter().all(|s| s.pass)
    }

    /// Everything except runtime metadata; identical config and seed give
    /// identical bytes.
    pub fn payload_json(&self) -> String {
        serde_json::to_string_pretty(&Payload {
            experiment: &self.experiment,
            config_hash: &self.config_hash,
            config: &self.config,
            queries: &self.queries,
            statistics: &self.statistics,
        })
        .expect("report serialises")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// Writes `<dir>/<experiment>.json`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(format!("{}.json", self.experiment));
        write_file(&path, self.to_json().as_bytes())?;
        Ok(path)
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io { path: path.display().to_string(), msg: e.to_string() }
}

/// Creates parent directories and writes the bytes.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Serialises rows to CSV with a header and writes them to `path`.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_file(path, &csv_bytes(rows)?)
}

/// Rows as CSV bytes.
pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io { path: "<csv>".into(), msg: e.to_string() })?;
    }
    w.into_inner().map_err(|e| Error::Io { path: "<csv>".into(), msg: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ExperimentConfig;

    #[test]
    fn pass_rules() {
        let mut r = ExperimentReport::new("x", &ExperimentConfig::default());
        assert!(r.passed());
        r.queries.push(QueryResult { z: Some(3.5), ..Default::default() });
        assert!(r.passed());
        r.queries.push(QueryResult { z: Some(-4.5), ..Default::default() });
        assert!(!r.passed());
    }

    #[test]
    fn payload_excludes_runtime() {
        let mut a = ExperimentReport::new("x", &ExperimentConfig::default());
        let mut b = a.clone();
        a.runtime.seconds = 1.0;
        b.runtime.seconds = 2.0;
        assert_eq!(a.payload_json(), b.payload_json());
        assert_ne!(a.to_json(), b.to_json());
        let v: serde_json::Value = serde_json::from_str(&a.to_json()).unwrap();
        for key in ["config_hash", "queries", "statistics", "runtime"] {
            assert!(v.get(key).is_some());
        }
    }

    #[test]
    fn csv_has_header() {
        #[derive(Serialize)]
        struct Row {
            t: f64,
            x: f64,
            density: f64,
        }
        let b = csv_bytes(&[Row { t: 1.0, x: -0.5, density: 0.25 }]).unwrap();
        assert_eq!(String::from_utf8(b).unwrap(), "t,x,density\n1.0,-0.5,0.25\n");
    }
}
