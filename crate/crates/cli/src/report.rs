//! Campaign outputs: CSV tables for per-instance measurements and one JSON
//! aggregate per run.
//!
//! CSV content is a pure function of (config, seed) so reruns are byte
//! identical; everything environment-dependent (timestamp, versions) lives
//! only in the JSON aggregate.

use czvar::{Error, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, Serialize)]
pub struct CriterionOutcome {
    /// Stable identifier, e.g. "sparse.carleson".
    pub id: String,
    /// One sentence naming the invariant this criterion checks.
    pub certifies: String,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

impl CriterionOutcome {
    pub fn new(id: &str, certifies: &str, measured: f64, bound: f64) -> Self {
        CriterionOutcome {
            id: id.to_string(),
            certifies: certifies.to_string(),
            measured,
            bound,
            pass: measured <= bound,
        }
    }

    pub fn line(&self) -> String {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        format!(
            "{tag} {id}: measured {m} against bound {b}",
            id = self.id,
            m = fmt(self.measured),
            b = fmt(self.bound)
        )
    }
}

#[derive(Debug, Serialize)]
pub struct Aggregate {
    pub schema_version: u32,
    pub command: String,
    pub config_hash: String,
    pub core_version: String,
    pub cli_version: String,
    pub seed: u64,
    pub timestamp_epoch_secs: u64,
    pub instances: usize,
    pub instance_errors: usize,
    pub criteria: Vec<CriterionOutcome>,
}

impl Aggregate {
    pub fn new(command: &str, config_hash: u64, seed: u64, instances: usize) -> Self {
        let timestamp_epoch_secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Aggregate {
            schema_version: 1,
            command: command.to_string(),
            config_hash: format!("{config_hash:016x}"),
            core_version: czvar::VERSION.to_string(),
            cli_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            timestamp_epoch_secs,
            instances,
            instance_errors: 0,
            criteria: Vec::new(),
        }
    }

    pub fn all_pass(&self) -> bool {
        self.criteria.iter().all(|c| c.pass)
    }
}

/// Shortest round-trip decimal rendering; the fixed formatter keeps CSV
/// bytes independent of locale and environment.
pub fn fmt(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{v}")
    }
}

pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(RunDir { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        w.write_record(header)
            .and_then(|()| {
                for row in rows {
                    w.write_record(row)?;
                }
                w.flush().map_err(csv::Error::from)
            })
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn write_json(&self, name: &str, agg: &Aggregate) -> Result<PathBuf> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(agg)
            .map_err(|e| Error::Io(format!("aggregate serialization: {e}")))?;
        std::fs::write(&path, text + "\n")?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rendering_round_trips_and_is_stable() {
        assert_eq!(fmt(0.5), "0.5");
        assert_eq!(fmt(2.0), "2");
        assert_eq!(fmt(f64::INFINITY), "inf");
        let v = 1.0 / 3.0;
        assert_eq!(fmt(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn csv_reruns_are_byte_identical() {
        let dir = std::env::temp_dir().join("czvar-report-test");
        let run = RunDir::create(&dir).unwrap();
        let rows = vec![
            vec!["0".to_string(), fmt(1.0 / 3.0)],
            vec!["1".to_string(), fmt(2.0)],
        ];
        let p1 = run.write_csv("t.csv", &["idx", "value"], &rows).unwrap();
        let first = std::fs::read(&p1).unwrap();
        let p2 = run.write_csv("t.csv", &["idx", "value"], &rows).unwrap();
        let second = std::fs::read(&p2).unwrap();
        assert_eq!(first, second);
        assert!(std::str::from_utf8(&first).unwrap().starts_with("idx,value\n"));
    }

    #[test]
    fn outcome_lines_state_pass_or_fail() {
        let good = CriterionOutcome::new("a.b", "x stays below y", 1.0, 2.0);
        assert!(good.pass);
        assert!(good.line().starts_with("PASS a.b"));
        let bad = CriterionOutcome::new("a.c", "x stays below y", 3.0, 2.0);
        assert!(!bad.pass);
        assert!(bad.line().starts_with("FAIL a.c"));
    }
}
