//! Structured experiment reports: named verdicts with their tolerances and
//! oracles, provenance, and 12-significant-digit CSV tables.

use serde::Serialize;
use serde_json::Value;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{SystemTime, UNIX_EPOCH};

use pmorder_core::fmt_sig12;

/// One checked statement with the quantities that decide it.
#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    /// The measured quantity.
    pub value: f64,
    /// What it was compared against.
    pub threshold: f64,
    pub tolerance: f64,
    /// Which independent computation produced the threshold.
    pub oracle: String,
}

impl Verdict {
    /// `|value - threshold| <= tolerance`.
    pub fn close(name: &str, value: f64, threshold: f64, tolerance: f64, oracle: &str) -> Self {
        Self {
            name: name.into(),
            passed: (value - threshold).abs() <= tolerance,
            value,
            threshold,
            tolerance,
            oracle: oracle.into(),
        }
    }

    /// `value <= threshold + tolerance`.
    pub fn le(name: &str, value: f64, threshold: f64, tolerance: f64, oracle: &str) -> Self {
        Self {
            name: name.into(),
            passed: value <= threshold + tolerance,
            value,
            threshold,
            tolerance,
            oracle: oracle.into(),
        }
    }

    /// `value >= threshold - tolerance`.
    pub fn ge(name: &str, value: f64, threshold: f64, tolerance: f64, oracle: &str) -> Self {
        Self {
            name: name.into(),
            passed: value >= threshold - tolerance,
            value,
            threshold,
            tolerance,
            oracle: oracle.into(),
        }
    }

    /// A counter that must be zero (tolerance kept for uniformity).
    pub fn zero_count(name: &str, count: usize, oracle: &str) -> Self {
        Self {
            name: name.into(),
            passed: count == 0,
            value: count as f64,
            threshold: 0.0,
            tolerance: 0.0,
            oracle: oracle.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub git_hash: String,
    pub seed: u64,
    pub timestamp_unix: u64,
}

impl Provenance {
    pub fn collect(seed: u64) -> Self {
        let git_hash = Command::new("git")
            .args(["rev-parse", "--short=12", "HEAD"])
            .output()
            .ok()
            .filter(|o| o.status.success())
            .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
            .unwrap_or_else(|| "unknown".into());
        let timestamp_unix =
            SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Self { git_hash, seed, timestamp_unix }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub kind: String,
    /// Echo of the validated configuration.
    pub inputs: Value,
    /// Kind-specific computed quantities.
    pub results: Value,
    pub verdicts: Vec<Verdict>,
    pub provenance: Provenance,
}

impl ExperimentReport {
    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }
}

/// A CSV table to be written under `tables/`.
#[derive(Debug, Clone)]
pub struct CsvTable {
    pub name: String,
    pub content: String,
}

impl CsvTable {
    /// Builds a table from a header and rows of float cells, formatted with
    /// 12 significant digits and `\n` line endings.
    pub fn from_rows(name: &str, header: &str, rows: &[Vec<f64>]) -> Self {
        let mut content = String::from(header);
        content.push('\n');
        for row in rows {
            let cells: Vec<String> = row.iter().map(|v| fmt_sig12(*v)).collect();
            content.push_str(&cells.join(","));
            content.push('\n');
        }
        Self { name: name.into(), content }
    }
}

/// Everything a run produces.
#[derive(Debug)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub tables: Vec<CsvTable>,
}

/// Writes `report.json` and `tables/*.csv` under `out_dir`, returning the
/// report path.
pub fn write_outputs(out_dir: &Path, output: &ExperimentOutput) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let report_path = out_dir.join("report.json");
    let mut file = std::fs::File::create(&report_path)?;
    serde_json::to_writer_pretty(&mut file, &output.report)?;
    file.write_all(b"\n")?;
    if !output.tables.is_empty() {
        let tables_dir = out_dir.join("tables");
        std::fs::create_dir_all(&tables_dir)?;
        for table in &output.tables {
            std::fs::write(tables_dir.join(format!("{}.csv", table.name)), &table.content)?;
        }
    }
    Ok(report_path)
}
