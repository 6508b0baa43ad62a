//! CSV tables and run manifests.
//!
//! CSV: comma separated, header row, LF endings, floats as `{:.16e}`
//! (17 significant digits, lossless for f64).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::CliError;
use crate::scenario::Scenario;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        CsvTable {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        fs::write(path, self.render()).map_err(|e| CliError::io(path, e))
    }
}

/// Manifest: `#` header lines (tool, command, seed, sweep, timestamp) then the
/// resolved scenario as `key = value`, re-parseable as a scenario file.
pub fn render_manifest(scenario: &Scenario, command: &str, seed: Option<u64>, sweep: Option<&str>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# dd-crb run manifest");
    let _ = writeln!(out, "# tool = {} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "# command = {command}");
    match seed {
        Some(s) => {
            let _ = writeln!(out, "# seed = {s}");
        }
        None => {
            let _ = writeln!(out, "# seed = (scenario)");
        }
    }
    if let Some(s) = sweep {
        let _ = writeln!(out, "# sweep = {s}");
    }
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let _ = writeln!(out, "# generated_unix = {stamp}");
    for (k, v) in scenario.to_key_values() {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}
