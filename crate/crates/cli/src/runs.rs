// SPDX-License-Identifier: MIT OR Apache-2.0

//! Run directories: `<root>/<UTC timestamp>-<config hash prefix>/`.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::Serialize;

use crate::audit::{Artifacts, AuditReport};
use crate::error::{CliError, CliResult};
use crate::table::{render_table, Style};

pub const REPORT_JSON: &str = "report.json";

#[derive(Debug, Serialize)]
pub struct Timing {
    pub wall_seconds: f64,
    pub threads: usize,
    pub started: String,
}

pub fn run_dir_name(now: DateTime<Utc>, config_hash: &str) -> String {
    format!("{}-{}", now.format("%Y%m%dT%H%M%SZ"), &config_hash[..config_hash.len().min(12)])
}

fn write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::Runtime(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Creates a fresh directory under `root` and writes the report in every
/// style, the normalized config, timing and artifacts.
pub fn write_run(
    root: &Path,
    now: DateTime<Utc>,
    report: &AuditReport,
    artifacts: &Artifacts,
    timing: &Timing,
) -> CliResult<PathBuf> {
    let name = run_dir_name(now, &report.provenance.config_hash);
    let mut dir = root.join(&name);
    let mut n = 2;
    while dir.exists() {
        dir = root.join(format!("{name}-{n}"));
        n += 1;
    }
    fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    let config = serde_json::to_string_pretty(&report.provenance.config).expect("config serializes");
    write(&dir.join("config.json"), config.as_bytes())?;
    write(&dir.join(REPORT_JSON), render_table(report, Style::Json).as_bytes())?;
    write(&dir.join("report.csv"), render_table(report, Style::Csv).as_bytes())?;
    write(&dir.join("report.txt"), render_table(report, Style::Text).as_bytes())?;
    let timing = serde_json::to_string_pretty(timing).expect("timing serializes");
    write(&dir.join("timing.json"), timing.as_bytes())?;
    for (rel, text) in &artifacts.text {
        write(&dir.join(rel), text.as_bytes())?;
    }
    for (rel, bytes) in &artifacts.binary {
        write(&dir.join(rel), bytes)?;
    }
    Ok(dir)
}

pub fn read_report(run_dir: &Path) -> CliResult<AuditReport> {
    let path = run_dir.join(REPORT_JSON);
    let text = fs::read_to_string(&path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn directory_name() {
        let t = Utc.with_ymd_and_hms(2026, 3, 4, 5, 6, 7).unwrap();
        assert_eq!(run_dir_name(t, "abcdef0123456789"), "20260304T050607Z-abcdef012345");
    }
}
